"""Command line front end: ``dpdloc simulate | localize | diagnose``.

Exit codes: 0 success, 1 processing failure, 2 invalid input.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from .aggregate import scatter_histogram, write_scatter_csv
from .array import resolve_geometry
from .config import ConfigError, PipelineConfig
from .diagnostics import diagnose
from .estimators import make_localizer
from .io import read_wav, write_truth, write_wav
from .sim import scene_from_dict, simulate

logger = logging.getLogger("dpdloc")

EXIT_OK, EXIT_FAILURE, EXIT_INVALID = 0, 1, 2


class InputError(Exception):
    pass


def _config(args):
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    updates = {}
    if args.pipeline:
        updates["pipeline"] = args.pipeline
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "n_sources", None) is not None:
        updates["n_sources"] = args.n_sources
    return dataclasses.replace(cfg, **updates).resolved()


def _geometry(args):
    if not args.geometry:
        raise InputError("--geometry is required")
    try:
        return resolve_geometry(args.geometry)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load geometry {args.geometry!r}: {exc}") from exc


def _recording(path, geometry):
    try:
        sig = read_wav(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if sig.n_channels != geometry.n_channels:
        raise InputError(f"{path} has {sig.n_channels} channels but the geometry has "
                         f"{geometry.n_channels} microphones")
    return sig


def _check_pipeline(cfg, geometry):
    if cfg.pipeline == "dpd-eds":
        if geometry.model != "rigid":
            raise InputError("the dpd-eds pipeline needs a rigid-sphere geometry")
        needed = (cfg.pwd_sh_order + 1) ** 2
        if needed > geometry.n_channels:
            raise InputError(f"SH order {cfg.pwd_sh_order} needs {needed} microphones, "
                             f"geometry has {geometry.n_channels}")


def _log_to(out_dir):
    handler = logging.FileHandler(os.path.join(out_dir, "run.log"), mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    return handler


def cmd_simulate(args):
    try:
        with open(args.scene) as f:
            d = json.load(f)
        if args.seed is not None:
            d["seed"] = args.seed
        if args.geometry:
            d["geometry"] = args.geometry
        scene = scene_from_dict(d)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot load scene {args.scene}: {exc}") from exc
    sig = simulate(scene)
    os.makedirs(args.out_dir, exist_ok=True)
    wav = os.path.join(args.out_dir, "recording.wav")
    write_wav(wav, sig)
    write_truth(os.path.join(args.out_dir, "truth.json"), [d for d, _ in scene.sources],
                {"geometry": scene.geometry.label, "n_channels": scene.geometry.n_channels,
                 "sample_rate_hz": scene.sample_rate, "seed": scene.seed,
                 "duration_s": sig.duration})
    print(f"wrote {wav} ({sig.n_channels} channels, {sig.duration:.3f} s)")
    return EXIT_OK


def cmd_localize(args):
    cfg = _config(args)
    geometry = _geometry(args)
    sig = _recording(args.recording, geometry)
    _check_pipeline(cfg, geometry)
    os.makedirs(args.out_dir, exist_ok=True)
    handler = _log_to(args.out_dir)
    try:
        logger.info("config %s", json.dumps(cfg.to_dict(), sort_keys=True))
        overrides = {}
        if cfg.pipeline == "md-dpd":
            overrides["focusing_cache"] = args.focusing_cache
        est = make_localizer(cfg, geometry, **overrides)
        try:
            est.fit(sig.samples, sample_rate=sig.sample_rate)
        except ValueError as exc:
            logger.error("%s", exc)
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        est.result_.parameters["geometry"] = args.geometry
        stage = est.stage_result_
        logger.info("threshold %.17g; %d of %d active bins selected", est.threshold_,
                    len(est.bin_estimates_), est.n_active_bins_)
        if cfg.pipeline == "md-dpd":
            for band in est.focusing_set_.bands:
                logger.info("band %.2f Hz: max focusing residual %.6f%s",
                            est.focusing_set_.bin_freqs[band.center], band.residuals.max(),
                            "" if band.usable else " (unusable)")
        else:
            logger.info("%d degenerate bins excluded", stage.n_degenerate)
        est.result_.to_csv(os.path.join(args.out_dir, "result.csv"))
        est.result_.to_json(os.path.join(args.out_dir, "result.json"))
        bins = est.bin_estimates_
        write_scatter_csv(os.path.join(args.out_dir, "scatter.csv"),
                          scatter_histogram(np.degrees(bins.azimuth), np.degrees(bins.elevation)))
        for sid, az, el in est.result_.sources:
            logger.info("source %d: azimuth %.3f deg, elevation %.3f deg", sid, az, el)
            print(f"source {sid}: azimuth {az:.2f} deg, elevation {el:.2f} deg")
    finally:
        logger.removeHandler(handler)
        handler.close()
    return EXIT_OK


def cmd_diagnose(args):
    cfg = _config(args)
    geometry = _geometry(args)
    sig = _recording(args.recording, geometry)
    _check_pipeline(cfg, geometry)
    report = diagnose(sig, geometry, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "diagnostics.json")
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    print(f"{report['pipeline']}: threshold {report['threshold']:.6g}, "
          f"{report['n_selected']} of {report['n_active']} bins selected, "
          f"median effective rank {report['effective_rank'].get('quantiles', {}).get('0.5', 'n/a')}")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dpdloc", description="Direct-path dominance DOA estimation")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("recording", help="multichannel WAV file")
        sp.add_argument("--geometry", help="preset name (eigenmike32, nao12) or geometry JSON")
        sp.add_argument("--config", help="pipeline config JSON")
        sp.add_argument("--pipeline", choices=("md-dpd", "dpd-eds"))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", default=".")
        sp.add_argument("--n-sources", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("simulate", help="synthesise a scene")
    s.add_argument("scene", help="scene JSON")
    s.add_argument("--geometry", help="override the scene's geometry")
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_simulate)

    loc = sub.add_parser("localize", help="estimate source directions")
    common(loc)
    loc.add_argument("--focusing-cache", help="npz file to load/store focusing matrices")
    loc.set_defaults(func=cmd_localize)

    d = sub.add_parser("diagnose", help="score, rank and threshold diagnostics")
    common(d)
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
