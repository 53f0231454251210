"""Operator diagnostics: score distributions, effective rank, pass-rate curve."""

import numpy as np

from .array import make_direction_grid
from .eds import run_eds
from .focusing import compute_focusing
from .mddpd import run_md_dpd, select_top_fraction
from .pwd import order_limit_report, plane_wave_decomposition
from .tf import band_select, resample, stft

SCORE_EDGES_LOG10 = np.arange(0.0, 12.5, 0.5)
RATE_CURVE_FRACTIONS = (0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.2, 0.5, 1.0)
QUANTILES = (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0)


def score_histogram(scores):
    """Counts of ``log10(score)`` in half-decade bins from 1 to 1e12."""
    s = np.log10(np.clip(np.asarray(scores, dtype=float), 1.0, None))
    counts, _ = np.histogram(s, bins=SCORE_EDGES_LOG10)
    return {"log10_edges": SCORE_EDGES_LOG10.tolist(), "counts": counts.tolist()}


def pass_rate_curve(scores, fractions=RATE_CURVE_FRACTIONS):
    """Threshold produced by the top-fraction rule for a range of fractions."""
    out = []
    for f in fractions:
        keep, threshold = select_top_fraction(scores, f)
        out.append({"pass_fraction": f, "threshold": threshold, "n_selected": len(keep)})
    return out


def rank_summary(ranks, n_dims):
    ranks = np.asarray(ranks, dtype=float)
    if ranks.size == 0:
        return {"count": 0}
    edges = np.arange(1.0, n_dims + 0.25, 0.25)
    counts, _ = np.histogram(ranks, bins=edges)
    return {"count": int(ranks.size),
            "quantiles": {f"{q:g}": float(np.quantile(ranks, q)) for q in QUANTILES},
            "edges": edges.tolist(), "counts": counts.tolist()}


def diagnose(sig, geometry, config, grid=None, fset=None):
    """Run the configured test stage and summarise it.

    ``config`` must be resolved. Returns a JSON-serialisable dict. Clustering
    is not run, so a recording where nothing passes still gets a report.
    """
    sig = resample(sig, config.sample_rate_hz)
    spec = stft(sig, config.window_len, config.overlap)
    bins = band_select(spec, config.freq_min_hz, config.freq_max_hz)
    grid = grid if grid is not None else make_direction_grid(config.grid_resolution_deg)
    report = {"pipeline": config.pipeline, "n_channels": geometry.n_channels,
              "duration_s": sig.duration, "n_frames": spec.n_frames,
              "analysis_hz": [float(spec.bin_freqs[bins[0]]), float(spec.bin_freqs[bins[-1]])]}
    if config.pipeline == "md-dpd":
        if fset is None:
            fset = compute_focusing(geometry, spec.bin_freqs, bins, config.bins_avg,
                                    config.focusing_sh_order,
                                    make_direction_grid(config.focusing_grid_resolution_deg),
                                    config.sound_speed_mps)
        res = run_md_dpd(spec, geometry, fset, grid, config.frames_avg, config.pass_fraction,
                         config.sound_speed_mps, with_effective_rank=True)
        scores = res.scores.ravel()
        report["focusing_bands"] = [
            {"center_hz": float(spec.bin_freqs[b.center]), "max_residual": float(b.residuals.max()),
             "usable": b.usable} for b in fset.bands]
        n_dims = geometry.n_channels
    else:
        report["order_limit"] = {k: {"min_hz": v[0], "max_hz": v[1], "n_bins": v[2]}
                                 for k, v in order_limit_report(
                                     spec.bin_freqs[bins[0]:bins[-1] + 1], geometry.radius,
                                     config.pwd_sh_order, config.sound_speed_mps).items()}
        pwd = plane_wave_decomposition(spec, geometry, config.pwd_sh_order,
                                       config.pwd_regularization, config.sound_speed_mps)
        res = run_eds(pwd, bins, grid, config.frames_avg, config.bins_avg, config.pass_fraction,
                      with_effective_rank=True)
        scores = res.scores[~np.isnan(res.scores)]
        report["n_degenerate"] = res.n_degenerate
        n_dims = (config.pwd_sh_order + 1) ** 2
    report.update({
        "n_active": int(res.n_active),
        "n_selected": len(res.estimates),
        "pass_fraction": config.pass_fraction,
        "threshold": res.threshold,
        "fraction_scores_above_100": float(np.mean(scores > 100)) if scores.size else 0.0,
        "score_histogram": score_histogram(scores),
        "pass_rate_curve": pass_rate_curve(scores),
        "effective_rank": rank_summary(res.effective_ranks, n_dims),
    })
    return report
