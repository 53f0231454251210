"""Estimator-style wrappers (fit / transform / predict) around both pipelines.

The localizers take a multichannel recording and produce a
:class:`~dpdloc.aggregate.LocalizationResult`. ``fit`` runs the full chain
and keeps the intermediate products as fitted attributes; ``predict`` runs
the chain on another recording while reusing recording-independent state
(focusing matrices, steering grids).
"""

import logging
import os

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .aggregate import assemble_result, kmeans_sphere
from .array import SOUND_SPEED, make_direction_grid, resolve_geometry
from .config import PIPELINE_DEFAULTS, PipelineConfig
from .eds import run_eds
from .focusing import FocusingSet, apply_focusing, band_layout, compute_focusing
from .mddpd import run_md_dpd
from .pwd import order_limit_report, plane_wave_decomposition
from .tf import band_select, resample, stft
from .validation import check_fraction, check_geometry, check_signal, check_spectrogram

logger = logging.getLogger(__name__)


class STFTTransformer(TransformerMixin, BaseEstimator):
    """Recording -> :class:`~dpdloc.tf.Spectrogram`, resampling first if needed."""

    def __init__(self, sample_rate_hz=16000.0, window_len=512, overlap=0.5):
        self.sample_rate_hz = sample_rate_hz
        self.window_len = window_len
        self.overlap = overlap

    def fit(self, X, y=None):
        return self

    def transform(self, X, sample_rate=None):
        sig = check_signal(X, sample_rate if sample_rate is not None else self.sample_rate_hz)
        sig = resample(sig, self.sample_rate_hz)
        return stft(sig, self.window_len, self.overlap)


class FocusingTransformer(TransformerMixin, BaseEstimator):
    """Learns focusing matrices for a band range and applies them.

    ``fit`` only needs the bin frequencies, so ``X`` may be a spectrogram or
    a 1-D array of frequencies in Hz.
    """

    def __init__(self, geometry=None, freq_min_hz=400.0, freq_max_hz=4000.0, band_width=15,
                 sh_order=4, grid_resolution_deg=6.0, sound_speed_mps=SOUND_SPEED):
        self.geometry = geometry
        self.freq_min_hz = freq_min_hz
        self.freq_max_hz = freq_max_hz
        self.band_width = band_width
        self.sh_order = sh_order
        self.grid_resolution_deg = grid_resolution_deg
        self.sound_speed_mps = sound_speed_mps

    def fit(self, X, y=None):
        geometry = check_geometry(resolve_geometry(self.geometry))
        freqs = X.bin_freqs if hasattr(X, "bin_freqs") else np.asarray(X, dtype=float)
        bins = band_select(freqs, self.freq_min_hz, self.freq_max_hz)
        self.focusing_set_ = compute_focusing(
            geometry, freqs, bins, self.band_width, self.sh_order,
            make_direction_grid(self.grid_resolution_deg), self.sound_speed_mps)
        return self

    def transform(self, X):
        check_is_fitted(self, "focusing_set_")
        spec = check_spectrogram(X, self.focusing_set_.n_channels)
        focused, _ = apply_focusing(spec, self.focusing_set_)
        return focused


class PlaneWaveDecomposition(TransformerMixin, BaseEstimator):
    """Rigid-sphere spectrogram -> regularised plane-wave coefficients."""

    def __init__(self, geometry=None, order=3, regularization=0.01, sound_speed_mps=SOUND_SPEED):
        self.geometry = geometry
        self.order = order
        self.regularization = regularization
        self.sound_speed_mps = sound_speed_mps

    def fit(self, X=None, y=None):
        check_geometry(resolve_geometry(self.geometry), "rigid")
        return self

    def transform(self, X):
        geometry = check_geometry(resolve_geometry(self.geometry), "rigid")
        spec = check_spectrogram(X, geometry.n_channels)
        return plane_wave_decomposition(spec, geometry, self.order, self.regularization,
                                        self.sound_speed_mps)


class _Localizer(BaseEstimator):
    """Shared front end, fusion and bookkeeping of both pipelines."""

    pipeline = None

    def _frontend(self, X, sample_rate):
        geometry = check_geometry(resolve_geometry(self.geometry))
        sig = check_signal(X, sample_rate if sample_rate is not None else self.sample_rate_hz,
                           geometry.n_channels)
        sig = resample(sig, self.sample_rate_hz)
        spec = stft(sig, self.window_len, self.overlap)
        return geometry, sig, spec

    def _freq_range(self):
        d = PIPELINE_DEFAULTS[self.pipeline]
        lo = self.freq_min_hz if self.freq_min_hz is not None else d["freq_min_hz"]
        hi = self.freq_max_hz if self.freq_max_hz is not None else d["freq_max_hz"]
        return lo, hi

    def _option(self, name):
        value = getattr(self, name)
        return PIPELINE_DEFAULTS[self.pipeline][name] if value is None else value

    def _fuse(self, est, duration):
        if len(est) < self.n_sources:
            raise ValueError(f"only {len(est)} bins passed the test; cannot form "
                             f"{self.n_sources} clusters")
        centers, labels, _ = kmeans_sphere(np.column_stack([est.azimuth, est.elevation]),
                                           self.n_sources, self.seed)
        sizes = np.bincount(labels, minlength=self.n_sources)
        hop = max(1, int(round(self.window_len * (1 - self.overlap))))
        frame_rate = self.output_frame_rate_hz or self.sample_rate_hz / hop
        result = assemble_result(centers, sizes, duration, frame_rate, self._option("apply_bias"),
                                 self.bias_az_deg, self.bias_el_deg, self.pipeline,
                                 self.get_params(deep=False) | {"geometry": self._geometry_label()})
        return centers, labels, sizes, frame_rate, result

    def _geometry_label(self):
        g = self.geometry
        if isinstance(g, (str, os.PathLike)):
            return str(g)
        return getattr(g, "label", "")

    def fit(self, X, y=None, sample_rate=None):
        out = self._run(X, sample_rate, fitting=True)
        (self.spectrogram_shape_, self.bin_estimates_, self.threshold_, self.n_active_bins_,
         self.cluster_centers_, self.labels_, self.cluster_sizes_, self.duration_, self.frame_rate_,
         self.result_, self.stage_result_) = out
        self.source_directions_ = np.array([(np.radians(a), np.radians(e))
                                            for _, a, e in self.result_.sources])
        return self

    def predict(self, X, sample_rate=None):
        """Localize the sources in another recording, reusing fitted state."""
        check_is_fitted(self, "result_")
        return self._run(X, sample_rate, fitting=False)[9]

    def fit_predict(self, X, y=None, sample_rate=None):
        return self.fit(X, sample_rate=sample_rate).result_

    @classmethod
    def from_config(cls, config, geometry, **overrides):
        cfg = config.resolved() if isinstance(config, PipelineConfig) else config
        if cfg.pipeline != cls.pipeline:
            raise ValueError(f"config is for {cfg.pipeline!r}, estimator runs {cls.pipeline!r}")
        names = cls._get_param_names()
        params = {k: v for k, v in cfg.to_dict().items() if k in names}
        params["geometry"] = geometry
        params.update(overrides)
        return cls(**params)


class MDDPDLocalizer(_Localizer):
    """Microphone-domain pipeline: focusing, frequency smoothing, eigenvalue
    ratio test, one-source MUSIC on passing bins, spherical k-means.

    Works with open and rigid-sphere geometries.
    """

    pipeline = "md-dpd"

    def __init__(self, geometry=None, n_sources=1, sample_rate_hz=16000.0, window_len=512,
                 overlap=0.5, frames_avg=3, bins_avg=15, focusing_sh_order=4, freq_min_hz=None,
                 freq_max_hz=None, pass_fraction=0.05, grid_resolution_deg=2.0,
                 focusing_grid_resolution_deg=6.0, apply_bias=False, bias_az_deg=8.0,
                 bias_el_deg=-5.0, sound_speed_mps=SOUND_SPEED, output_frame_rate_hz=None, seed=0,
                 focusing_cache=None, with_effective_rank=False):
        self.geometry = geometry
        self.n_sources = n_sources
        self.sample_rate_hz = sample_rate_hz
        self.window_len = window_len
        self.overlap = overlap
        self.frames_avg = frames_avg
        self.bins_avg = bins_avg
        self.focusing_sh_order = focusing_sh_order
        self.freq_min_hz = freq_min_hz
        self.freq_max_hz = freq_max_hz
        self.pass_fraction = pass_fraction
        self.grid_resolution_deg = grid_resolution_deg
        self.focusing_grid_resolution_deg = focusing_grid_resolution_deg
        self.apply_bias = apply_bias
        self.bias_az_deg = bias_az_deg
        self.bias_el_deg = bias_el_deg
        self.sound_speed_mps = sound_speed_mps
        self.output_frame_rate_hz = output_frame_rate_hz
        self.seed = seed
        self.focusing_cache = focusing_cache
        self.with_effective_rank = with_effective_rank

    def _focusing(self, geometry, spec, bins):
        fset = getattr(self, "focusing_set_", None)
        if fset is not None and _matches(fset, spec, bins, self):
            return fset
        path = self.focusing_cache
        if path and os.path.exists(path):
            cached = FocusingSet.load(path)
            if _matches(cached, spec, bins, self):
                logger.info("loaded focusing matrices from %s", path)
                return cached
            logger.info("focusing cache %s does not match this run; recomputing", path)
        fset = compute_focusing(geometry, spec.bin_freqs, bins, self.bins_avg,
                                self.focusing_sh_order,
                                make_direction_grid(self.focusing_grid_resolution_deg),
                                self.sound_speed_mps)
        if path:
            fset.save(path)
        return fset

    def _run(self, X, sample_rate, fitting):
        check_fraction(self._option("pass_fraction"))
        geometry, sig, spec = self._frontend(X, sample_rate)
        bins = band_select(spec, *self._freq_range())
        fset = self._focusing(geometry, spec, bins)
        if fitting:
            self.focusing_set_ = fset
        grid = _grid(self)
        res = run_md_dpd(spec, geometry, fset, grid, self._option("frames_avg"),
                         self._option("pass_fraction"), self.sound_speed_mps,
                         self.with_effective_rank)
        logger.info("md-dpd: %d active bins, %d selected, threshold %.6g, max focusing "
                    "residual %.4g", res.n_active, len(res.estimates), res.threshold,
                    fset.max_residual)
        centers, labels, sizes, rate, result = self._fuse(res.estimates, sig.duration)
        return (spec.data.shape, res.estimates, res.threshold, res.n_active, centers, labels,
                sizes, sig.duration, rate, result, res)


class DPDEDSLocalizer(_Localizer):
    """Spherical-harmonics pipeline: SH transform, regularised radial
    equalisation, dominant-eigenvector test, spherical k-means.

    Requires a rigid-sphere geometry with at least ``(order + 1)**2`` microphones.
    """

    pipeline = "dpd-eds"

    def __init__(self, geometry=None, n_sources=1, sample_rate_hz=16000.0, window_len=512,
                 overlap=0.5, frames_avg=2, bins_avg=15, pwd_sh_order=3, pwd_regularization=0.01,
                 freq_min_hz=None, freq_max_hz=None, pass_fraction=0.025, grid_resolution_deg=2.0,
                 apply_bias=True, bias_az_deg=8.0, bias_el_deg=-5.0, sound_speed_mps=SOUND_SPEED,
                 output_frame_rate_hz=None, seed=0, with_effective_rank=False):
        self.geometry = geometry
        self.n_sources = n_sources
        self.sample_rate_hz = sample_rate_hz
        self.window_len = window_len
        self.overlap = overlap
        self.frames_avg = frames_avg
        self.bins_avg = bins_avg
        self.pwd_sh_order = pwd_sh_order
        self.pwd_regularization = pwd_regularization
        self.freq_min_hz = freq_min_hz
        self.freq_max_hz = freq_max_hz
        self.pass_fraction = pass_fraction
        self.grid_resolution_deg = grid_resolution_deg
        self.apply_bias = apply_bias
        self.bias_az_deg = bias_az_deg
        self.bias_el_deg = bias_el_deg
        self.sound_speed_mps = sound_speed_mps
        self.output_frame_rate_hz = output_frame_rate_hz
        self.seed = seed
        self.with_effective_rank = with_effective_rank

    def _run(self, X, sample_rate, fitting):
        check_fraction(self._option("pass_fraction"))
        geometry, sig, spec = self._frontend(X, sample_rate)
        check_geometry(geometry, "rigid")
        bins = band_select(spec, *self._freq_range())
        flagged = order_limit_report(spec.bin_freqs[bins[0]:bins[-1] + 1], geometry.radius,
                                     self.pwd_sh_order, self.sound_speed_mps)
        for status, (lo, hi, n) in flagged.items():
            logger.warning("order limit %s: %d bins in %.1f-%.1f Hz", status, n, lo, hi)
        pwd = plane_wave_decomposition(spec, geometry, self.pwd_sh_order, self.pwd_regularization,
                                       self.sound_speed_mps)
        res = run_eds(pwd, bins, _grid(self), self._option("frames_avg"), self.bins_avg,
                      self._option("pass_fraction"),
                      with_effective_rank=self.with_effective_rank)
        res.order_limit = flagged
        logger.info("dpd-eds: %d active bins (%d degenerate excluded), %d selected, "
                    "threshold %.6g", res.n_active, res.n_degenerate, len(res.estimates),
                    res.threshold)
        centers, labels, sizes, rate, result = self._fuse(res.estimates, sig.duration)
        return (spec.data.shape, res.estimates, res.threshold, res.n_active, centers, labels,
                sizes, sig.duration, rate, result, res)


LOCALIZERS = {"md-dpd": MDDPDLocalizer, "dpd-eds": DPDEDSLocalizer}


def make_localizer(config, geometry, **overrides):
    """The localizer for ``config.pipeline``, parameterised from ``config``."""
    cfg = config.resolved()
    return LOCALIZERS[cfg.pipeline].from_config(cfg, geometry, **overrides)


_GRIDS = {}


def _grid(est):
    # the 2 degree grid has ~10k points; build it once per resolution
    res = float(est.grid_resolution_deg)
    if res not in _GRIDS:
        _GRIDS[res] = make_direction_grid(res)
    return _GRIDS[res]


def _matches(fset, spec, bins, est):
    layout = band_layout(bins, est.bins_avg)
    return (fset.n_channels == spec.n_channels
            and fset.sh_order == est.focusing_sh_order
            and len(fset.bin_freqs) == len(spec.bin_freqs)
            and np.allclose(fset.bin_freqs, spec.bin_freqs)
            and fset.grid_resolution_deg == est.focusing_grid_resolution_deg
            and [(b.center, list(b.members)) for b in fset.bands] == layout)
