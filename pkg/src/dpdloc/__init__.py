"""Broadband DOA estimation with direct-path dominance tests.

Two pipelines share one front end and one fusion stage:

* ``md-dpd``: microphone-domain focusing, frequency smoothing, eigenvalue
  ratio test and one-source MUSIC (any array).
* ``dpd-eds``: spherical-harmonic plane-wave decomposition and a
  dominant-eigenvector test (rigid spherical arrays).
"""

from .aggregate import (LocalizationResult, SphericalKMeans, assemble_result, bias_correct,
                        kmeans_sphere)
from .array import ArrayGeometry, Direction, DirectionGrid, load_preset, make_direction_grid
from .config import ConfigError, PipelineConfig
from .eds import run_eds
from .estimators import (DPDEDSLocalizer, FocusingTransformer, MDDPDLocalizer,
                         PlaneWaveDecomposition, STFTTransformer, make_localizer)
from .focusing import compute_focusing
from .io import read_wav, write_wav
from .mddpd import run_md_dpd
from .pwd import plane_wave_decomposition
from .sim import Reflection, SceneSpec, simulate, speechlike_signal
from .tf import MultichannelSignal, Spectrogram, stft

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "ConfigError", "DPDEDSLocalizer", "Direction", "DirectionGrid",
    "FocusingTransformer", "LocalizationResult", "MDDPDLocalizer", "MultichannelSignal",
    "PipelineConfig", "PlaneWaveDecomposition", "Reflection", "STFTTransformer", "SceneSpec",
    "Spectrogram", "SphericalKMeans", "assemble_result", "bias_correct", "compute_focusing",
    "kmeans_sphere", "load_preset", "make_direction_grid", "make_localizer",
    "plane_wave_decomposition", "read_wav", "run_eds", "run_md_dpd", "simulate",
    "speechlike_signal", "stft", "write_wav",
]
