"""Input checks shared by the estimators and the CLI."""

import numpy as np

from .array import ArrayGeometry
from .tf import MultichannelSignal, Spectrogram


def check_signal(X, sample_rate=None, n_channels=None):
    """Coerce ``X`` to a :class:`MultichannelSignal`.

    ``X`` may already be one, or a ``(Q, S)`` array together with
    ``sample_rate``.
    """
    if isinstance(X, MultichannelSignal):
        sig = X
    else:
        if sample_rate is None:
            raise ValueError("sample_rate is required when X is a plain array")
        arr = np.asarray(X, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"expected a (channels, samples) array, got shape {arr.shape}")
        sig = MultichannelSignal(arr, sample_rate)
    if n_channels is not None and sig.n_channels != n_channels:
        raise ValueError(f"signal has {sig.n_channels} channels but geometry has {n_channels}")
    return sig


def check_spectrogram(X, n_channels=None):
    if not isinstance(X, Spectrogram):
        raise TypeError(f"expected a Spectrogram, got {type(X).__name__}")
    if n_channels is not None and X.n_channels != n_channels:
        raise ValueError(f"spectrogram has {X.n_channels} channels but geometry has {n_channels}")
    return X


def check_geometry(geometry, model=None):
    if not isinstance(geometry, ArrayGeometry):
        raise TypeError(f"expected an ArrayGeometry, got {type(geometry).__name__}")
    if model is not None and geometry.model != model:
        raise ValueError(f"this estimator needs a {model!r} array, got {geometry.model!r}")
    return geometry


def check_fraction(value, name="pass_fraction"):
    if not 0 <= value <= 1:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return value
