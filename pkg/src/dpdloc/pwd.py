"""Plane-wave decomposition of rigid-sphere recordings in the SH domain."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .array import SOUND_SPEED, radial_function, sh_matrix

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e6
# slack on the kr <= N rule; c = 343 m/s is itself only good to ~0.5 %
ORDER_LIMIT_SLACK = 0.01


@dataclass
class PwdSpectrogram:
    """SH-domain coefficients, shape ``((N+1)**2, frames, bins)``."""

    data: np.ndarray
    order: int
    frame_times: np.ndarray
    bin_freqs: np.ndarray
    hop: int
    sample_rate: float

    def __post_init__(self):
        if self.data.shape[0] != (self.order + 1) ** 2:
            raise ValueError("coefficient count does not match order")


def sh_encoder(geometry, order=3):
    """Least-squares SH transform matrix ``pinv(Y_mics)``, shape ``((N+1)**2, Q)``."""
    n_coef = (order + 1) ** 2
    q = geometry.n_channels
    if n_coef > q:
        raise ValueError(f"order {order} needs {n_coef} microphones, array has {q}")
    y = sh_matrix(order, *geometry.mic_directions)
    cond = np.linalg.cond(y)
    if cond > MAX_CONDITION:
        raise ValueError(f"microphone SH matrix is ill-conditioned (cond = {cond:.3g})")
    return np.linalg.pinv(y)


def sh_transform(spec, geometry, order=3):
    """Pressure spectrogram -> SH pressure coefficients ``p_nm``.

    Returns an array of shape ``((N+1)**2, frames, bins)``.
    """
    if spec.n_channels != geometry.n_channels:
        raise ValueError(f"spectrogram has {spec.n_channels} channels, geometry {geometry.n_channels}")
    enc = sh_encoder(geometry, order)
    return np.einsum("cq,qtf->ctf", enc, spec.data)


def equalizer_gains(bin_freqs, radius, order=3, reg=0.01, sound_speed=SOUND_SPEED):
    """Regularised inverse radial filters, shape ``(N+1, bins)``.

    ``conj(b_n) / (|b_n|**2 + reg**2 * max_n |b_n|**2)`` per frequency; zero
    where the denominator vanishes (``reg = 0`` at a null of ``b_n``).
    """
    if reg < 0:
        raise ValueError("regularisation must be non-negative")
    kr = 2 * np.pi * np.asarray(bin_freqs, dtype=float) / sound_speed * radius
    b = radial_function(np.arange(order + 1)[:, None], kr[None, :], "rigid")
    mag2 = np.abs(b) ** 2
    denom = mag2 + reg ** 2 * mag2.max(axis=0, keepdims=True)
    out = np.zeros_like(b)
    np.divide(np.conj(b), denom, out=out, where=denom > 0)
    return out


def rpwd_equalize(p_nm, bin_freqs, geometry, order=3, reg=0.01, sound_speed=SOUND_SPEED):
    """Divide out the rigid-sphere modal strength with Tikhonov-style flooring."""
    gains = equalizer_gains(bin_freqs, geometry.radius, order, reg, sound_speed)
    n = np.concatenate([np.full(2 * k + 1, k) for k in range(order + 1)])
    return p_nm * gains[n][:, None, :]


def plane_wave_decomposition(spec, geometry, order=3, reg=0.01, sound_speed=SOUND_SPEED):
    p_nm = sh_transform(spec, geometry, order)
    a_nm = rpwd_equalize(p_nm, spec.bin_freqs, geometry, order, reg, sound_speed)
    return PwdSpectrogram(a_nm, order, spec.frame_times, spec.bin_freqs, spec.hop,
                          spec.sample_rate)


def order_limit_check(frequency, radius, order, sound_speed=SOUND_SPEED):
    """Classify a frequency against the ``N = ceil(kr)`` order-limit rule.

    Returns ``"pass"``, ``"aliasing"`` (kr above N: higher orders leak in) or
    ``"low_kr"`` (kr below N/2: radial nulls amplify noise).
    """
    kr = 2 * math.pi * frequency / sound_speed * radius
    if math.ceil(kr - ORDER_LIMIT_SLACK) > order:
        return "aliasing"
    if kr < order / 2:
        return "low_kr"
    return "pass"


def order_limit_report(bin_freqs, radius, order, sound_speed=SOUND_SPEED):
    """Frequency spans flagged by :func:`order_limit_check`, for logging."""
    report = {"aliasing": [], "low_kr": []}
    for f in bin_freqs:
        status = order_limit_check(f, radius, order, sound_speed)
        if status != "pass":
            report[status].append(float(f))
    return {k: (min(v), max(v), len(v)) for k, v in report.items() if v}
