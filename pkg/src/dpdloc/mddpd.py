"""Microphone-domain direct-path dominance (MD-DPD) estimation.

Chain: focused STFT -> trailing time average of outer products -> trailing
frequency sum over a focusing band -> ratio of the two largest eigenvalues
-> keep the top fraction of bins -> one-dimensional-signal-subspace MUSIC on
each kept bin.
"""

import math
from dataclasses import dataclass

import numpy as np

from .array import SOUND_SPEED, steering_matrix
from .focusing import apply_focusing

RATIO_CAP = 1e12
RESIDUAL_FLOOR = 1e-12


@dataclass
class BinEstimates:
    """Per-bin test scores and direction estimates of the bins that passed.

    ``frames`` and ``bins`` index the STFT grid; ``azimuth``/``elevation`` are
    radians.
    """

    frames: np.ndarray
    bins: np.ndarray
    scores: np.ndarray
    azimuth: np.ndarray
    elevation: np.ndarray

    def __len__(self):
        return len(self.frames)

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(z.astype(int), z.astype(int), z, z, z)


def local_cross_spectrum(x, n_frames_avg=3):
    """Trailing time average of outer products.

    Parameters
    ----------
    x : ndarray, shape (Q, T, F)
        (Focused) STFT coefficients.
    n_frames_avg : int
        Number of frames ``J_tau`` averaged.

    Returns
    -------
    ndarray, shape (T - J_tau + 1, F, Q, Q)
        Entry ``t`` corresponds to frame ``t + J_tau - 1``; earlier frames
        lack history and are inactive.
    """
    q, t, f = x.shape
    if t < n_frames_avg:
        return np.zeros((0, f, q, q), dtype=complex)
    outer = np.einsum("qtf,rtf->tfqr", x, x.conj())
    n_out = t - n_frames_avg + 1
    acc = outer[:n_out].copy()
    for j in range(1, n_frames_avg):
        acc += outer[j:j + n_out]
    return acc / n_frames_avg


def frequency_smooth(s, axis=1):
    """Trailing sum (not mean) over the band members along ``axis``."""
    return np.sum(s, axis=axis)


def eig_ratio(s, cap=RATIO_CAP):
    """``lambda_1 / lambda_2`` of Hermitian matrices (batched over leading axes).

    A numerically rank-one matrix (``lambda_2 <= lambda_1 / cap``) scores
    ``cap``; the zero matrix scores 1.
    """
    s = np.asarray(s)
    if s.shape[-1] < 2:
        raise ValueError("eigenvalue ratio needs at least 2 channels")
    w = np.linalg.eigvalsh(s)
    l1 = w[..., -1]
    l2 = w[..., -2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(l2 <= l1 / cap, cap, l1 / l2)
    ratio = np.where(l1 <= 0, 1.0, ratio)
    return ratio[()] if ratio.ndim == 0 else ratio


def select_top_fraction(scores, fraction):
    """Keep the ``ceil(fraction * count)`` highest scores.

    ``scores`` may be any shape; ties are broken by row-major position, which
    for a ``(frame, bin)`` array is lexicographic ``(tau, omega)`` order.

    Returns
    -------
    keep : ndarray of int
        Flat indices of kept entries in descending-score order.
    threshold : float
        Score of the last kept entry (``inf`` if nothing is kept).
    """
    if not 0 <= fraction <= 1:
        raise ValueError("pass fraction must be in [0, 1]")
    flat = np.asarray(scores, dtype=float).ravel()
    n_keep = math.ceil(round(fraction * flat.size, 9))
    order = np.lexsort((np.arange(flat.size), -flat))
    keep = order[:n_keep]
    threshold = float(flat[keep[-1]]) if n_keep else math.inf
    return keep, threshold


def md_dpd_select(scores, pass_fraction=0.05):
    return select_top_fraction(scores, pass_fraction)


def music_spectrum(s, steering, chunk=64):
    """MUSIC pseudo-spectrum with a one-dimensional signal subspace.

    The noise subspace is spanned by left singular vectors ``2..Q`` of each
    matrix. ``steering`` is ``(Q, G)``; columns are unit-normalised here.

    Returns an array of shape ``(..., G)``.
    """
    s = np.asarray(s)
    if steering.shape[1] == 0:
        raise ValueError("empty direction grid")
    lead = s.shape[:-2]
    flat = s.reshape((-1,) + s.shape[-2:])
    v = steering / np.linalg.norm(steering, axis=0, keepdims=True)
    out = np.empty((flat.shape[0], v.shape[1]))
    for i in range(0, flat.shape[0], chunk):
        u, _, _ = np.linalg.svd(flat[i:i + chunk])
        noise = u[:, :, 1:]
        proj = np.conj(np.swapaxes(noise, 1, 2)) @ v
        r = np.sum(proj.real ** 2 + proj.imag ** 2, axis=1)
        out[i:i + chunk] = 1 / np.maximum(r, RESIDUAL_FLOOR)
    return out.reshape(lead + (v.shape[1],))


def music_single_source(s, steering):
    """Grid argmax of the MUSIC spectrum: ``(grid index, peak value)``."""
    p = music_spectrum(s, steering)
    i = int(np.argmax(p))
    return i, float(p[i])


def effective_rank(s):
    """``exp`` of the Shannon entropy of the normalised singular values."""
    sv = np.linalg.svd(np.asarray(s), compute_uv=False)
    total = sv.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("effective rank of a zero matrix is undefined")
    p = sv / total
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=-1)
    return np.exp(h)


@dataclass
class MdDpdResult:
    estimates: BinEstimates
    threshold: float
    n_active: int
    band_centers: np.ndarray
    scores: np.ndarray  # (frames, bands), frame t + J_tau - 1
    first_frame: int
    effective_ranks: np.ndarray = None


def smoothed_cross_spectra(focused, fset, n_frames_avg=3):
    """Smoothed focused cross-spectra for every usable band.

    Returns ``(centers, S)`` with ``S`` of shape ``(T - J_tau + 1, B, Q, Q)``.
    """
    centers, mats = [], []
    for band in fset.bands:
        if not band.usable:
            continue
        s = local_cross_spectrum(focused[:, :, band.members], n_frames_avg)
        mats.append(frequency_smooth(s, axis=1))
        centers.append(band.center)
    if not mats:
        raise ValueError("no usable focusing band")
    return np.array(centers), np.stack(mats, axis=1)


def run_md_dpd(spec, geometry, fset, grid, n_frames_avg=3, pass_fraction=0.05,
               sound_speed=SOUND_SPEED, with_effective_rank=False):
    """Run the whole microphone-domain chain on one spectrogram."""
    focused, _ = apply_focusing(spec, fset)
    centers, smoothed = smoothed_cross_spectra(focused.data, fset, n_frames_avg)
    scores = eig_ratio(smoothed)
    keep, threshold = md_dpd_select(scores, pass_fraction)
    frame_idx, band_idx = np.unravel_index(keep, scores.shape)
    azimuth = np.empty(len(keep))
    elevation = np.empty(len(keep))
    for b in np.unique(band_idx):
        sel = np.flatnonzero(band_idx == b)
        steer = steering_matrix(geometry, grid.azimuth, grid.elevation,
                                spec.bin_freqs[centers[b]], sound_speed)
        p = music_spectrum(smoothed[frame_idx[sel], b], steer)
        best = np.argmax(p, axis=1)
        azimuth[sel] = grid.azimuth[best]
        elevation[sel] = grid.elevation[best]
    first = n_frames_avg - 1
    est = BinEstimates(frame_idx + first, centers[band_idx], scores.ravel()[keep], azimuth,
                       elevation)
    ranks = None
    if with_effective_rank:
        nonzero = np.trace(smoothed, axis1=-2, axis2=-1).real > 0
        ranks = effective_rank(smoothed[nonzero])
    return MdDpdResult(est, threshold, scores.size, centers, scores, first, ranks)
