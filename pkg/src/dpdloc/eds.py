"""Direct-path dominance test on SH-domain plane-wave coefficients.

For each TF bin the local correlation of the PWD coefficients is formed, its
dominant eigenvector ``u1`` is compared against the (unit-normalised) SH
steering vectors ``y*(d)``, and the bin scores
``max_d 1 / ||(I - u1 u1^H) y*(d)||^2``. Bins scoring in the top fraction
pass, and the maximising direction is their DOA estimate.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .array import sh_matrix
from .mddpd import BinEstimates, effective_rank, select_top_fraction

logger = logging.getLogger(__name__)

SCORE_CAP = 1e12
RESIDUAL_FLOOR = 1e-12
DEGENERATE_RTOL = 1e-9
LOW_THRESHOLD_WARN = 10.0


def local_correlation(a, n_frames_avg=2, n_bins_avg=15):
    """Mean of trailing outer products over ``J_tau`` frames and ``J_omega`` bins.

    Parameters
    ----------
    a : ndarray, shape (C, T, F)
        PWD coefficients over the analysis bins.

    Returns
    -------
    ndarray, shape (T - J_tau + 1, F - J_omega + 1, C, C)
        Entry ``[t, f]`` belongs to frame ``t + J_tau - 1`` and bin
        ``f + J_omega - 1`` of the input.
    """
    c, t, f = a.shape
    n_t = t - n_frames_avg + 1
    n_f = f - n_bins_avg + 1
    if n_t < 1 or n_f < 1:
        return np.zeros((max(n_t, 0), max(n_f, 0), c, c), dtype=complex)
    outer = np.einsum("ctf,dtf->tfcd", a, a.conj())
    acc = outer[:n_t].copy()
    for j in range(1, n_frames_avg):
        acc += outer[j:j + n_t]
    csum = np.cumsum(acc, axis=1)
    out = csum[:, n_bins_avg - 1:].copy()
    out[:, 1:] -= csum[:, :n_f - 1]
    return out / (n_frames_avg * n_bins_avg)


def dominant_eigenvector(s):
    """Unit eigenvector of the largest eigenvalue (batched).

    The phase is fixed so the largest-magnitude entry is real and positive.
    Returns ``(u1, degenerate)``; ``degenerate`` flags zero matrices and those
    whose top eigenvalue is repeated to within ``1e-9`` relative.
    """
    w, v = np.linalg.eigh(s)
    u = v[..., :, -1]
    l1 = w[..., -1]
    l2 = w[..., -2] if w.shape[-1] > 1 else np.zeros_like(l1)
    degenerate = (l1 <= 0) | (l1 - l2 <= DEGENERATE_RTOL * np.abs(l1))
    idx = np.argmax(np.abs(u), axis=-1)
    pivot = np.take_along_axis(u, idx[..., None], axis=-1)
    phase = np.where(np.abs(pivot) > 0, np.conj(pivot) / np.abs(pivot), 1)
    return u * phase, degenerate


def normalized_sh_steering(order, grid):
    """Columns ``y*(d) / ||y*(d)||`` on the grid, shape ``((N+1)**2, G)``."""
    y = np.conj(sh_matrix(order, grid.azimuth, grid.elevation)).T
    return y / np.linalg.norm(y, axis=0, keepdims=True)


def real_steering_factor(steering):
    """Split SH steering columns as ``steering = basis @ real``.

    ``basis`` is unitary and ``real`` is a real matrix (real spherical
    harmonics up to normalisation), so inner products against the grid cost
    two real products instead of one complex one.
    """
    c, g = steering.shape
    n = int(round(np.sqrt(c))) - 1
    if (n + 1) ** 2 != c:
        raise ValueError("steering rows must be a full SH order")
    real = np.empty((c, g))
    for order in range(n + 1):
        base = order * order + order
        real[base] = np.conj(steering[base]).real
        for m in range(1, order + 1):
            ym = np.conj(steering[base + m])
            real[base + m] = np.sqrt(2) * (-1) ** m * ym.real
            real[base - m] = np.sqrt(2) * (-1) ** m * ym.imag
    basis = np.linalg.lstsq(real.T, steering.T, rcond=None)[0].T
    return basis, real


def eds_measure(u1, steering, chunk=256, basis=None):
    """EDS score and maximising grid index for each dominant eigenvector.

    ``u1`` has shape ``(..., C)``; ``steering`` is ``(C, G)`` with unit
    columns. The projection residual is ``1 - |u1^H y|^2`` (both unit norm),
    floored at ``1e-12``. With ``basis`` given, ``steering`` is the real
    factor from :func:`real_steering_factor`.
    """
    if steering.shape[1] == 0:
        raise ValueError("empty direction grid")
    lead = u1.shape[:-1]
    flat = u1.reshape(-1, u1.shape[-1])
    if basis is not None:
        flat = flat @ basis.conj()  # coordinates in the real basis
    scores = np.empty(flat.shape[0])
    best = np.empty(flat.shape[0], dtype=int)
    for i in range(0, flat.shape[0], chunk):
        block = flat[i:i + chunk]
        if basis is not None:
            c = (block.real @ steering) ** 2 + (block.imag @ steering) ** 2
        else:
            ip = block.conj() @ steering
            c = ip.real ** 2 + ip.imag ** 2
        j = np.argmax(c, axis=1)
        r = 1 - c[np.arange(len(j)), j]
        scores[i:i + chunk] = 1 / np.maximum(r, RESIDUAL_FLOOR)
        best[i:i + chunk] = j
    return scores.reshape(lead), best.reshape(lead)


def eds_spectrum(u1, steering):
    """The full map ``1 / ||P_perp y*(d)||^2`` over the grid for one ``u1``."""
    proj = steering - np.outer(u1, u1.conj() @ steering)
    r = np.sum(np.abs(proj) ** 2, axis=0)
    return 1 / np.maximum(r, RESIDUAL_FLOOR)


def eds_select(scores, pass_fraction=0.025):
    """Top-fraction selection; warns when the resulting threshold is not >> 1."""
    keep, threshold = select_top_fraction(scores, pass_fraction)
    if len(keep) and threshold <= LOW_THRESHOLD_WARN:
        logger.warning("EDS threshold %.3g is not much greater than 1", threshold)
    return keep, threshold


@dataclass
class EdsResult:
    estimates: BinEstimates
    threshold: float
    n_active: int
    n_degenerate: int
    scores: np.ndarray  # (frames, bins); NaN where inactive
    first_frame: int
    first_bin: int
    effective_ranks: np.ndarray = None


def run_eds(pwd, bins, grid, n_frames_avg=2, n_bins_avg=15, pass_fraction=0.025,
            frame_chunk=48, with_effective_rank=False):
    """Score every fully supported bin in ``bins``, select, and read off DOAs."""
    lo, hi = bins[0], bins[-1] + 1
    a = pwd.data[:, :, lo:hi]
    basis, real = real_steering_factor(normalized_sh_steering(pwd.order, grid))
    n_t = a.shape[1] - n_frames_avg + 1
    n_f = a.shape[2] - n_bins_avg + 1
    if n_t < 1 or n_f < 1:
        raise ValueError("not enough frames or bins for the local correlation window")
    scores = np.full((n_t, n_f), np.nan)
    best = np.zeros((n_t, n_f), dtype=int)
    ranks = []
    for t0 in range(0, n_t, frame_chunk):
        t1 = min(n_t, t0 + frame_chunk)
        s = local_correlation(a[:, t0:t1 + n_frames_avg - 1], n_frames_avg, n_bins_avg)
        u1, degenerate = dominant_eigenvector(s)
        sc, bi = eds_measure(u1, real, basis=basis)
        scores[t0:t1] = np.where(degenerate, np.nan, sc)
        best[t0:t1] = bi
        if with_effective_rank:
            ranks.append(effective_rank(s[~degenerate]))
    active = ~np.isnan(scores)
    flat_active = np.flatnonzero(active)
    keep_local, threshold = eds_select(scores.ravel()[flat_active], pass_fraction)
    keep = flat_active[keep_local]
    t_idx, f_idx = np.unravel_index(keep, scores.shape)
    g = best.ravel()[keep]
    first_frame = n_frames_avg - 1
    first_bin = lo + n_bins_avg - 1
    est = BinEstimates(t_idx + first_frame, f_idx + first_bin, scores.ravel()[keep],
                       grid.azimuth[g], grid.elevation[g])
    n_active = int(active.sum())
    return EdsResult(est, threshold, n_active, int(active.size - n_active), scores, first_frame,
                     first_bin, np.concatenate(ranks) if with_effective_rank else None)
