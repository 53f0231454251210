"""Frequency focusing matrices for broadband subspace processing.

For every band of ``J`` adjacent bins the member bins are mapped onto the
band's highest bin ``w0`` by least squares over a dense direction grid::

    T(w, w0) = V(w0) pinv(V(w))

``V(f)`` is the ``Q x G`` array manifold expanded to a finite spherical
harmonic order (4 by default), i.e. the exact steering projected onto the
harmonics of that order.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .array import SOUND_SPEED, make_direction_grid, radial_function

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def manifold_matrix(geometry, grid, frequency, order=4, sound_speed=SOUND_SPEED):
    """Order-limited array manifold on ``grid``, shape ``(Q, G)``.

    ``v_q(d) = sum_{n<=order} b_n(k r_q) (2n+1)/(4 pi) P_n(cos angle(d_q, d))``,
    which equals ``sum_{n,m} b_n Y_n^m(d_q) conj(Y_n^m(d))`` by the addition
    theorem.
    """
    k = 2 * np.pi * frequency / sound_speed
    radii = geometry.mic_radii
    mic_u = np.divide(geometry.positions, radii[:, None], out=np.zeros_like(geometry.positions),
                      where=radii[:, None] > 0)
    cosg = np.clip(mic_u @ grid.unit_vectors.T, -1, 1)
    out = np.zeros(cosg.shape, dtype=complex)
    for n in range(order + 1):
        b = radial_function(n, k * radii, geometry.model)
        out += (b * (2 * n + 1) / (4 * np.pi))[:, None] * special.eval_legendre(n, cosg)
    return out


def pinv_svd(a, rcond=1e-8, floor=0.0):
    """Pseudo-inverse with a relative singular-value cutoff; also returns the rank.

    Singular values at or below ``rcond * max(s_max, floor)`` are discarded.
    A ``floor`` at the nominal size of the matrix lets a uniformly vanishing
    matrix register as rank 0.
    """
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    ref = max(s[0], floor) if s.size else 0.0
    keep = s > rcond * ref if s.size and s[0] > 0 else np.zeros(s.shape, bool)
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1 / s[keep]
    return (vh.conj().T * s_inv) @ u.conj().T, int(keep.sum())


def band_layout(bins, band_width=15):
    """Non-overlapping trailing bands covering ``bins``.

    Bands are laid out from the top of the range downwards; a remainder at
    the bottom narrower than ``band_width`` is dropped. Each band is returned
    as ``(center, members)`` with ``center == members[-1]``.
    """
    lo, hi = bins[0], bins[-1]
    bands = []
    center = hi
    while center - band_width + 1 >= lo:
        bands.append((center, list(range(center - band_width + 1, center + 1))))
        center -= band_width
    return bands[::-1]


@dataclass
class FocusingBand:
    center: int
    members: list
    matrices: np.ndarray  # (J, Q, Q)
    residuals: np.ndarray  # (J,)
    usable: bool = True


@dataclass
class FocusingSet:
    bands: list
    bin_freqs: np.ndarray
    grid_resolution_deg: float
    sh_order: int
    n_channels: int
    meta: dict = field(default_factory=dict)

    @property
    def max_residual(self):
        return max(float(b.residuals.max()) for b in self.bands if b.usable)

    def save(self, path):
        arrays = {"bin_freqs": self.bin_freqs,
                  "header": np.array([FORMAT_VERSION, self.sh_order, self.n_channels]),
                  "grid_resolution_deg": np.array(self.grid_resolution_deg)}
        for i, b in enumerate(self.bands):
            arrays[f"band{i}_members"] = np.asarray(b.members)
            arrays[f"band{i}_T"] = b.matrices
            arrays[f"band{i}_residuals"] = b.residuals
            arrays[f"band{i}_usable"] = np.array(b.usable)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            version, order, q = (int(v) for v in z["header"])
            if version != FORMAT_VERSION:
                raise ValueError(f"unsupported focusing file version {version}")
            bands = []
            i = 0
            while f"band{i}_T" in z:
                members = [int(m) for m in z[f"band{i}_members"]]
                bands.append(FocusingBand(members[-1], members, z[f"band{i}_T"],
                                          z[f"band{i}_residuals"], bool(z[f"band{i}_usable"])))
                i += 1
            return cls(bands, z["bin_freqs"], float(z["grid_resolution_deg"]), order, q)


def compute_focusing(geometry, bin_freqs, bins, band_width=15, sh_order=4, grid=None,
                     sound_speed=SOUND_SPEED, rcond=1e-8):
    """Focusing matrices for every band in the bin range ``bins``.

    Parameters
    ----------
    geometry : ArrayGeometry
    bin_freqs : array_like
        Frequency in Hz of every STFT bin.
    bins : sequence of int
        Analysis bin indices (contiguous).
    band_width : int
        Bins per band (``J``).
    grid : DirectionGrid, optional
        Least-squares grid; 6 degree spiral by default.
    """
    bin_freqs = np.asarray(bin_freqs, dtype=float)
    grid = grid if grid is not None else make_direction_grid(6.0)
    q = geometry.n_channels
    if len(grid) < q:
        raise ValueError(f"grid has {len(grid)} directions, fewer than {q} channels")
    bands = []
    cache = {}

    def manifold(b):
        if b not in cache:
            cache[b] = manifold_matrix(geometry, grid, bin_freqs[b], sh_order, sound_speed)
        return cache[b]

    for center, members in band_layout(bins, band_width):
        if bin_freqs[members[0]] <= 0:
            raise ValueError("bands must not include the DC bin")
        v0 = manifold(center)
        norm0 = np.linalg.norm(v0)
        mats = np.empty((len(members), q, q), dtype=complex)
        res = np.empty(len(members))
        usable = True
        for j, w in enumerate(members):
            v = manifold(w)
            # a unit-modulus manifold row has norm sqrt(G)
            p, rank = pinv_svd(v, rcond, np.sqrt(len(grid)))
            if rank == 0:
                usable = False
                mats[j] = 0
                res[j] = np.inf
                continue
            mats[j] = v0 @ p
            res[j] = np.linalg.norm(mats[j] @ v - v0) / norm0
        if not usable:
            logger.warning("band centred at bin %d has collapsed rank; flagged unusable", center)
        bands.append(FocusingBand(center, members, mats, res, usable))
        cache.clear()
    return FocusingSet(bands, bin_freqs, grid.resolution_deg, sh_order, q)


def identity_focusing(n_channels, bin_freqs, bins, band_width=15):
    """A focusing set of identity matrices (no focusing)."""
    bands = [FocusingBand(c, m, np.broadcast_to(np.eye(n_channels, dtype=complex),
                                                (len(m), n_channels, n_channels)).copy(),
                          np.zeros(len(m)))
             for c, m in band_layout(bins, band_width)]
    return FocusingSet(bands, np.asarray(bin_freqs), None, 0, n_channels)


def apply_focusing(spec, fset):
    """Focus every member bin of every band onto its band centre.

    Returns ``(focused, active)``: a spectrogram of the same shape and a
    boolean mask over bins that belong to a usable band. Inactive bins are
    passed through unchanged.
    """
    if spec.n_channels != fset.n_channels:
        raise ValueError(f"spectrogram has {spec.n_channels} channels, focusing set expects "
                         f"{fset.n_channels}")
    out = spec.data.copy()
    active = np.zeros(spec.n_bins, dtype=bool)
    for band in fset.bands:
        if not band.usable:
            continue
        if band.members[-1] >= spec.n_bins:
            raise ValueError("focusing band outside spectrogram bins")
        x = spec.data[:, :, band.members]  # (Q, T, J)
        out[:, :, band.members] = np.einsum("jqr,rtj->qtj", band.matrices, x)
        active[band.members] = True
    return spec.replace(out), active
