"""Array geometry, spherical harmonics and steering models.

Conventions
-----------
Directions are ``(azimuth, elevation)`` pairs in radians, azimuth in
``[0, 2*pi)`` measured from the +x axis towards +y, elevation in
``[-pi/2, pi/2]`` measured from the xy-plane. Spherical-harmonic math uses
the inclination ``pi/2 - elevation``.

Spherical harmonics are the orthonormal complex functions with the
Condon-Shortley phase, ordered ``(0,0), (1,-1), (1,0), (1,1), ...``.

Time convention is ``exp(+i omega t)``: a far-field plane wave arriving from
unit direction ``u`` is observed at position ``r`` as ``exp(+i k r.u)``. This
matches ``numpy.fft.rfft`` applied to time-advanced signals, so the simulator
and the estimators share one sign. Outgoing scattered waves then use the
spherical Hankel function of the second kind, ``h_n = j_n - i y_n``.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple

import numpy as np
from scipy import special

SOUND_SPEED = 343.0
MAX_SH_ORDER = 10

# below this kr the rigid-sphere term uses its small-argument form
_KR_SMALL = 1e-6


class Direction(NamedTuple):
    """A direction of arrival in radians."""

    azimuth: float
    elevation: float

    @classmethod
    def from_degrees(cls, azimuth_deg, elevation_deg):
        return cls(math.radians(azimuth_deg) % (2 * math.pi), math.radians(elevation_deg))

    def to_degrees(self):
        return math.degrees(self.azimuth), math.degrees(self.elevation)

    def unit_vector(self):
        return unit_vector(self.azimuth, self.elevation)


def unit_vector(azimuth, elevation):
    """Cartesian unit vectors, shape ``(..., 3)``."""
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    ce = np.cos(elevation)
    return np.stack([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)], axis=-1)


def cart_to_direction(xyz):
    """Inverse of :func:`unit_vector`; returns ``(azimuth, elevation)`` arrays.

    Input vectors need not be normalised.
    """
    xyz = np.asarray(xyz, dtype=float)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    azimuth = np.mod(np.arctan2(y, x), 2 * np.pi)
    elevation = np.arctan2(z, np.hypot(x, y))
    return azimuth, elevation


def angular_distance(az1, el1, az2, el2):
    """Great-circle angle in radians between two (arrays of) directions."""
    u1 = unit_vector(az1, el1)
    u2 = unit_vector(az2, el2)
    # atan2 form stays accurate for nearly parallel vectors
    cross = np.linalg.norm(np.cross(u1, u2), axis=-1)
    dot = np.sum(u1 * u2, axis=-1)
    return np.arctan2(cross, dot)


# ---------------------------------------------------------------------------
# Spherical harmonics
# ---------------------------------------------------------------------------

def sh_index(order):
    """The ``(n, m)`` pairs of all harmonics up to ``order`` in channel order."""
    n = np.concatenate([np.full(2 * k + 1, k) for k in range(order + 1)])
    m = np.concatenate([np.arange(-k, k + 1) for k in range(order + 1)])
    return n, m


def sph_harmonic(n, m, azimuth, elevation):
    """Orthonormal complex spherical harmonic ``Y_n^m`` (Condon-Shortley phase).

    Parameters
    ----------
    n, m : int
        Order and degree, ``0 <= n <= MAX_SH_ORDER`` and ``|m| <= n``.
    azimuth, elevation : float or array_like
        Evaluation directions in radians.
    """
    if int(n) != n or int(m) != m:
        raise ValueError(f"order and degree must be integers, got ({n}, {m})")
    if n < 0 or abs(m) > n:
        raise ValueError(f"invalid spherical harmonic index (n={n}, m={m})")
    if n > MAX_SH_ORDER:
        raise ValueError(f"order {n} exceeds supported maximum {MAX_SH_ORDER}")
    inclination = np.pi / 2 - np.asarray(elevation, dtype=float)
    return special.sph_harm_y(int(n), int(m), inclination, np.asarray(azimuth, dtype=float))


def sh_matrix(order, azimuth, elevation):
    """Harmonics up to ``order`` at each direction, shape ``(G, (order+1)**2)``."""
    if order < 0 or order > MAX_SH_ORDER:
        raise ValueError(f"order must be in [0, {MAX_SH_ORDER}], got {order}")
    azimuth = np.atleast_1d(np.asarray(azimuth, dtype=float))
    elevation = np.atleast_1d(np.asarray(elevation, dtype=float))
    n, m = sh_index(order)
    inclination = np.pi / 2 - elevation
    return special.sph_harm_y(n[None, :], m[None, :], inclination[:, None], azimuth[:, None])


def sh_steering(order, direction):
    """The vector ``y(d) = [Y_0^0(d), Y_1^-1(d), ..., Y_N^N(d)]``."""
    if order < 0:
        raise ValueError("order must be non-negative")
    az, el = direction
    return sh_matrix(order, az, el)[0]


# ---------------------------------------------------------------------------
# Radial functions
# ---------------------------------------------------------------------------

def spherical_hankel2(n, x, derivative=False):
    """Spherical Hankel function of the second kind ``j_n - i y_n``."""
    return (special.spherical_jn(n, x, derivative=derivative)
            - 1j * special.spherical_yn(n, x, derivative=derivative))


def radial_function(n, kr, model="open"):
    """Modal strength ``b_n(kr)`` of an open or rigid-sphere array.

    ``open``: ``4 pi i^n j_n(kr)``.
    ``rigid``: ``4 pi i^n [j_n(kr) - j_n'(kr) / h_n'(kr) * h_n(kr)]``.

    At ``kr -> 0`` the rigid term tends to ``(2n+1)/(n+1) j_n(kr)``, which is
    used below ``kr = 1e-6`` where ``y_n`` overflows.
    """
    n = np.asarray(n)
    kr = np.asarray(kr, dtype=float)
    if np.any(kr < 0):
        raise ValueError("kr must be non-negative")
    if model not in ("open", "rigid"):
        raise ValueError(f"unknown array model {model!r}")
    n, kr = np.broadcast_arrays(n, kr)
    jn = special.spherical_jn(n, kr)
    if model == "open":
        out = jn.astype(complex)
    else:
        small = kr < _KR_SMALL
        safe = np.where(small, 1.0, kr)
        jd = special.spherical_jn(n, safe, derivative=True)
        h = spherical_hankel2(n, safe)
        hd = spherical_hankel2(n, safe, derivative=True)
        out = jn - jd / hd * h
        out = np.where(small, (2 * n + 1) / (n + 1) * jn, out)
    out = 4 * np.pi * (1j ** n) * out
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

@dataclass
class ArrayGeometry:
    """Microphone positions (meters) and acoustic model.

    ``model`` is ``"open"`` (free-field omnis) or ``"rigid"`` (omnis flush
    mounted on a rigid sphere of ``radius`` centred at the origin).
    """

    positions: np.ndarray
    model: str = "open"
    radius: float = None
    label: str = ""

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must have shape (Q, 3)")
        if self.positions.shape[0] < 1:
            raise ValueError("geometry needs at least one microphone")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if self.model not in ("open", "rigid"):
            raise ValueError(f"unknown array model {self.model!r}")
        if self.model == "rigid":
            if self.radius is None or self.radius <= 0:
                raise ValueError("rigid sphere model needs a positive radius")
            dist = np.linalg.norm(self.positions, axis=1)
            if np.any(np.abs(dist - self.radius) > 1e-6):
                raise ValueError("rigid sphere microphones must lie on the sphere surface")

    @property
    def n_channels(self):
        return self.positions.shape[0]

    @property
    def mic_directions(self):
        return cart_to_direction(self.positions)

    @property
    def mic_radii(self):
        return np.linalg.norm(self.positions, axis=1)

    def to_dict(self):
        out = {"label": self.label, "model": self.model}
        if self.model == "rigid":
            out["radius_m"] = float(self.radius)
        out["positions_m"] = self.positions.tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(positions=d["positions_m"], model=d.get("model", "open"),
                   radius=d.get("radius_m"), label=d.get("label", ""))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


PRESETS = ("eigenmike32", "nao12")


def load_preset(name):
    """Bundled layouts: ``eigenmike32`` (rigid, r = 4.2 cm) and ``nao12`` (open)."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("dpdloc.presets").joinpath(f"{name}.json").read_text()
    return ArrayGeometry.from_dict(json.loads(text))


def resolve_geometry(spec):
    """Preset name or path to a geometry file."""
    if isinstance(spec, ArrayGeometry):
        return spec
    if spec in PRESETS:
        return load_preset(spec)
    return ArrayGeometry.load(spec)


# ---------------------------------------------------------------------------
# Steering
# ---------------------------------------------------------------------------

def rigid_truncation_order(kr):
    return int(math.ceil(kr)) + 2


def steering_matrix(geometry, azimuth, elevation, frequency, sound_speed=SOUND_SPEED,
                    truncation=None):
    """Array response to unit plane waves from each direction, shape ``(Q, G)``.

    The rigid-sphere response is the series
    ``sum_n b_n(kr) sum_m Y_n^m(d_q) conj(Y_n^m(d))`` truncated at
    ``ceil(kr) + 2`` unless ``truncation`` is given; the inner sum over ``m`` is
    evaluated in closed form via the addition theorem.
    """
    if frequency <= 0:
        raise ValueError("frequency must be positive")
    k = 2 * np.pi * frequency / sound_speed
    u = unit_vector(np.atleast_1d(azimuth), np.atleast_1d(elevation))
    if geometry.model == "open":
        return np.exp(1j * k * (geometry.positions @ u.T))
    kr = k * geometry.radius
    order = rigid_truncation_order(kr) if truncation is None else truncation
    mic_u = geometry.positions / geometry.mic_radii[:, None]
    cosg = np.clip(mic_u @ u.T, -1.0, 1.0)
    b = radial_function(np.arange(order + 1), kr, "rigid")
    out = np.zeros(cosg.shape, dtype=complex)
    for n in range(order + 1):
        out += b[n] * (2 * n + 1) / (4 * np.pi) * special.eval_legendre(n, cosg)
    return out


def steering_vector(geometry, direction, frequency, sound_speed=SOUND_SPEED):
    """Steering vector (length ``Q``) for one direction."""
    az, el = direction
    return steering_matrix(geometry, az, el, frequency, sound_speed)[:, 0]


# ---------------------------------------------------------------------------
# Direction grids
# ---------------------------------------------------------------------------

_FULL_SPHERE_DEG2 = 4 * np.pi * (180 / np.pi) ** 2  # ~41253


@dataclass
class DirectionGrid:
    azimuth: np.ndarray
    elevation: np.ndarray
    resolution_deg: float = field(default=None)

    def __len__(self):
        return len(self.azimuth)

    def __getitem__(self, i):
        return Direction(float(self.azimuth[i]), float(self.elevation[i]))

    @property
    def unit_vectors(self):
        return unit_vector(self.azimuth, self.elevation)

    def nearest(self, direction):
        """Index of the grid point closest to ``direction``."""
        return int(np.argmax(self.unit_vectors @ unit_vector(*direction)))


def make_direction_grid(resolution_deg=2.0):
    """Near-uniform Fibonacci-spiral sampling of the sphere.

    The number of points is ``round(41253 / resolution_deg**2)``, i.e. one
    point per ``resolution_deg x resolution_deg`` patch of solid angle.
    """
    if not 0.5 <= resolution_deg <= 20:
        raise ValueError(f"grid resolution must be in [0.5, 20] degrees, got {resolution_deg}")
    g = int(round(_FULL_SPHERE_DEG2 / resolution_deg ** 2))
    i = np.arange(g)
    z = 1 - (2 * i + 1) / g
    golden = np.pi * (3 - np.sqrt(5))
    azimuth = np.mod(i * golden, 2 * np.pi)
    elevation = np.arcsin(z)
    return DirectionGrid(azimuth, elevation, float(resolution_deg))
