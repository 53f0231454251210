"""Fusion of per-bin DOA estimates into per-source directions."""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .array import cart_to_direction, unit_vector


def _as_unit(directions):
    """``(N, 2)`` radians ``(azimuth, elevation)`` -> ``(N, 3)`` unit vectors."""
    d = np.asarray(directions, dtype=float)
    if d.ndim != 2 or d.shape[1] not in (2, 3):
        raise ValueError("directions must be (N, 2) angles or (N, 3) vectors")
    if d.shape[1] == 3:
        return d / np.linalg.norm(d, axis=1, keepdims=True)
    return unit_vector(d[:, 0], d[:, 1])


def _angles(x, centers):
    return np.arccos(np.clip(x @ centers.T, -1.0, 1.0))


def _normalized_mean(x):
    m = x.sum(axis=0)
    norm = np.linalg.norm(m)
    return m / norm if norm > 0 else x[0]


def _kmeans_pp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min(_angles(x, np.array(centers)), axis=1) ** 2
        total = d2.sum()
        if total <= 0:
            centers.append(x[int(np.argmax(d2))])
            continue
        centers.append(x[rng.choice(len(x), p=d2 / total)])
    return np.array(centers)


def kmeans_sphere(directions, n_clusters, seed=0, max_iter=100):
    """Spherical k-means with geodesic assignment and normalised-mean centroids.

    Parameters
    ----------
    directions : array_like, shape (N, 2) or (N, 3)
        Radians ``(azimuth, elevation)`` or Cartesian vectors.
    n_clusters : int
    seed : int
        Seed of the k-means++ initialisation.

    Returns
    -------
    centers : ndarray, shape (K, 3)
        Unit centroid vectors.
    labels : ndarray, shape (N,)
    n_iter : int
        Number of iterations in which at least one assignment changed.
    """
    x = _as_unit(directions)
    if len(x) == 0:
        raise ValueError("no directions to cluster")
    if not 1 <= n_clusters <= len(x):
        raise ValueError(f"n_clusters must be in [1, {len(x)}], got {n_clusters}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, n_clusters, rng)
    labels = np.full(len(x), -1)
    n_iter = 0
    for _ in range(max_iter):
        new = np.argmin(_angles(x, centers), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        n_iter += 1
        for k in range(n_clusters):
            members = labels == k
            if members.any():
                centers[k] = _normalized_mean(x[members])
            else:
                # reseed at the point farthest from its own centroid
                far = int(np.argmax(np.min(_angles(x, centers), axis=1)))
                centers[k] = x[far]
    return centers, labels, n_iter


class SphericalKMeans(ClusterMixin, BaseEstimator):
    """Estimator wrapper of :func:`kmeans_sphere`.

    ``fit`` accepts ``(N, 2)`` radians or ``(N, 3)`` vectors. After fitting,
    ``cluster_centers_`` holds unit vectors and ``cluster_directions_`` the
    same centres as ``(azimuth, elevation)`` radians.
    """

    def __init__(self, n_clusters=1, random_state=0, max_iter=100):
        self.n_clusters = n_clusters
        self.random_state = random_state
        self.max_iter = max_iter

    def fit(self, X, y=None):
        centers, labels, n_iter = kmeans_sphere(X, self.n_clusters, self.random_state,
                                                self.max_iter)
        self.cluster_centers_ = centers
        self.labels_ = labels
        self.n_iter_ = n_iter
        az, el = cart_to_direction(centers)
        self.cluster_directions_ = np.column_stack([az, el])
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        return np.argmin(_angles(_as_unit(X), self.cluster_centers_), axis=1)

    def inertia(self, X):
        """Total geodesic distance of points to their assigned centres."""
        check_is_fitted(self, "cluster_centers_")
        x = _as_unit(X)
        return float(np.min(_angles(x, self.cluster_centers_), axis=1).sum())


def bias_correct(azimuth_deg, elevation_deg, bias_az_deg=8.0, bias_el_deg=-5.0):
    """Subtract a constant angular bias; wraps azimuth, clamps elevation."""
    az = np.mod(np.asarray(azimuth_deg, dtype=float) - bias_az_deg, 360.0)
    el = np.clip(np.asarray(elevation_deg, dtype=float) - bias_el_deg, -90.0, 90.0)
    if az.ndim == 0:
        return float(az), float(el)
    return az, el


AZ_EDGES = np.arange(0, 361, 5)
EL_EDGES = np.arange(-90, 91, 5)


def scatter_histogram(azimuth_deg, elevation_deg):
    """Counts on a fixed 5 x 5 degree (azimuth x elevation) grid, shape (72, 36)."""
    az = np.mod(np.asarray(azimuth_deg, dtype=float), 360.0)
    el = np.clip(np.asarray(elevation_deg, dtype=float), -90.0, 90.0)
    hist, _, _ = np.histogram2d(az, el, bins=[AZ_EDGES, EL_EDGES])
    return hist.astype(int)


def write_scatter_csv(path, hist):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["azimuth_deg\\elevation_deg"] + [f"{e:g}" for e in EL_EDGES[:-1]])
        for a, row in zip(AZ_EDGES[:-1], hist):
            w.writerow([f"{a:g}"] + [str(int(v)) for v in row])


@dataclass
class LocalizationResult:
    """Stationary per-source DOAs replicated over output timestamps.

    ``sources`` rows are ``(source_id, azimuth_deg, elevation_deg)``.
    """

    sources: list
    timestamps: np.ndarray
    pipeline: str = ""
    parameters: dict = field(default_factory=dict)

    def rows(self):
        for t in self.timestamps:
            for sid, az, el in self.sources:
                yield float(t), sid, az, el

    def __len__(self):
        return len(self.sources) * len(self.timestamps)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["timestamp_s", "source_id", "azimuth_deg", "elevation_deg"])
            for t, sid, az, el in self.rows():
                w.writerow([f"{t:.6f}", sid, f"{az:.6f}", f"{el:.6f}"])

    def to_dict(self):
        return {
            "pipeline": self.pipeline,
            "parameters": self.parameters,
            "sources": [{"source_id": sid, "azimuth_deg": round(az, 6), "elevation_deg": round(el, 6)}
                        for sid, az, el in self.sources],
            "timestamps_s": [round(float(t), 6) for t in self.timestamps],
        }

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


def output_timestamps(duration_s, frame_rate):
    return np.arange(int(math.floor(duration_s * frame_rate + 1e-9))) / frame_rate


def assemble_result(centers, cluster_sizes, duration_s, frame_rate, apply_bias=False,
                    bias_az_deg=8.0, bias_el_deg=-5.0, pipeline="", parameters=None):
    """Final per-source DOAs for a recording.

    ``centers`` are unit vectors (or radians pairs). Source ids run from 1 in
    order of decreasing cluster size, ties broken by ascending
    ``(azimuth, elevation)`` of the raw centroid.
    """
    c = _as_unit(centers)
    if len(c) == 0:
        raise ValueError("no centroids")
    az, el = cart_to_direction(c)
    az_deg = np.degrees(az)
    el_deg = np.degrees(el)
    sizes = np.asarray(cluster_sizes)
    order = sorted(range(len(c)), key=lambda i: (-sizes[i], az_deg[i], el_deg[i]))
    sources = []
    for sid, i in enumerate(order, start=1):
        a, e = float(az_deg[i]), float(el_deg[i])
        if apply_bias:
            a, e = bias_correct(a, e, bias_az_deg, bias_el_deg)
        sources.append((sid, a, e))
    return LocalizationResult(sources, output_timestamps(duration_s, frame_rate), pipeline,
                              dict(parameters or {}))
