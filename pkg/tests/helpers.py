"""Scene builders shared by tests and the acceptance suite."""

import numpy as np

from dpdloc.sim import Reflection, SceneSpec, simulate

BIN_HZ = 31.25


def tone_comb(bins, duration_s=3.0, fs=16000.0, seed=0):
    """Equal-amplitude tones at exact STFT bin frequencies with random phases.

    Every analysed bin then holds a single stationary component, so the
    narrowband model ``p = V s`` is exact (no window-edge leakage).
    """
    rng = np.random.default_rng(seed)
    t = np.arange(int(duration_s * fs)) / fs
    phases = rng.uniform(0, 2 * np.pi, len(bins))
    return sum(np.cos(2 * np.pi * b * BIN_HZ * t + p) for b, p in zip(bins, phases))


def coherent_pair(geometry, d1, d2, gain=1.0, delay_s=0.005, bins=None, seed=0):
    """Noiseless source plus one coherent copy (reflection) from ``d2``."""
    bins = np.arange(14, 129, 2) if bins is None else bins
    s = tone_comb(bins, seed=seed)
    return simulate(SceneSpec(geometry, [(d1, s)], [Reflection(0, d2, gain, delay_s)]))
