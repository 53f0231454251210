"""Far-field scene simulator used as ground truth for the estimators.

Each source is radiated as a plane wave; each reflection is a delayed,
attenuated copy of its parent source arriving as another plane wave. All
filtering happens in the frequency domain on one zero-padded FFT of the whole
signal, so fractional delays and rigid-sphere scattering are exact on the
DFT grid.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import special

from .array import (SOUND_SPEED, ArrayGeometry, Direction, radial_function,
                    rigid_truncation_order, unit_vector)
from .tf import MultichannelSignal


@dataclass
class Reflection:
    parent: int
    direction: Direction
    gain: float
    delay: float  # seconds

    def __post_init__(self):
        if not 0 < self.gain <= 1:
            raise ValueError(f"reflection gain must be in (0, 1], got {self.gain}")
        if self.delay < 0:
            raise ValueError("reflection delay must be non-negative")


@dataclass
class SceneSpec:
    geometry: ArrayGeometry
    sources: list  # [(Direction, samples)]
    reflections: list = field(default_factory=list)
    noise_snr_db: float = None
    sample_rate: float = 16000.0
    seed: int = 0
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        if not self.sources:
            raise ValueError("scene needs at least one source")
        self.sources = [(Direction(*d), np.asarray(s, dtype=float)) for d, s in self.sources]
        for r in self.reflections:
            if not 0 <= r.parent < len(self.sources):
                raise ValueError(f"reflection parent {r.parent} out of range")

    @property
    def n_samples(self):
        return max(len(s) for _, s in self.sources)


def transfer_functions(geometry, direction, freqs, sound_speed=SOUND_SPEED):
    """Steering vectors for one direction at many frequencies, shape ``(Q, F)``.

    Identical to :func:`dpdloc.array.steering_matrix` evaluated frequency by
    frequency, including the per-frequency rigid-sphere truncation order.
    """
    freqs = np.asarray(freqs, dtype=float)
    k = 2 * np.pi * freqs / sound_speed
    u = unit_vector(*direction)
    if geometry.model == "open":
        return np.exp(1j * np.outer(geometry.positions @ u, k))
    kr = k * geometry.radius
    orders = np.array([rigid_truncation_order(x) for x in kr])
    n_max = int(orders.max())
    n = np.arange(n_max + 1)
    b = radial_function(n[:, None], kr[None, :], "rigid")
    b = np.where(n[:, None] <= orders[None, :], b, 0)
    cosg = np.clip((geometry.positions / geometry.mic_radii[:, None]) @ u, -1, 1)
    legendre = np.stack([(2 * i + 1) / (4 * np.pi) * special.eval_legendre(i, cosg) for i in n],
                        axis=1)
    return legendre @ b


def path_spectra(scene, nfft):
    """Per-path multichannel spectra before summation.

    Returns ``(freqs, spectra)`` with ``spectra`` of shape
    ``(n_paths, Q, nfft // 2 + 1)``; paths are the direct sounds in source
    order followed by the reflections in scene order.
    """
    fs = scene.sample_rate
    freqs = np.fft.rfftfreq(nfft, 1 / fs)
    source_spectra = [sfft.rfft(s, nfft) for _, s in scene.sources]
    omega = 2 * np.pi * freqs
    paths = []
    for (d, _), spec in zip(scene.sources, source_spectra):
        paths.append(spec * transfer_functions(scene.geometry, d, freqs, scene.sound_speed))
    for r in scene.reflections:
        gain = r.gain * np.exp(-1j * omega * r.delay)
        h = transfer_functions(scene.geometry, r.direction, freqs, scene.sound_speed)
        paths.append(source_spectra[r.parent] * gain * h)
    return freqs, np.stack(paths)


def simulate(scene):
    """Render a scene to a :class:`MultichannelSignal`.

    Additive white Gaussian noise, if requested, is scaled per channel to
    ``noise_snr_db`` relative to that channel's noiseless power.
    """
    n = scene.n_samples
    fs = scene.sample_rate
    max_delay = max([r.delay for r in scene.reflections], default=0.0)
    aperture = float(np.max(np.linalg.norm(scene.geometry.positions, axis=1)))
    # guard band against circular wrap of delays and of the scattering tail
    pad = int(math.ceil((max_delay + 4 * aperture / scene.sound_speed) * fs)) + 256
    nfft = sfft.next_fast_len(n + pad, real=True)
    _, spectra = path_spectra(scene, nfft)
    y = sfft.irfft(spectra.sum(axis=0), nfft, axis=-1)[:, :n]
    if scene.noise_snr_db is not None:
        rng = np.random.default_rng(scene.seed)
        power = np.mean(y ** 2, axis=1, keepdims=True)
        sigma = np.sqrt(power / 10 ** (scene.noise_snr_db / 10))
        y = y + sigma * rng.standard_normal(y.shape)
    return MultichannelSignal(y, fs)


def speechlike_signal(duration_s, sample_rate=16000.0, seed=0, attack_s=0.002):
    """Amplitude-modulated pink-ish noise with syllable-rate envelope and pauses.

    Syllables last 125-500 ms (2-8 Hz), start with a ``attack_s`` raised-cosine
    attack and decay exponentially to -26 dB, and alternate with 100-300 ms
    pauses at -60 dB. The abrupt onsets give frames where the direct sound
    leads its reflections; the pauses put well over 20 % of 32 ms frames 30 dB
    below the loudest frame.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, 1 / sample_rate)
    # -3 dB/octave power slope, flat below 100 Hz
    spec *= 1 / np.sqrt(np.maximum(f, 100.0) / 100.0)
    noise = np.fft.irfft(spec, n)

    env = np.full(n, 1e-3)
    n_attack = max(1, int(round(attack_s * sample_rate)))
    pos = 0
    active = bool(rng.integers(2))
    while pos < n:
        if active:
            length = int(rng.uniform(0.125, 0.5) * sample_rate)
            level = rng.uniform(0.5, 1.0)
            seg = level * np.exp(-3.0 * np.arange(length) / length)
            a = min(n_attack, length)
            seg[:a] *= 0.5 - 0.5 * np.cos(np.pi * np.arange(a) / a)
            stop = min(n, pos + length)
            env[pos:stop] = np.maximum(env[pos:stop], seg[:stop - pos])
        else:
            length = int(rng.uniform(0.1, 0.3) * sample_rate)
        pos += length
        active = not active
    out = noise * env
    return out / np.sqrt(np.mean(out ** 2)) * 0.1


def scene_from_dict(d, geometry_resolver=None):
    """Build a scene from its JSON form.

    Sources carry ``azimuth_deg``/``elevation_deg`` and either ``signal:
    "speechlike"`` (with ``duration_s`` and optional ``seed``) or inline
    ``samples``.
    """
    from .array import resolve_geometry

    geometry = (geometry_resolver or resolve_geometry)(d["geometry"])
    fs = float(d.get("sample_rate_hz", 16000))
    seed = int(d.get("seed", 0))
    sources = []
    for i, s in enumerate(d["sources"]):
        direction = Direction.from_degrees(s["azimuth_deg"], s["elevation_deg"])
        if "samples" in s:
            samples = np.asarray(s["samples"], dtype=float)
        else:
            samples = speechlike_signal(float(s.get("duration_s", d.get("duration_s", 5.0))), fs,
                                        int(s.get("seed", seed + 1000 * (i + 1))))
        sources.append((direction, samples))
    reflections = [Reflection(int(r["parent"]),
                              Direction.from_degrees(r["azimuth_deg"], r["elevation_deg"]),
                              float(r["gain"]), float(r["delay_s"]))
                   for r in d.get("reflections", [])]
    return SceneSpec(geometry, sources, reflections, d.get("noise_snr_db"), fs, seed,
                     float(d.get("sound_speed_mps", SOUND_SPEED)))


def load_scene(path):
    with open(path) as f:
        return scene_from_dict(json.load(f))
