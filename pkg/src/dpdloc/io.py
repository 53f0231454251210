"""WAV and ground-truth sidecar I/O."""

import json

import numpy as np
from scipy.io import wavfile

from .array import Direction
from .tf import MultichannelSignal

_INT_SCALE = {np.dtype(np.int16): 2.0 ** 15, np.dtype(np.int32): 2.0 ** 31}


def read_wav(path):
    """Multichannel WAV -> float64 :class:`MultichannelSignal` in [-1, 1).

    16/24/32-bit PCM (scipy returns 24-bit data left-aligned in int32) and
    32/64-bit float are accepted.
    """
    rate, data = wavfile.read(path)
    if data.dtype in _INT_SCALE:
        x = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample type {data.dtype}")
    if x.ndim == 1:
        x = x[:, None]
    return MultichannelSignal(x.T, float(rate))


def write_wav(path, sig):
    """32-bit float WAV, one channel per microphone."""
    rate = int(round(sig.sample_rate))
    if abs(rate - sig.sample_rate) > 1e-9:
        raise ValueError("WAV files need an integer sample rate")
    wavfile.write(path, rate, np.ascontiguousarray(sig.samples.T, dtype=np.float32))


def write_truth(path, directions, extra=None):
    """Ground-truth sidecar: one entry per source, angles in degrees."""
    rows = []
    for i, d in enumerate(directions, start=1):
        az, el = Direction(*d).to_degrees()
        rows.append({"source_id": i, "azimuth_deg": round(az, 9), "elevation_deg": round(el, 9)})
    with open(path, "w") as f:
        json.dump({"sources": rows, **(extra or {})}, f, indent=2, sort_keys=True)


def read_truth(path):
    with open(path) as f:
        d = json.load(f)
    return [Direction.from_degrees(s["azimuth_deg"], s["elevation_deg"]) for s in d["sources"]]
