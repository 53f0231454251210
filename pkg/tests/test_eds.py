import logging
import math

import numpy as np
import pytest

from conftest import random_psd
from dpdloc.array import Direction, DirectionGrid, angular_distance, sh_steering
from dpdloc.eds import (SCORE_CAP, dominant_eigenvector, eds_measure, eds_select, eds_spectrum,
                        local_correlation, normalized_sh_steering, real_steering_factor,
                        run_eds)
from dpdloc.pwd import PwdSpectrogram, plane_wave_decomposition
from dpdloc.sim import SceneSpec, simulate, speechlike_signal
from dpdloc.tf import band_select, stft


def cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_local_correlation_unit_window(rng):
    a = cplx(rng, 4, 3, 5)
    s = local_correlation(a, 1, 1)
    assert s.shape == (3, 5, 4, 4)
    assert np.allclose(s[1, 2], np.outer(a[:, 1, 2], a[:, 1, 2].conj()))


def test_local_correlation_constant(rng):
    v = cplx(rng, 4)
    a = np.broadcast_to(v[:, None, None], (4, 3, 20)).copy()
    s = local_correlation(a, 2, 15)
    assert np.allclose(s, np.outer(v, v.conj()))


def test_local_correlation_direct_sum(rng):
    a = cplx(rng, 16, 6, 40)
    s = local_correlation(a, 2, 15)
    assert s.shape == (5, 26, 16, 16)
    for t, f in [(0, 0), (4, 25), (2, 13)]:
        tau, om = t + 1, f + 14
        ref = sum(np.outer(a[:, tau - i, om - j], a[:, tau - i, om - j].conj())
                  for i in range(2) for j in range(15)) / 30
        assert np.max(np.abs(s[t, f] - ref)) <= 1e-12


def test_local_correlation_short_input(rng):
    assert local_correlation(cplx(rng, 4, 1, 20), 2, 15).shape[:2] == (0, 6)


def test_dominant_eigenvector_plane_wave():
    d = Direction(1.1, 0.4)
    y = np.conj(sh_steering(3, d))
    u, deg = dominant_eigenvector(np.outer(y, y.conj()))
    assert not deg
    assert abs(np.vdot(u, y / np.linalg.norm(y))) == pytest.approx(1.0, abs=1e-10)
    # phase convention: largest-magnitude entry real and positive
    k = np.argmax(np.abs(u))
    assert u[k].imag == pytest.approx(0, abs=1e-15) and u[k].real > 0


def test_dominant_eigenvector_diag():
    u, deg = dominant_eigenvector(np.diag([5.0, 1, 1, 1]).astype(complex))
    assert np.allclose(u, [1, 0, 0, 0]) and not deg


def test_dominant_eigenvector_power_iteration(rng):
    for _ in range(5):
        s = random_psd(rng, 16)
        x = cplx(rng, 16)
        for _ in range(3000):
            x = s @ x
            x /= np.linalg.norm(x)
        u, _ = dominant_eigenvector(s)
        assert abs(abs(np.vdot(u, x)) - 1) <= 1e-8
        assert np.linalg.norm(s @ u - (u.conj() @ s @ u) * u) <= 1e-8 * np.linalg.norm(s)


def test_degenerate_flagged():
    _, deg = dominant_eigenvector(np.stack([np.eye(4, dtype=complex), np.zeros((4, 4), complex),
                                            np.diag([2.0, 1, 0, 0]).astype(complex)]))
    assert list(deg) == [True, True, False]


def test_eds_measure_perfect_plane_wave(grid2):
    steer = normalized_sh_steering(3, grid2)
    for idx in (0, 777, 5000):
        score, best = eds_measure(steer[:, idx], steer)
        assert best == idx and score == SCORE_CAP


def test_eds_measure_isotropic_ring():
    az = np.linspace(0, 2 * np.pi, 90, endpoint=False)
    ring = DirectionGrid(az, np.full(90, 0.3))
    steer = normalized_sh_steering(3, ring)
    e1 = np.zeros(16, complex)
    e1[0] = 1
    p = eds_spectrum(e1, steer)
    assert (p.max() - p.min()) / p.max() <= 1e-6
    with pytest.raises(ValueError):
        eds_measure(e1, steer[:, :0])


def test_eds_measure_matches_projector(grid2, rng):
    steer = normalized_sh_steering(3, grid2)
    u = cplx(rng, 3, 16)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    scores, best = eds_measure(u, steer)
    for i in range(3):
        p = eds_spectrum(u[i], steer)
        assert best[i] == np.argmax(p)
        assert scores[i] == pytest.approx(p.max(), rel=1e-8)


def test_steering_columns_unit_and_conjugate(grid2):
    steer = normalized_sh_steering(3, grid2)
    assert np.allclose(np.linalg.norm(steer, axis=0), 1)
    raw = np.conj(sh_steering(3, grid2[10]))
    assert np.allclose(steer[:, 10], raw / np.linalg.norm(raw))


def test_eds_select_counts(rng, caplog):
    scores = rng.permutation(4000) + 100.0
    keep, th = eds_select(scores)
    assert len(keep) == 100 and th == 3999 + 100 - 99
    assert len(eds_select(scores, 0.0)[0]) == 0
    with caplog.at_level(logging.WARNING, logger="dpdloc.eds"):
        eds_select(np.linspace(1, 5, 100))
    assert "not much greater" in caplog.text


def test_selection_scale_invariant(em32, grid2):
    d = Direction.from_degrees(40, 10)
    sig = simulate(SceneSpec(em32, [(d, speechlike_signal(1.5, 16000, seed=4))], noise_snr_db=20))
    spec = stft(sig)
    pwd = plane_wave_decomposition(spec, em32)
    bins = band_select(spec, 400, 6000)
    base = run_eds(pwd, bins, grid2)
    scaled = PwdSpectrogram(pwd.data * 123.456, 3, pwd.frame_times, pwd.bin_freqs, pwd.hop,
                            pwd.sample_rate)
    other = run_eds(scaled, bins, grid2)
    assert np.array_equal(base.estimates.frames, other.estimates.frames)
    assert np.array_equal(base.estimates.bins, other.estimates.bins)
    assert np.allclose(base.estimates.scores, other.estimates.scores, rtol=1e-6)


def test_run_eds_single_source(em32, grid2):
    d = Direction.from_degrees(200, 25)
    sig = simulate(SceneSpec(em32, [(d, speechlike_signal(3.0, 16000, seed=6))], noise_snr_db=20))
    spec = stft(sig)
    pwd = plane_wave_decomposition(spec, em32)
    bins = band_select(spec, 400, 6000)
    res = run_eds(pwd, bins, grid2, with_effective_rank=True)
    assert res.n_active + res.n_degenerate == (spec.n_frames - 1) * (len(bins) - 14)
    assert len(res.estimates) == math.ceil(0.025 * res.n_active)
    assert res.threshold > 10
    assert res.estimates.bins.min() >= bins[0] + 14 and res.estimates.frames.min() >= 1
    err = np.degrees(angular_distance(res.estimates.azimuth, res.estimates.elevation, *d))
    # top-scoring bin lands on the grid point nearest the truth, within 2 degrees
    assert err[0] <= 2.0
    assert np.median(err) <= 3.0


def test_real_factor_matches_complex_search(grid2, rng):
    steer = normalized_sh_steering(3, grid2)
    basis, real = real_steering_factor(steer)
    assert np.isrealobj(real)
    assert np.max(np.abs(basis @ real - steer)) <= 1e-12
    assert np.max(np.abs(basis.conj().T @ basis - np.eye(16))) <= 1e-12
    u = cplx(rng, 200, 16)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    s0, b0 = eds_measure(u, steer)
    s1, b1 = eds_measure(u, real, basis=basis)
    assert np.array_equal(b0, b1)
    assert np.allclose(s0, s1, rtol=1e-10)
