"""Energy surface, amplitudes, S-matrix unitarity, det S vs spectral shift."""

import cmath
import math

import numpy as np
import pytest

from latscat.errors import ValidationError
from latscat.lattice import Potential, delta
from latscat.scattering import (born_amplitude, det_s, full_amplitude, psi0,
                                s_matrix, surface_grid, surface_measure_coarea,
                                surface_point)
from latscat.shift import ssf

RNG = np.random.default_rng(777)


def test_surface_point_reference():
    x, jac = surface_point(0.5, (1.0, 0.0))
    assert x[0] == pytest.approx(math.pi / 2, abs=1e-14)
    assert x[1] == 0.0
    assert jac == pytest.approx(4.0 * math.sqrt(2.0), abs=1e-12)


def test_surface_point_level_set_random():
    for _ in range(20):
        d = int(RNG.integers(1, 4))
        lam = float(RNG.uniform(0.05, 0.95))
        th = RNG.normal(size=d)
        th /= np.linalg.norm(th)
        x, _ = surface_point(lam, th)
        assert abs(np.sum(np.sin(x / 2) ** 2) - lam) < 1e-13 * (1 + lam)


def test_surface_point_cutoff():
    with pytest.raises(ValidationError):
        surface_point(1.5, (1.0, 0.0))   # sqrt(1.5) > 1


def test_psi0_properties():
    lam, d = 0.37, 2
    th = np.array([0.6, 0.8])
    v0 = psi0((0, 0), lam, th)
    assert v0.imag == pytest.approx(0.0, abs=1e-15)
    assert v0.real > 0
    # |psi0| independent of n (unimodular phase)
    for n in [(1, 0), (3, -2), (-1, 4)]:
        assert abs(psi0(n, lam, th)) == pytest.approx(abs(v0), rel=1e-13)


def test_psi0_eigen_relation():
    # applying the standard H0 stencil across n reproduces lam psi0(n)
    lam, d = 0.61, 2
    th = np.array([0.28, 0.96])
    for n in [(0, 0), (2, -1), (-3, 1)]:
        n = np.array(n)
        acc = d / 2.0 * psi0(tuple(n), lam, th)
        for j in range(d):
            for s in (1, -1):
                q = n.copy()
                q[j] += s
                acc -= 0.25 * psi0(tuple(q), lam, th)
        assert abs(acc - lam * psi0(tuple(n), lam, th)) < 1e-12


def test_born_single_site_and_symmetry():
    lam, c = 0.5, 0.7
    V = delta(2, value=c)
    th1 = (1.0, 0.0)
    th2 = (0.0, 1.0)
    a12 = born_amplitude(V, lam, th1, th2)
    _, j1 = surface_point(lam, th1)
    _, j2 = surface_point(lam, th2)
    expect = (2 * math.pi) ** -2 * lam ** 0 / 4.0 * j1 * j2 * c
    assert a12 == pytest.approx(expect, abs=1e-13)
    # forward amplitude equals the same with theta = theta'
    aff = born_amplitude(V, lam, th1, th1)
    assert aff == pytest.approx((2 * math.pi) ** -2 / 4 * j1 * j1 * c, abs=1e-13)
    # hermitian Born kernel for real V
    V2 = Potential(2, {(0, 0): 0.5, (1, -1): -0.3})
    k12 = born_amplitude(V2, lam, th1, th2)
    k21 = born_amplitude(V2, lam, th2, th1)
    assert k12 == pytest.approx(k21.conjugate(), abs=1e-13)


def test_full_amplitude_zero_potential_and_born_limit():
    lam = 0.5
    th1, th2 = (1.0, 0.0), (0.6, 0.8)
    assert full_amplitude(Potential(2, {}), lam, th1, th2) == 0.0
    # full - born = O(coupling^2)
    V1 = delta(2, value=1.0)
    diffs = []
    gammas = [0.04, 0.02, 0.01, 0.005]
    for g in gammas:
        Vg = V1.scaled(g)
        diffs.append(abs(full_amplitude(Vg, lam, th1, th2)
                         - born_amplitude(Vg, lam, th1, th2)))
    slope = np.polyfit(np.log(gammas), np.log(diffs), 1)[0]
    assert abs(slope - 2.0) < 0.05


def test_surface_measure_matches_coarea():
    for lam in (0.3, 0.5, 0.8):
        grid = surface_grid(2, lam, 256)
        assert grid.coverage == 1.0
        assert np.sum(grid.weights) == pytest.approx(surface_measure_coarea(lam),
                                                     abs=1e-8, rel=1e-8)


def test_surface_measure_matches_boundary_kernel():
    # sum of weights = (2 pi)^d (1/pi) Im r0(0, lam + i0)
    from latscat.green import green_boundary
    for d, lam in ((1, 0.5), (2, 0.62)):
        grid = surface_grid(d, lam, 128)
        dos = (2 * math.pi) ** d * green_boundary((0,) * d, lam, "+", d).imag / math.pi
        assert np.sum(grid.weights) == pytest.approx(dos, rel=1e-9)


def test_s_matrix_identity_for_zero_potential():
    panel = s_matrix(Potential(2, {}), 0.5, n_nodes=32)
    assert np.allclose(panel.smatrix, np.eye(32), atol=1e-14)
    assert panel.defect < 1e-14


def test_s_matrix_unitarity_2d():
    V = delta(2, value=0.3)
    panel = s_matrix(V, 0.5, n_nodes=256, accuracy="mp")
    assert panel.defect <= 1e-8
    panel2 = s_matrix(V, 0.5, n_nodes=512, accuracy="mp")
    assert panel2.defect <= panel.defect * 1.5
    # operator norm of S equals 1 within the defect tolerance
    sv = np.linalg.svd(np.diag(np.sqrt(panel.grid.active_weights())) @ panel.smatrix
                       @ np.diag(1.0 / np.sqrt(panel.grid.active_weights())),
                       compute_uv=False)
    assert abs(sv[0] - 1.0) < 1e-6


def test_det_s_unit_modulus_and_rank_one_value():
    lam = 0.5
    V = delta(1)
    d1 = det_s(V, lam)
    assert abs(abs(d1) - 1.0) < 1e-10
    # analytic chain: det S = e^{-2 pi i xi}, xi = arg(1 + 2i)/pi
    expect = cmath.exp(-2j * math.atan2(2.0, 1.0))
    assert d1 == pytest.approx(expect, abs=1e-10)


def test_det_s_matches_ssf_rank_one_d1():
    V = delta(1, value=0.4)
    for lam in (0.21, 0.5, 0.83):
        ds = det_s(V, lam)
        xi = ssf(V, lam)
        assert abs(ds - cmath.exp(-2j * math.pi * xi)) < 1e-8


def test_det_s_matches_grid_determinant():
    V = delta(2, value=0.3)
    lam = 0.5
    ds = det_s(V, lam, accuracy="mp")
    panel = s_matrix(V, lam, n_nodes=512, accuracy="mp")
    assert abs(panel.det - ds) < 1e-6


def test_d1_grid_det_matches_reduction():
    V = delta(1, value=0.7)
    lam = 0.44
    panel = s_matrix(V, lam)
    assert abs(panel.det - det_s(V, lam)) < 1e-8
    assert panel.defect < 1e-10


def test_grid_above_first_threshold_flags_exclusions():
    grid = surface_grid(2, 1.3, 64)
    assert grid.excluded.any()
    assert 0.0 < grid.coverage < 1.0
