"""Spectral shift function, closed-form moments, moment identities."""

import math
import random
from fractions import Fraction

import numpy as np
import pytest

from latscat.errors import NumericsError, ValidationError
from latscat.lattice import CENTERED, STANDARD, Potential, delta, trace_moments
from latscat.shift import (closed_form_moments, eigenvalue_bounds_check,
                           moment_identity, ssf, ssf_jump_check, ssf_profile)
from latscat.spectrum import find_discrete_eigenvalues

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def test_ssf_rank_one_reference_value():
    # D(1/2 + i0) = 1 + 2i for V = delta_0, d=1 standard
    xi = ssf(delta(1), 0.5, STANDARD)
    assert xi == pytest.approx(math.atan2(2.0, 1.0) / math.pi, abs=1e-9)


def test_ssf_zero_potential():
    assert ssf(Potential(1, {}), 0.5) == 0.0


def test_ssf_integer_outside_band():
    V = delta(1)
    # one eigenvalue at golden ratio: xi = 1 between band edge and it, 0 beyond
    assert ssf(V, 1.3, STANDARD) == pytest.approx(1.0, abs=1e-9)
    assert ssf(V, 2.5, STANDARD) == pytest.approx(0.0, abs=1e-9)
    assert ssf(V, -0.7, STANDARD) == pytest.approx(0.0, abs=1e-9)


def test_ssf_sign_definite():
    Vp = Potential(1, {(0,): 0.3, (1,): 0.2})
    Vm = Potential(1, {(0,): -0.3, (1,): -0.2})
    for lam in np.linspace(0.11, 0.93, 7):
        assert ssf(Vp, float(lam), STANDARD) >= -1e-9
        assert ssf(Vm, float(lam), STANDARD) <= 1e-9


def test_ssf_rank_one_bounded_by_one():
    V = delta(1, value=2.0)
    for lam in np.linspace(0.08, 0.95, 9):
        assert abs(ssf(V, float(lam), STANDARD)) <= 1.0 + 1e-9


def test_ssf_threshold_guard():
    with pytest.raises(ValidationError):
        ssf(delta(1), 0.9995, STANDARD)


def test_ssf_profile_matches_pointwise():
    V = Potential(1, {(0,): 0.5, (2,): -0.3})
    grid = np.linspace(0.15, 0.85, 9)
    prof = ssf_profile(V, grid, STANDARD)
    for lam, xi in zip(prof.grid, prof.xi):
        assert xi == pytest.approx(ssf(V, float(lam), STANDARD), abs=1e-8)


def test_jump_at_rank_one_eigenvalue():
    V = delta(1)
    rec = find_discrete_eigenvalues(V, STANDARD).records[0]
    jump = ssf_jump_check(V, rec, STANDARD)
    assert jump == pytest.approx(-1.0, abs=1e-6)


def test_jumps_two_site_potential():
    V = Potential(1, {(-1,): 1.0, (1,): 1.0})
    recs = find_discrete_eigenvalues(V, STANDARD).records
    assert len(recs) == 2
    for rec in recs:
        assert ssf_jump_check(V, rec, STANDARD) == pytest.approx(-1.0, abs=1e-6)


def test_closed_form_moments_single_site_2d():
    F = closed_form_moments(delta(2))
    assert F == [1, 1, Fraction(7, 4), 2, Fraction(189, 64)]


def test_closed_form_refuses_standard_convention():
    with pytest.raises(ValidationError):
        closed_form_moments(delta(2), convention=STANDARD)


def test_closed_equals_walk_moments_random():
    rng = random.Random(99)
    import itertools
    for d in (1, 2, 3):
        pts = list(itertools.product(range(-2, 3), repeat=d))
        for _ in range(3):
            entries = {}
            for p in rng.sample(pts, min(3, len(pts))):
                entries[p] = Fraction(rng.randint(-8, 8), rng.randint(1, 8))
            V = Potential(d, entries)
            assert closed_form_moments(V) == trace_moments(V, 5, CENTERED)


def test_moment_identity_rank_one_centered():
    V = delta(1)
    rep = moment_identity(V, nmax=5, convention=CENTERED)
    # E_1 = (sqrt 5 - 1)/2; corrected sum matches; literal deviates by 1/2
    assert rep.moments_outside[0] == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-6)
    assert rep.residual_corrected[0] < 1e-4
    assert rep.residual_literal[0] == pytest.approx(0.5, abs=1e-4)
    for n in range(5):
        assert rep.residual_corrected[n] < 1e-4
    # full-line first moment equals Tr V
    assert rep.trace_check["residual"] < 1e-6
    # closed forms and walk traces agree exactly
    assert rep.closed_moments == rep.walk_moments


def test_moment_identity_zero_potential():
    rep = moment_identity(Potential(1, {}), nmax=3, convention=CENTERED)
    assert all(e == 0.0 for e in rep.moments_outside)
    assert rep.eigen_terms == []


def test_bounds_check_rank_one_both_signs():
    rep = eigenvalue_bounds_check(delta(1), CENTERED)
    assert rep["positive"] and rep["moment_bounds_hold"]
    assert rep["E1"] == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-5)
    assert rep["trace_V"] == 1.0
    rep2 = eigenvalue_bounds_check(delta(1, value=-1), CENTERED)
    assert not rep2["positive"]
    assert rep2["moment_bounds_hold"]
    assert rep2["E1"] == pytest.approx(-(math.sqrt(5) - 1) / 2, abs=1e-5)


def test_bounds_check_rejects_mixed_sign():
    with pytest.raises(ValidationError):
        eigenvalue_bounds_check(Potential(1, {(0,): 1.0, (1,): -1.0}))
