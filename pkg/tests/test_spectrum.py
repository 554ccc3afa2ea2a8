"""Dressing matrix, perturbation determinant, discrete eigenvalues."""

import math
from fractions import Fraction

import numpy as np
import pytest

from latscat.errors import NumericsError, ValidationError
from latscat.green import green_1d
from latscat.lattice import CENTERED, STANDARD, Potential, delta, trace_moments
from latscat.spectrum import (dressing_matrix, find_discrete_eigenvalues,
                              oracle_eigenvalues, perturbation_determinant,
                              resolvent_decay_constant, resolvent_entry,
                              truncated_box_eigenvalues)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
RNG = np.random.default_rng(1234)


def test_dressing_rank_one():
    V = delta(1, value=2.5)
    supp, A = dressing_matrix(V, -1.0)
    assert supp == ((0,),)
    assert A[0, 0] == pytest.approx(1 + 2.5 * green_1d(0, -1.0), abs=1e-13)


def test_dressing_zero_columns_are_identity():
    V = Potential(2, {(0, 0): 1.0, (1, 1): 0.0})   # zero entry dropped
    assert V.support() == ((0, 0),)


def test_dressing_conjugate_energy():
    V = Potential(1, {(0,): 0.7, (2,): -0.3})
    _, A = dressing_matrix(V, 1.5 + 0.8j)
    _, B = dressing_matrix(V, 1.5 - 0.8j)
    assert np.allclose(A, B.conj(), atol=1e-13)


def test_resolvent_entry_v0_and_rank_one():
    V0 = Potential(1, {})
    assert resolvent_entry((2,), (0,), V0, -0.5) == pytest.approx(green_1d(2, -0.5), abs=1e-13)
    c = 0.8
    V = delta(1, value=c)
    g = green_1d(0, 3.0)
    assert resolvent_entry((0,), (0,), V, 3.0) == pytest.approx(g / (1 + c * g), abs=1e-13)


def test_determinant_rank_one_and_orderings():
    c = 1.3
    V = delta(1, value=c)
    lam = -2.0
    D = perturbation_determinant(V, lam)
    assert D == pytest.approx(1 + c * green_1d(0, lam), abs=1e-13)
    V2 = Potential(2, {(0, 0): 0.5, (1, 0): -0.25, (0, 1): 0.75})
    for lam in (-1.2, 3.4, 2.0 + 1.5j):
        a = perturbation_determinant(V2, lam, ordering="VR0")
        b = perturbation_determinant(V2, lam, ordering="R0V")
        assert abs(a - b) <= 1e-12 * (1 + abs(a))


def test_determinant_real_off_band_and_conjugate():
    V = Potential(1, {(0,): 0.4, (1,): -0.2})
    for lam in (-0.7, 1.9, 3.0):
        D = perturbation_determinant(V, lam)
        assert abs(D.imag) < 1e-12
    z = 0.3 + 0.9j
    assert perturbation_determinant(V, z.conjugate()) == pytest.approx(
        perturbation_determinant(V, z).conjugate(), abs=1e-12)


def test_determinant_large_energy_tends_to_one():
    V = Potential(2, {(0, 0): 1.0, (1, 1): -2.0})
    for r in (50.0, 100.0, 200.0):
        D = perturbation_determinant(V, r * 1j)
        assert abs(D - 1.0) < 2.0 * V.trace_norm() / r


def test_log_determinant_matches_walk_traces():
    # -log D(lam) = sum F_n / (n lam^n): compare the first terms at |lam| = 50
    V = Potential(1, {(0,): Fraction(1, 2), (1,): Fraction(-1, 4)})
    F = trace_moments(V, 6, STANDARD)
    lam = 50.0
    got = -complex(np.log(perturbation_determinant(V, lam, STANDARD)))
    series = sum(float(F[n - 1]) / (n * lam ** n) for n in range(1, 6))
    assert abs(got - series) <= 2.0 * abs(float(F[5])) / lam ** 6


def test_rank_one_eigenvalue_golden_ratio():
    res = find_discrete_eigenvalues(delta(1), STANDARD)
    assert not res.unresolved
    assert len(res.records) == 1
    rec = res.records[0]
    assert rec.side == "above"
    assert rec.multiplicity == 1
    assert rec.lam == pytest.approx(GOLDEN, abs=1e-10)
    # mirror potential: eigenvalue below the band at 1 - golden
    res2 = find_discrete_eigenvalues(delta(1, value=-1), STANDARD)
    assert res2.records[0].lam == pytest.approx(1.0 - GOLDEN, abs=1e-10)


def test_eigenvalues_empty_for_zero_potential():
    assert find_discrete_eigenvalues(Potential(1, {}), STANDARD).records == []


def test_centered_convention_shifts_eigenvalue():
    rec = find_discrete_eigenvalues(delta(1), CENTERED).records[0]
    assert rec.lam == pytest.approx(GOLDEN - 0.5, abs=1e-10)


def test_two_site_symmetric_potential_two_states():
    V = Potential(1, {(-1,): 1.0, (1,): 1.0})
    res = find_discrete_eigenvalues(V, STANDARD)
    assert len(res.records) == 2
    assert all(r.lam > 1.0 and r.multiplicity == 1 for r in res.records)


def test_oracle_rank_one_and_agreement():
    ev, err = oracle_eigenvalues(delta(1), 200, STANDARD)
    assert err < 1e-6
    assert len(ev) == 1
    assert ev[0] == pytest.approx(GOLDEN, abs=1e-6)


def test_box_oracle_validation():
    with pytest.raises(ValidationError):
        truncated_box_eigenvalues(delta(1), 10)


def test_oracle_matches_determinant_on_random_sign_definite():
    for trial in range(4):
        d = 1 if trial % 2 == 0 else 2
        sites = [(0,) * d]
        if d == 1:
            sites.append((1,))
        else:
            sites.append((1, 0))
        sign = 1.0 if trial < 2 else -1.0
        V = Potential(d, {s: sign * (0.6 + 0.3 * i) for i, s in enumerate(sites)})
        res = find_discrete_eigenvalues(V, STANDARD)
        L = 150 if d == 1 else 60
        ev = truncated_box_eigenvalues(V, L, STANDARD)
        assert len(ev) == sum(r.multiplicity for r in res.records)
        for r, e in zip(res.records, ev):
            assert abs(r.lam - e) < 1e-5


def test_resolvent_decay_fit_stable_under_doubling():
    V = Potential(1, {(0,): 0.5, (1,): -0.5})
    m, n = (3,), (0,)
    base = [6.0 * 1j, 7.5, -6.5, 5.0 + 5.0j]
    c1 = resolvent_decay_constant(V, m, n, base)
    c2 = resolvent_decay_constant(V, m, n, [2 * z for z in base])
    assert c1 > 0 and c2 > 0
    assert c2 <= 4.0 * c1  # constant stable in order of magnitude under doubling


def test_multiplicity_two_by_symmetry():
    # in d=2 a symmetric two-site potential far apart gives two nearly
    # degenerate states; they must still be counted separately
    V = Potential(2, {(2, 0): 1.5, (-2, 0): 1.5})
    res = find_discrete_eigenvalues(V, STANDARD)
    assert sum(r.multiplicity for r in res.records) == 2
