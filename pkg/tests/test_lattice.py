"""Lattice operator basics and exact trace moments."""

import itertools
import random
from fractions import Fraction

import numpy as np
import pytest

from latscat.errors import ResourceLimitError, ValidationError
from latscat.lattice import (CENTERED, STANDARD, Potential, apply_h, apply_h0,
                             band, delta, trace_h0_power_against, trace_moments)


def test_stencil_delta_1d_standard():
    out = apply_h0({(0,): 1}, 1, STANDARD)
    assert out == {(0,): Fraction(1, 2), (1,): Fraction(-1, 4), (-1,): Fraction(-1, 4)}


def test_stencil_delta_2d_centered():
    out = apply_h0({(0, 0): 1}, 2, CENTERED)
    assert set(out) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    assert all(v == Fraction(-1, 4) for v in out.values())


def test_rows_sum_to_zero_in_interior_standard():
    # constant function on a box: standard H0 vanishes at interior points
    # (d/2 - 2d/4 = 0); the centered stencil gives -d/2 there instead
    box = {(i, j): 1 for i in range(-4, 5) for j in range(-4, 5)}
    out = apply_h0(box, 2, STANDARD)
    assert out.get((0, 0), 0) == 0
    assert out.get((1, -1), 0) == 0
    cen = apply_h0(box, 2, CENTERED)
    assert cen.get((0, 0), 0) == -1


def test_conventions_differ_by_half_d():
    f = {(1, 0, -2): Fraction(3, 7), (0, 0, 0): 2}
    a = apply_h0(f, 3, STANDARD)
    b = apply_h0(f, 3, CENTERED)
    for n in set(a) | set(b) | set(f):
        assert a.get(n, 0) == b.get(n, 0) + Fraction(3, 2) * f.get(n, 0)


def test_apply_h_zero_potential_and_single_site():
    f = {(0,): 1}
    V = Potential(1, {})
    assert apply_h(f, V, CENTERED) == apply_h0(f, 1, CENTERED)
    Vc = Potential(1, {(0,): Fraction(5, 3)})
    out = apply_h(f, Vc, CENTERED)
    assert out[(0,)] == Fraction(5, 3)
    assert out[(1,)] == Fraction(-1, 4)


def test_h_matrix_elements_symmetric():
    rng = random.Random(11)
    V = Potential(2, {(0, 0): Fraction(1, 3), (1, -1): Fraction(-2, 5)})
    pts = [(0, 0), (1, 0), (1, -1), (0, 1), (-1, -1)]
    for m in pts:
        hm = apply_h({m: 1}, V, STANDARD)
        for n in pts:
            hn = apply_h({n: 1}, V, STANDARD)
            assert hm.get(n, 0) == hn.get(m, 0)


def test_potential_validation():
    with pytest.raises(ValidationError):
        Potential(2, {(0,): 1.0})          # wrong dimension
    with pytest.raises(ValidationError):
        Potential(1, {(0,): 1.0 + 2.0j})   # complex value
    with pytest.raises(ValidationError):
        Potential(0, {})


def test_trace_moment_first_is_trace():
    for d in (1, 2, 3):
        V = Potential(d, {(0,) * d: Fraction(1, 2), (1,) + (0,) * (d - 1): 2})
        F = trace_moments(V, 3, CENTERED)
        assert F[0] == Fraction(5, 2)


def test_trace_moments_single_site_2d():
    F = trace_moments(delta(2), 5, CENTERED)
    assert F[0] == 1
    assert F[1] == 1
    assert F[2] == Fraction(7, 4)
    assert F[3] == 2
    assert F[4] == Fraction(189, 64)


def test_trace_moments_match_dense_matrix_oracle():
    # brute-force trace on a truncated box, exact rationals
    def dense_moments(V, d, nmax, L):
        pts = list(itertools.product(range(-L, L + 1), repeat=d))
        idx = {p: i for i, p in enumerate(pts)}
        n = len(pts)
        H0 = [[Fraction(0)] * n for _ in range(n)]
        for p, i in idx.items():
            for j in range(d):
                for s in (1, -1):
                    q = list(p)
                    q[j] += s
                    q = tuple(q)
                    if q in idx:
                        H0[i][idx[q]] = Fraction(-1, 4)
        H = [row[:] for row in H0]
        for p, i in idx.items():
            H[i][i] = H[i][i] + Fraction(V.entries.get(p, 0))

        def matmul(A, B):
            return [[sum(A[i][k] * B[k][j] for k in range(n) if A[i][k])
                     for j in range(n)] for i in range(n)]

        out = []
        Hk, H0k = H, H0
        out.append(sum(Hk[i][i] for i in range(n)) - sum(H0k[i][i] for i in range(n)))
        for _ in range(nmax - 1):
            Hk, H0k = matmul(Hk, H), matmul(H0k, H0)
            out.append(sum(Hk[i][i] for i in range(n)) - sum(H0k[i][i] for i in range(n)))
        return out

    V = Potential(1, {(0,): Fraction(1, 3), (2,): Fraction(-3, 4)})
    assert trace_moments(V, 4, CENTERED) == dense_moments(V, 1, 4, 7)
    V2 = Potential(2, {(0, 0): Fraction(1, 2), (1, 0): -1})
    assert trace_moments(V2, 3, CENTERED) == dense_moments(V2, 2, 3, 4)


def test_trace_moments_radius_independent():
    V = Potential(2, {(0, 0): Fraction(2, 3), (1, 1): Fraction(-1, 2)})
    base = trace_moments(V, 4, CENTERED)
    assert trace_moments(V, 4, CENTERED, radius=6) == base
    assert trace_moments(V, 4, CENTERED, radius=8) == base


def test_trace_moments_float_path():
    V = Potential(1, {(0,): 0.3141592653589793})
    Ff = trace_moments(V, 3, CENTERED)
    Fr = trace_moments(Potential(1, {(0,): Fraction(3141592653589793, 10 ** 16)}), 3, CENTERED)
    assert all(abs(a - float(b)) < 1e-12 for a, b in zip(Ff, Fr))


def test_trace_moment_cap():
    with pytest.raises(ResourceLimitError):
        trace_moments(delta(1), 13)


def test_odd_h0_powers_against_potential_vanish_centered():
    rng = random.Random(3)
    for d in (1, 2):
        entries = {}
        pts = list(itertools.product(range(-2, 3), repeat=d))
        for p in rng.sample(pts, 3):
            entries[p] = Fraction(rng.randint(-8, 8), rng.randint(1, 8))
        V = Potential(d, entries)
        for k in (1, 3):
            for p in (1, 2):
                assert trace_h0_power_against(V, k, p, CENTERED) == 0
        # standard convention does NOT satisfy this (diagonal d/2 != 0)
        if V.entries and sum(Fraction(v) for v in V.entries.values()) != 0:
            assert trace_h0_power_against(V, 1, 1, STANDARD) != 0


def test_band_edges():
    assert band(3, STANDARD) == (0.0, 3.0)
    assert band(3, CENTERED) == (-1.5, 1.5)
