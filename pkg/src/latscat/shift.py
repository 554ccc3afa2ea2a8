"""Krein spectral shift function and trace-formula moments.

xi(lambda) is the boundary argument of the perturbation determinant
divided by pi, tracked continuously from a branch anchor on the far
negative real axis (where D > 0) so that no spurious +-1 jumps occur.
Outside the band xi is an integer step function whose jumps count the
discrete eigenvalues; its moments over the complement of the band are
tied to the eigenvalue sums through band-edge-corrected identities,
and the full-line moments equal the closed-form traces F_1..F_5 of the
centered convention.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from . import spectrum as spectrum_mod
from .errors import NumericsError, ValidationError
from .green import SIDE_PLUS, THRESHOLD_GUARD
from .lattice import (CENTERED, STANDARD, Potential, band, check_convention,
                      convention_shift, trace_moments)
from .spectrum import (EigenvalueRecord, SpectrumResult,
                       find_discrete_eigenvalues, perturbation_determinant)

PATH_HEIGHT = 0.5
MAX_REFINE_DEPTH = 42
TINY_DET = 1e-13


def branch_anchor(V: Potential, convention: str) -> float:
    """Real energy left of the whole spectrum of H, where D is real > 0."""
    alpha, _ = band(V.dim, convention)
    return alpha - V.trace_norm() - 2.0


class _ArgTracker:
    """Continuous-argument tracking of D along a path, with adaptive
    bisection keeping each increment below pi/2."""

    def __init__(self, fD: Callable[[complex], complex]):
        self.fD = fD
        self.evals = 0

    def start(self, z0: complex) -> None:
        D0 = self.fD(z0)
        if abs(D0.imag) > 1e-9 * abs(D0) or D0.real <= 0.0:
            raise NumericsError(f"anchor determinant not real positive: {D0}")
        self.z, self.D, self.arg = z0, D0, 0.0

    def _step(self, z1: complex, depth: int) -> None:
        D1 = self.fD(z1)
        if abs(D1) < TINY_DET:
            raise NumericsError(f"determinant vanishes near {z1}")
        inc = cmath.phase(D1 / self.D)
        if abs(inc) >= math.pi / 2.0:
            if depth >= MAX_REFINE_DEPTH:
                raise NumericsError("argument-tracking refinement exhausted "
                                    f"near {z1} (zero of D on the path?)")
            mid = 0.5 * (self.z + z1)
            self._step(mid, depth + 1)
            self._step(z1, depth + 1)
            return
        self.arg += inc
        self.z, self.D = z1, D1

    def advance(self, z1: complex) -> None:
        self._step(z1, 0)
        self.evals += 1


def _boundary_det(V: Potential, convention: str, method: str) -> Callable[[float], complex]:
    def f(lam: float) -> complex:
        return perturbation_determinant(V, lam, convention, side=SIDE_PLUS, method=method)
    return f


def _make_tracker(V: Potential, convention: str) -> _ArgTracker:
    def fD(z: complex) -> complex:
        return perturbation_determinant(V, z, convention)
    return _ArgTracker(fD)


def _check_ssf_energy(V: Potential, lam: float, convention: str) -> None:
    lam_std = lam + convention_shift(V.dim, convention)
    if 0.0 < lam_std < V.dim:
        if min(abs(lam_std - j) for j in range(V.dim + 1)) < THRESHOLD_GUARD:
            raise ValidationError(f"energy {lam} too close to an integer threshold")


def _descend_to(tracker: _ArgTracker, lam: float, final: complex,
                height: float) -> None:
    """Walk down from lam + i*height to the boundary/real value `final`,
    halving the height until the last hop is small in argument."""
    if abs(final) < TINY_DET:
        raise NumericsError(f"determinant vanishes at the target {lam}")
    eta = height
    while True:
        inc = cmath.phase(final / tracker.D)
        if abs(inc) < math.pi / 2.0:
            tracker.arg += inc
            tracker.z, tracker.D = complex(lam), final
            return
        eta /= 4.0
        if eta < 1e-10:
            raise NumericsError(f"cannot connect to the boundary value at {lam}")
        tracker.advance(complex(lam, eta))


def ssf(V: Potential, lam: float, convention: str = STANDARD,
        boundary_method: str = "fast", height: float = PATH_HEIGHT) -> float:
    """Spectral shift function xi(lambda) = arg D / pi with the argument
    tracked along anchor -> anchor + ih -> lambda + ih -> lambda (+ i0).

    Inside the band the endpoint is the boundary determinant D(lambda+i0);
    outside it is the real determinant, so xi comes out (numerically) an
    integer there."""
    check_convention(convention)
    if not V.entries:
        return 0.0
    _check_ssf_energy(V, lam, convention)
    a = branch_anchor(V, convention)
    tr = _make_tracker(V, convention)
    tr.start(complex(a))
    tr.advance(complex(a, height))
    tr.advance(complex(lam, height))
    alpha, beta = band(V.dim, convention)
    if alpha < lam < beta:
        final = _boundary_det(V, convention, boundary_method)(lam)
    else:
        final = perturbation_determinant(V, lam, convention)
    _descend_to(tr, lam, final, height)
    return tr.arg / math.pi


@dataclass
class SSFProfile:
    grid: np.ndarray
    xi: np.ndarray
    anchor: float
    convention: str


def ssf_profile(V: Potential, lambdas: Sequence[float], convention: str = STANDARD,
                boundary_method: str = "fast") -> SSFProfile:
    """xi on an increasing grid, sharing one tracked path.

    The first point gets the full anchor path; subsequent points continue
    along the boundary (argument continuity holds between thresholds, and
    grids must avoid thresholds anyway)."""
    lams = np.asarray(sorted(float(x) for x in lambdas))
    if not V.entries:
        return SSFProfile(lams, np.zeros_like(lams), 0.0, convention)
    for lam in lams:
        _check_ssf_energy(V, lam, convention)
    out = np.empty(len(lams))
    bd = _boundary_det(V, convention, boundary_method)
    alpha, beta = band(V.dim, convention)

    tracker = None
    prev_lam = None
    for i, lam in enumerate(lams):
        in_band = alpha < lam < beta
        fresh = (
            tracker is None
            or not in_band
            or prev_lam is None
            or math.floor(lam - alpha) != math.floor(prev_lam - alpha)  # new subinterval
        )
        if fresh:
            out[i] = ssf(V, lam, convention, boundary_method)
            if in_band:
                tracker = _ArgTracker(lambda x: bd(float(np.real(x))))
                tracker.z, tracker.D, tracker.arg = complex(lam), bd(lam), out[i] * math.pi
                prev_lam = lam
        else:
            tracker.advance(complex(lam))
            out[i] = tracker.arg / math.pi
            prev_lam = lam
    return SSFProfile(lams, out, branch_anchor(V, convention), convention)


def ssf_jump_check(V: Potential, record: EigenvalueRecord, convention: str = STANDARD,
                   offset: float = 1e-5) -> float:
    """xi(lam_j + offset) - xi(lam_j - offset); equals -multiplicity for an
    isolated discrete eigenvalue."""
    if offset < 1e-9:
        raise ValidationError("offset too small")
    return (ssf(V, record.lam + offset, convention)
            - ssf(V, record.lam - offset, convention))


# ---------------------------------------------------------------------------
# Closed-form moments (centered convention)
# ---------------------------------------------------------------------------

TAU = Fraction(-1, 4)


def _neighbour_average(V: Potential, n) -> Fraction:
    """(Delta V)(n) = tau * sum_j [V(n+e_j) + V(n-e_j)], exact."""
    total = Fraction(0)
    for j in range(V.dim):
        for s in (1, -1):
            q = n[:j] + (n[j] + s,) + n[j + 1:]
            total += Fraction(V.entries.get(q, 0))
    return TAU * total


def closed_form_moments(V: Potential, convention: str = CENTERED) -> List[Fraction]:
    """F_1..F_5 by the closed trace formulas (exact rationals).

    Valid only in the centered convention: the standard one has
    Tr(H0^k V^p) != 0 for odd k (diagonal d/2), which the closed forms
    rely on vanishing; such input is refused rather than silently shifted.
    """
    if convention != CENTERED:
        raise ValidationError("closed-form moments require the centered convention; "
                              "shift the Hamiltonian by -d/2 first")
    if not V.is_rational():
        raise ValidationError("closed-form moments take rational potentials")
    d = V.dim
    vals = [Fraction(v) for v in V.entries.values()]
    s = lambda p: sum((v ** p for v in vals), Fraction(0))
    lap_v = sum((_neighbour_average(V, n) * Fraction(v) for n, v in V.entries.items()),
                Fraction(0))
    lap_v2 = sum((_neighbour_average(V, n) * Fraction(v) ** 2 for n, v in V.entries.items()),
                 Fraction(0))
    t2, t4 = TAU ** 2, TAU ** 4
    return [
        s(1),
        s(2),
        s(3) + 6 * d * t2 * s(1),
        s(4) + 8 * d * t2 * s(2) + 2 * TAU * lap_v,
        s(5) + 30 * d * (2 * d - 1) * t4 * s(1) + 10 * d * t2 * s(3) + 5 * TAU * lap_v2,
    ]


# ---------------------------------------------------------------------------
# Moment identities E_n vs eigenvalue sums
# ---------------------------------------------------------------------------

@dataclass
class MomentReport:
    convention: str
    nmax: int
    moments_outside: List[float]          # E_n = n int_{R \ band} xi l^{n-1}
    eigen_sum_corrected: List[float]      # sum m_j (lam_j^n - c_j^n)
    eigen_sum_literal: List[float]        # sum m_j lam_j^n
    residual_corrected: List[float]
    residual_literal: List[float]
    eigen_terms: List[dict]
    closed_moments: List[Fraction] = field(default_factory=list)
    walk_moments: List[Fraction] = field(default_factory=list)
    trace_check: Dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {
            "convention": self.convention,
            "nmax": self.nmax,
            "moments_outside_band": self.moments_outside,
            "eigen_sum_corrected": self.eigen_sum_corrected,
            "eigen_sum_literal": self.eigen_sum_literal,
            "residual_corrected": self.residual_corrected,
            "residual_literal": self.residual_literal,
            "eigen_terms": self.eigen_terms,
            "closed_moments": [str(f) for f in self.closed_moments],
            "walk_moments": [str(f) for f in self.walk_moments],
            "trace_check": self.trace_check,
        }
        return d


def _panel_moment(xi_val: float, a: float, b: float, n: int) -> float:
    # n * int_a^b xi l^{n-1} dl with constant xi
    return xi_val * (b ** n - a ** n)


def _band_integral(V: Potential, convention: str, nodes: int = 48) -> float:
    """int_band xi dl: per-subinterval Gauss with endpoint clustering, plus
    sqrt-model corrections for the guard bands around the thresholds where
    xi cannot be evaluated (it behaves like xi0 + c sqrt(s) there)."""
    alpha, beta = band(V.dim, convention)
    total = 0.0
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = (t + 1.0) * 0.25 * np.pi
    w = w * 0.25 * np.pi
    g = THRESHOLD_GUARD * 1.5
    for j in range(V.dim):
        a, b = alpha + j + g, alpha + j + 1 - g
        xs = a + (b - a) * np.sin(t) ** 2
        jac = (b - a) * np.sin(2.0 * t)
        prof = ssf_profile(V, xs, convention)
        total += float(np.sum(w * jac * prof.xi))
        # guard holes: fit xi ~ xi0 + c sqrt(s) from s = g and s = 4g
        for edge, sgn in ((a - g, 1.0), (b + g, -1.0)):
            x1, x2 = edge + sgn * g, edge + sgn * 4.0 * g
            f1, f2 = ssf(V, x1, convention), ssf(V, x2, convention)
            c = (f2 - f1) / math.sqrt(g)
            xi0 = f1 - c * math.sqrt(g)
            total += xi0 * g + (2.0 / 3.0) * c * g ** 1.5
    return total


def moment_identity(V: Potential, nmax: int = 5, convention: str = CENTERED,
                    spectrum: SpectrumResult = None) -> MomentReport:
    """Moments of xi outside the band vs eigenvalue sums.

    E_n is integrated panel by panel between consecutive eigenvalue jumps
    (xi is constant there; constancy is verified on three interior points
    per panel).  The corrected identity uses c_j = nearest band edge:

        sum_j m_j (lam_j^n - c_j^n) = E_n

    while the uncorrected sum_j m_j lam_j^n is reported alongside with its
    residual, which is generically nonzero.
    """
    check_convention(convention)
    if spectrum is None:
        spectrum = find_discrete_eigenvalues(V, convention)
    if spectrum.unresolved:
        raise NumericsError(f"unresolved eigenvalue candidates: {spectrum.unresolved}")
    alpha, beta = band(V.dim, convention)
    E = np.zeros(nmax)

    for side, edge in (("below", alpha), ("above", beta)):
        lams = sorted(r.lam for r in spectrum.records if r.side == side)
        if not lams:
            continue
        if side == "below":
            edges = [lams[0] - 0.5] + lams + [edge]
        else:
            edges = [edge] + lams + [lams[-1] + 0.5]
        for a, b in zip(edges[:-1], edges[1:]):
            probes = [a + f * (b - a) for f in (0.25, 0.5, 0.75)]
            vals = [ssf(V, x, convention) for x in probes]
            if max(vals) - min(vals) > 1e-6:
                raise NumericsError(f"xi not constant on panel ({a}, {b}): {vals}")
            xi_val = round(float(np.median(vals)))
            if abs(xi_val - vals[1]) > 1e-6:
                raise NumericsError(f"xi not integer on panel ({a}, {b}): {vals[1]}")
            for n in range(1, nmax + 1):
                E[n - 1] += _panel_moment(xi_val, a, b, n)
        # outermost panels carry xi = 0; verify
        out_probe = (lams[0] - 1.0) if side == "below" else (lams[-1] + 1.0)
        if abs(ssf(V, out_probe, convention)) > 1e-6:
            raise NumericsError("xi does not vanish beyond the outermost eigenvalue")

    eigen_terms = []
    corrected = np.zeros(nmax)
    literal = np.zeros(nmax)
    for r in spectrum.records:
        c = alpha if r.side == "below" else beta
        eigen_terms.append({"lambda": r.lam, "multiplicity": r.multiplicity,
                            "band_edge": c})
        for n in range(1, nmax + 1):
            corrected[n - 1] += r.multiplicity * (r.lam ** n - c ** n)
            literal[n - 1] += r.multiplicity * r.lam ** n

    report = MomentReport(
        convention=convention,
        nmax=nmax,
        moments_outside=list(E),
        eigen_sum_corrected=list(corrected),
        eigen_sum_literal=list(literal),
        residual_corrected=list(np.abs(corrected - E)),
        residual_literal=list(np.abs(literal - E)),
        eigen_terms=eigen_terms,
    )
    if convention == CENTERED and V.is_rational():
        report.closed_moments = closed_form_moments(V)
        report.walk_moments = trace_moments(V, min(nmax, 5), convention)
    # full-line first moment: int_R xi = Tr V
    full = float(E[0]) + _band_integral(V, convention)
    report.trace_check = {"integral": full, "trace": float(sum(float(v) for v in V.entries.values())),
                          "residual": abs(full - sum(float(v) for v in V.entries.values()))}
    return report


def eigenvalue_bounds_check(V: Potential, convention: str = CENTERED,
                            report: MomentReport = None) -> dict:
    """Band-edge-corrected eigenvalue bounds for sign-definite potentials:
    E_1 <= Tr V and E_3 <= Tr(V^3 + (3 d / 8) V) when V >= 0 (reversed for
    V <= 0), E_n being the xi-moment outside the band.  The literal
    inequalities on the raw eigenvalue sums are reported as observations.
    """
    if not V.is_sign_definite():
        raise ValidationError("bounds require a sign-definite potential")
    if report is None:
        report = moment_identity(V, nmax=3, convention=convention)
    d = V.dim
    tr_v = float(sum(float(v) for v in V.entries.values()))
    tr_v3 = float(sum(float(v) ** 3 for v in V.entries.values())) + (3.0 * d / 8.0) * tr_v
    positive = all(v >= 0 for v in V.entries.values())
    e1, e3 = report.moments_outside[0], report.moments_outside[2]
    s1, s3 = report.eigen_sum_literal[0], report.eigen_sum_literal[2]
    slack = 1e-9 * (1.0 + abs(tr_v) + abs(tr_v3))
    if positive:
        ok = (e1 <= tr_v + slack) and (e3 <= tr_v3 + slack)
        literal = (s1 <= tr_v + slack) and (s3 <= tr_v3 + slack)
    else:
        ok = (e1 >= tr_v - slack) and (e3 >= tr_v3 - slack)
        literal = (s1 >= tr_v - slack) and (s3 >= tr_v3 - slack)
    return {
        "positive": positive,
        "moment_bounds_hold": bool(ok),
        "literal_bounds_hold": bool(literal),
        "E1": e1, "E3": e3, "trace_V": tr_v, "trace_V3_term": tr_v3,
        "sum_lam": s1, "sum_lam3": s3,
    }
