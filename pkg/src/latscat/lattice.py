"""Lattice geometry, potentials and exact trace moments.

The free Hamiltonian acts on finitely supported functions of Z^d by

    (H0 f)(n) = (d/2) f(n) - (1/4) sum_j [ f(n+e_j) + f(n-e_j) ]

in the ``standard`` convention (spectrum [0, d]);  the ``centered``
convention drops the (d/2) term, which shifts the spectrum to
[-d/2, d/2].  Potentials are real multiplication operators with finite
support.  Everything in this module is exact when the inputs are exact:
functions with int/Fraction values stay rational through `apply_h0`,
`apply_h` and `trace_moments`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Dict, Iterable, Mapping, Sequence, Tuple

from .errors import ResourceLimitError, ValidationError

LatticePoint = Tuple[int, ...]

STANDARD = "standard"
CENTERED = "centered"

TRACE_MOMENT_CAP = 12


def check_convention(convention: str) -> str:
    if convention not in (STANDARD, CENTERED):
        raise ValidationError(f"unknown convention {convention!r}")
    return convention


def band(d: int, convention: str = STANDARD) -> Tuple[float, float]:
    """Essential spectrum [alpha, beta] of H0 in the given convention."""
    check_convention(convention)
    if convention == STANDARD:
        return 0.0, float(d)
    return -d / 2.0, d / 2.0


def convention_shift(d: int, convention: str) -> float:
    """Energy shift from the given convention to the standard one."""
    check_convention(convention)
    return 0.0 if convention == STANDARD else d / 2.0


def l1_norm(n: Sequence[int]) -> int:
    return sum(abs(int(c)) for c in n)


def l1_distance(m: Sequence[int], n: Sequence[int]) -> int:
    return sum(abs(int(a) - int(b)) for a, b in zip(m, n))


def _as_point(n: Sequence[int], dim: int) -> LatticePoint:
    p = tuple(int(c) for c in n)
    if len(p) != dim:
        raise ValidationError(f"lattice point {p} has dimension {len(p)}, expected {dim}")
    return p


def l1_ball(dim: int, radius: int) -> Iterable[LatticePoint]:
    """All points of Z^dim with l1 norm <= radius."""
    if radius < 0:
        return
    for p in itertools.product(range(-radius, radius + 1), repeat=dim):
        if l1_norm(p) <= radius:
            yield p


def _is_exact(value) -> bool:
    return isinstance(value, Rational)


@dataclass(frozen=True)
class Potential:
    """Finitely supported real potential on Z^dim.

    Values may be ints, Fractions or floats; rational values keep the
    exact arithmetic paths alive (trace moments, closed-form moments).
    """

    dim: int
    entries: Mapping[LatticePoint, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dimension must be >= 1")
        clean: Dict[LatticePoint, object] = {}
        for n, v in dict(self.entries).items():
            p = _as_point(n, self.dim)
            if isinstance(v, complex):
                raise ValidationError("potential values must be real")
            if not isinstance(v, (int, float, Fraction)):
                raise ValidationError(f"unsupported potential value type {type(v)!r}")
            if isinstance(v, float) and not math.isfinite(v):
                raise ValidationError("potential values must be finite")
            if v != 0:
                clean[p] = v
        object.__setattr__(self, "entries", clean)

    # -- basic queries -------------------------------------------------
    def support(self) -> Tuple[LatticePoint, ...]:
        return tuple(sorted(self.entries))

    def value(self, n: Sequence[int]):
        return self.entries.get(tuple(int(c) for c in n), 0)

    def trace_norm(self) -> float:
        """sum_n |V(n)|  (trace norm of the multiplication operator)."""
        return float(sum(abs(v) for v in self.entries.values()))

    def sup_norm(self) -> float:
        return float(max((abs(v) for v in self.entries.values()), default=0.0))

    def box_radius(self) -> int:
        """Smallest M with supp V contained in {|n_j| <= M}."""
        return max((max(abs(c) for c in n) for n in self.entries), default=0)

    def is_rational(self) -> bool:
        return all(_is_exact(v) for v in self.entries.values())

    def is_sign_definite(self) -> bool:
        vals = list(self.entries.values())
        return all(v >= 0 for v in vals) or all(v <= 0 for v in vals)

    def scaled(self, c) -> "Potential":
        return Potential(self.dim, {n: c * v for n, v in self.entries.items()})

    def restricted(self, keep) -> "Potential":
        """Sub-potential keeping the sites where keep(n) is true."""
        return Potential(self.dim, {n: v for n, v in self.entries.items() if keep(n)})

    def offsets(self) -> Tuple[LatticePoint, ...]:
        """All pairwise differences m - n over the support (for kernel tables)."""
        supp = self.support()
        out = {tuple(a - b for a, b in zip(m, n)) for m in supp for n in supp}
        return tuple(sorted(out))


def delta(dim: int, n: Sequence[int] = None, value=1) -> Potential:
    """Single-site potential value * delta_n (default site: origin)."""
    if n is None:
        n = (0,) * dim
    return Potential(dim, {tuple(int(c) for c in n): value})


# ---------------------------------------------------------------------------
# Hamiltonian application on finitely supported functions
# ---------------------------------------------------------------------------

_QUARTER = Fraction(1, 4)


def apply_h0(f: Mapping[LatticePoint, object], d: int, convention: str = STANDARD) -> Dict:
    """Apply the free Hamiltonian to a finitely supported function.

    The support grows by l1 distance 1.  Exact for rational/complex-exact
    inputs (the stencil constants are dyadic rationals).
    """
    check_convention(convention)
    half_d = Fraction(d, 2) if convention == STANDARD else 0
    out: Dict[LatticePoint, object] = {}
    for n, v in f.items():
        n = _as_point(n, d)
        if half_d:
            out[n] = out.get(n, 0) + half_d * v
        hop = _QUARTER * v
        for j in range(d):
            for s in (1, -1):
                q = n[:j] + (n[j] + s,) + n[j + 1:]
                out[q] = out.get(q, 0) - hop
    return {n: v for n, v in out.items() if v != 0}


def apply_h(f: Mapping[LatticePoint, object], V: Potential, convention: str = STANDARD) -> Dict:
    """Apply H = H0 + V."""
    out = apply_h0(f, V.dim, convention)
    for n, v in f.items():
        n = _as_point(n, V.dim)
        w = V.entries.get(n)
        if w:
            out[n] = out.get(n, 0) + w * v
            if out[n] == 0:
                del out[n]
    return out


# ---------------------------------------------------------------------------
# Exact trace moments Tr(H^n - H0^n)
# ---------------------------------------------------------------------------

def _fatten(points: Iterable[LatticePoint], dim: int, radius: int) -> Tuple[LatticePoint, ...]:
    out = set()
    offs = list(l1_ball(dim, radius))
    for p in points:
        for o in offs:
            out.add(tuple(a + b for a, b in zip(p, o)))
    return tuple(sorted(out))


def _int_scale(V: Potential) -> int:
    lcm = 1
    for v in V.entries.values():
        q = Fraction(v).denominator
        lcm = lcm * q // math.gcd(lcm, q)
    return lcm


def _evolve(start: LatticePoint, steps: int, dim: int, diag: Dict[LatticePoint, object], hop, stay0):
    """Return [psi_0, ..., psi_steps] for psi_{k+1} = M psi_k, psi_0 = delta_start.

    M has off-diagonal `hop` to the 2*dim neighbours, diagonal
    stay0 + diag[n].  Works for ints and floats alike.
    """
    psi = {start: 1 if isinstance(hop, int) else 1.0}
    out = [psi]
    for _ in range(steps):
        new: Dict[LatticePoint, object] = {}
        for n, v in psi.items():
            dval = stay0 + diag.get(n, 0)
            if dval:
                new[n] = new.get(n, 0) + dval * v
            hv = hop * v
            for j in range(dim):
                for s in (1, -1):
                    q = n[:j] + (n[j] + s,) + n[j + 1:]
                    new[q] = new.get(q, 0) + hv
        psi = new
        out.append(psi)
    return out


def _dot(a: Dict, b: Dict):
    if len(b) < len(a):
        a, b = b, a
    return sum(v * b[k] for k, v in a.items() if k in b)


def trace_moments(V: Potential, nmax: int, convention: str = CENTERED, radius: int = None):
    """Exact moments F_n = Tr(H^n - H0^n), n = 1..nmax.

    The diagonal of H^n - H0^n is supported in the l1 fattening of
    supp V by nmax, so the trace is a finite sum of matrix elements that
    are computed by evolving delta functions.  Rational potentials give
    exact Fractions; float potentials take a float path.

    `radius` overrides the fattening radius (results must not depend on
    it once it is >= nmax; enlarging it only adds exact zeros).
    """
    check_convention(convention)
    if nmax < 1:
        return []
    if nmax > TRACE_MOMENT_CAP:
        raise ResourceLimitError(f"trace moments capped at n <= {TRACE_MOMENT_CAP}")
    if radius is None:
        radius = nmax
    if not V.entries:
        zero = Fraction(0) if V.is_rational() else 0.0
        return [zero] * nmax
    region = _fatten(V.support(), V.dim, radius)
    half = nmax - nmax // 2

    if V.is_rational():
        L = _int_scale(V)
        scale = 4 * L  # scale * H has integer entries
        hop = -L
        stay0 = 2 * V.dim * L if convention == STANDARD else 0
        diag = {n: int(4 * L * Fraction(v)) for n, v in V.entries.items()}
        totals = [0] * nmax
    else:
        scale = 1
        hop = -0.25
        stay0 = V.dim / 2.0 if convention == STANDARD else 0.0
        diag = {n: float(v) for n, v in V.entries.items()}
        totals = [0.0] * nmax

    for m in region:
        ph = _evolve(m, half, V.dim, diag, hop, stay0)
        p0 = _evolve(m, half, V.dim, {}, hop, stay0)
        for n in range(1, nmax + 1):
            i, j = n // 2, n - n // 2
            totals[n - 1] += _dot(ph[i], ph[j]) - _dot(p0[i], p0[j])

    if scale == 1:
        return totals
    return [Fraction(t, scale ** n) for n, t in enumerate(totals, start=1)]


def trace_h0_power_against(V: Potential, k: int, p: int, convention: str = CENTERED):
    """Tr(H0^k V^p), exact.  By translation invariance the diagonal of
    H0^k is a constant, so the trace factorizes."""
    check_convention(convention)
    if k > 2 * TRACE_MOMENT_CAP:
        raise ResourceLimitError("power too large")
    origin = (0,) * V.dim
    if V.is_rational():
        psi = _evolve(origin, k, V.dim, {}, -1, 2 * V.dim if convention == STANDARD else 0)
        diag_h0k = Fraction(psi[k].get(origin, 0), 4 ** k)
        return diag_h0k * sum(Fraction(v) ** p for v in V.entries.values())
    psi = _evolve(origin, k, V.dim, {}, -0.25, V.dim / 2.0 if convention == STANDARD else 0.0)
    return psi[k].get(origin, 0.0) * sum(float(v) ** p for v in V.entries.values())
