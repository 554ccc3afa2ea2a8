"""Recovery of a box-supported potential from complex-energy scattering data.

The data are samples of the reduced kernel

    B(z; theta, theta') = B0 - B1,
    B0 = sum_n e^{-i n.(zeta(z,theta) - zeta(z,theta'))} V(n),
    B1 = sum_{m,n} e^{-i m.zeta(z,theta)} V(m) R(z^2)_{mn} V(n) e^{i n.zeta(z,theta')},

with zeta_j = 2 arcsin(z theta_j) the analytic continuation of the
surface chart, evaluated along z_N = N + i.  For theta_j > 0 > theta'_j
the phase factors grow like (2N)^{4 S(n)} prod_j (theta_j theta'_j)^{2 n_j},
S(n) = sum n_j, which grades the data by the layers S(n) = const: the
layer sweep walks p = dM .. -dM, subtracting the already-known layers
(including their B1 contribution through the resolvent of H0 + V_{>p})
and Richardson-fitting the coefficient of (2N)^{4p} in 1/N.

The sweep alone cannot reach the deep layers: the fitted coefficient of
layer q carries an O(1/N^4)-extrapolation error which re-enters lower
layers multiplied by (2N)^{4(q-p)}, so errors explode geometrically with
depth no matter the precision.  `reconstruct` therefore follows the
sweep with a Gauss-Newton refinement of all box entries against the
exact forward model (column-equilibrated least squares); with exact
data at 60 digits this recovers every entry, the small-N rungs carrying
the information of the deep layers.

Everything here runs in mpmath arbitrary precision (default 60 digits:
the data span a dynamic range of ~(2N)^{8 dM}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

import mpmath as mp
import numpy as np

from .errors import NumericsError, ValidationError
from .green import green_series_mp
from .lattice import LatticePoint, Potential

DEFAULT_DIGITS = 60
DEFAULT_LADDER = (2 ** 10, 2 ** 11, 2 ** 12, 2 ** 13, 2 ** 14)
DEFAULT_PAIRS = 8
FIT_DEGREE = 3
COND_LIMIT = 1e9


def zeta(z, theta: Sequence[float], dps: int = DEFAULT_DIGITS):
    """Componentwise 2 arcsin(z theta_j) on the principal branch
    (single-valued off the cuts |z theta_j| >= 1 on the real axis,
    real-limit consistent on (-1, 1))."""
    with mp.workdps(dps):
        z = mp.mpmathify(z)
        out = []
        for t in theta:
            t = mp.mpf(t)
            if t == 0:
                raise ValidationError("zeta needs nonzero direction components")
            w = z * t
            if mp.im(w) == 0 and abs(mp.re(w)) >= 1:
                raise ValidationError(f"z*theta_j = {w} lies on the arcsin cut")
            out.append(2 * mp.asin(w))
        return tuple(out)


def zeta_remainder_orders(tau: float, ns: Sequence[int], dps: int = 40
                          ) -> Tuple[float, float]:
    """Fitted decay orders of the real/imaginary remainders of
    f(N + i, tau) = 2 arcsin((N + i) tau) against the leading asymptotics

        Re f ~ eps(tau) (pi - 2/N)   (mod 2 pi),
        Im f ~ eps(tau) (2 log N + log(4 tau^2)).

    Returns (re_order, im_order); the model orders are (-3, -2)."""
    eps = 1.0 if tau > 0 else -1.0
    res_re, res_im = [], []
    with mp.workdps(dps):
        t = mp.mpf(tau)
        for n in ns:
            f = 2 * mp.asin((n + 1j) * t)
            rr = mp.re(f) - eps * (mp.pi - mp.mpf(2) / n)
            rr = (rr + mp.pi) % (2 * mp.pi) - mp.pi
            ri = mp.im(f) - eps * (2 * mp.log(n) + mp.log(4 * t ** 2))
            res_re.append(abs(rr))
            res_im.append(abs(ri))
    logn = np.log(np.asarray(ns, dtype=float))
    fit = lambda r: float(np.polyfit(logn, np.log(np.array([float(x) for x in r])), 1)[0])
    return fit(res_re), fit(res_im)


# ---------------------------------------------------------------------------
# Forward model
# ---------------------------------------------------------------------------

def box_sites(d: int, M: int) -> Tuple[LatticePoint, ...]:
    import itertools
    return tuple(itertools.product(range(-M, M + 1), repeat=d))


def layer_sites(d: int, M: int, p: int) -> Tuple[LatticePoint, ...]:
    return tuple(n for n in box_sites(d, M) if sum(n) == p)


class _MPModel:
    """Forward kernel B(z; theta, theta') for a potential given as an
    mp-valued dict over the box sites.  Caches the free-kernel matrix per
    energy (potential-independent) and the zeta phases per (z, theta)."""

    def __init__(self, d: int, sites: Sequence[LatticePoint], dps: int):
        self.d = d
        self.sites = tuple(sites)
        self.dps = dps
        self._g0: Dict = {}
        self._zeta: Dict = {}

    def g0(self, z):
        key = mp.nstr(mp.mpmathify(z), 25)
        if key not in self._g0:
            with mp.workdps(self.dps):
                z2 = mp.mpmathify(z) ** 2
                vals: Dict[LatticePoint, mp.mpc] = {}
                n = len(self.sites)
                G = mp.matrix(n, n)
                for i, a in enumerate(self.sites):
                    for j, b in enumerate(self.sites):
                        k = tuple(x - y for x, y in zip(a, b))
                        kk = tuple(sorted((abs(c) for c in k), reverse=True))
                        if kk not in vals:
                            vals[kk] = green_series_mp(kk, z2, self.d, self.dps)
                        G[i, j] = vals[kk]
                self._g0[key] = G
        return self._g0[key]

    def phases(self, z, theta):
        key = (mp.nstr(mp.mpmathify(z), 25), tuple(float(t) for t in theta))
        if key not in self._zeta:
            with mp.workdps(self.dps):
                zt = zeta(z, theta, self.dps)
                self._zeta[key] = tuple(
                    mp.exp(-1j * mp.fsum(n_j * z_j for n_j, z_j in zip(n, zt)))
                    for n in self.sites)
        return self._zeta[key]

    def resolvent(self, z, values: Sequence) -> mp.matrix:
        """R(z^2) on the box sites for the potential `values` (list aligned
        with self.sites): (I + G0 diag(v))^{-1} G0."""
        with mp.workdps(self.dps):
            G = self.g0(z)
            n = len(self.sites)
            A = mp.matrix(n, n)
            for i in range(n):
                for j in range(n):
                    A[i, j] = G[i, j] * values[j]
                A[i, i] += 1
            try:
                return A ** -1 * G
            except ZeroDivisionError as exc:
                raise NumericsError(f"dressing matrix singular at z = {z}") from exc

    def b_parts(self, z, theta, theta_p, values):
        """(B0, B1, e, f, R) caching-heavy evaluation of both kernel parts."""
        with mp.workdps(self.dps):
            e = self.phases(z, theta)                    # e^{-i n zeta}
            f_conj = self.phases(z, theta_p)             # e^{-i n zeta'}
            f = tuple(1 / x for x in f_conj)             # e^{+i n zeta'}
            b0 = mp.fsum(en * fn * v for en, fn, v in zip(e, f, values) if v != 0)
            R = self.resolvent(z, values)
            u = mp.matrix([en * v for en, v in zip(e, values)])
            w = mp.matrix([fn * v for fn, v in zip(f, values)])
            Rw = R * w
            b1 = mp.fsum(u[i] * Rw[i] for i in range(len(self.sites)))
            return b0, b1, e, f, R, u, Rw

    def b_value(self, z, theta, theta_p, values):
        b0, b1, *_ = self.b_parts(z, theta, theta_p, values)
        return b0 - b1


class ForwardModel:
    """Scattering-data oracle for a known potential (closed-loop source)."""

    def __init__(self, V: Potential, digits: int = DEFAULT_DIGITS):
        self.V = V
        self.digits = digits
        self._model = _MPModel(V.dim, box_sites(V.dim, V.box_radius()), digits)
        with mp.workdps(digits):
            self._values = [self._to_mp(V.entries.get(n, 0)) for n in self._model.sites]

    @staticmethod
    def _to_mp(v):
        from fractions import Fraction
        if isinstance(v, Fraction):
            return mp.mpf(v.numerator) / v.denominator
        return mp.mpf(v)

    def __call__(self, z, theta, theta_p):
        return self._model.b_value(z, theta, theta_p, self._values)


def tabulated_evaluator(records: Iterable, digits: int = DEFAULT_DIGITS,
                        match_tol: float = 1e-9) -> Callable:
    """Evaluator backed by a finite table of (z, theta, theta', B) records."""
    table = []
    for r in records:
        table.append((complex(r.z), tuple(float(t) for t in r.theta),
                      tuple(float(t) for t in r.theta_prime), r.value))

    def ev(z, theta, theta_p):
        zc = complex(z)
        th = tuple(float(t) for t in theta)
        tp = tuple(float(t) for t in theta_p)
        for rz, rt, rp, val in table:
            if (abs(rz - zc) <= match_tol * (1 + abs(zc))
                    and max(abs(a - b) for a, b in zip(rt, th)) <= match_tol
                    and max(abs(a - b) for a, b in zip(rp, tp)) <= match_tol):
                return mp.mpmathify(val)
        raise ValidationError(f"no data record for z = {zc}, theta = {th}, theta' = {tp}")

    return ev


@dataclass(frozen=True)
class ComplexAngleData:
    """One scattering-data record at complex energy parameter z = N + i."""
    z: complex
    theta: Tuple[float, ...]
    theta_prime: Tuple[float, ...]
    value: complex


# ---------------------------------------------------------------------------
# Sample design
# ---------------------------------------------------------------------------

def design_samples(d: int, count: int = DEFAULT_PAIRS
                   ) -> List[Tuple[Tuple[float, ...], Tuple[float, ...]]]:
    """Direction pairs (theta in S_+^{d-1}, theta' in S_-^{d-1}) whose
    products t_j = theta_j theta'_j give a well-conditioned monomial system
    per layer (geometrically spread ratios).  An engineering choice: only
    the openness of the product map is guaranteed a priori."""
    if d == 1:
        return [((1.0,), (-1.0,))] * 1
    if d == 2:
        mags = np.geomspace(0.12, 0.62, count)
        out = []
        for m in mags:
            a = math.acos(math.sqrt(m))        # cos^2 a = m
            th = (math.cos(a), math.sin(a))
            out.append((th, (-th[0], -th[1])))
        return out
    if d == 3:
        mags = np.geomspace(0.15, 0.55, count)
        out = []
        for i, m in enumerate(mags):
            a = math.acos(math.sqrt(m))
            b = 0.5 + 0.35 * math.sin(1.7 * i + 0.4)
            th = np.array([math.cos(a) * math.cos(b), math.cos(a) * math.sin(b), math.sin(a)])
            th = np.abs(th) / np.linalg.norm(th)
            out.append((tuple(th), tuple(-th)))
        return out
    raise ValidationError("sample designs cover d in {1, 2, 3}")


# ---------------------------------------------------------------------------
# Layer sweep
# ---------------------------------------------------------------------------

@dataclass
class ReconstructionState:
    dim: int
    M: int
    layer: int
    recovered: Dict[LatticePoint, object] = field(default_factory=dict)
    digits: int = DEFAULT_DIGITS


def _polyfit_constant(us: Sequence, ys: Sequence, deg: int):
    """Least-squares polynomial fit in mp arithmetic; returns (c0, residual)."""
    rows, cols = len(us), deg + 1
    A = mp.matrix(rows, cols)
    for i, u in enumerate(us):
        p = mp.mpf(1)
        for j in range(cols):
            A[i, j] = p
            p *= u
    y = mp.matrix(ys)
    c = mp.qr_solve(A, y)[0] if rows > cols else mp.lu_solve(A, y)
    resid = max(abs(mp.fsum(A[i, j] * c[j] for j in range(cols)) - y[i])
                for i in range(rows))
    return c[0], resid


def layer_extract(state: ReconstructionState, model: _MPModel,
                  b_data: Dict, samples, ladder) -> Tuple[Dict, dict]:
    """Solve one layer S(n) = p from the data, subtracting the recovered
    layers exactly (their B0 phases and their B1 through the resolvent of
    H0 + V_{>p}) and fitting the (2N)^{4p} coefficient in 1/N."""
    p = state.layer
    d, M = state.dim, state.M
    sites = layer_sites(d, M, p)
    with mp.workdps(state.digits):
        vals_known = [mp.mpmathify(state.recovered.get(n, 0)) for n in model.sites]
        c0s, fit_resids = [], []
        for (theta, theta_p) in samples:
            us, gs = [], []
            for N in ladder:
                z = mp.mpc(N, 1)
                b0k, b1k, *_ = model.b_parts(z, theta, theta_p, vals_known)
                # subtract the known layers' B0 and add back their B1
                # (mirrors the resolvent split by H0 + V_{>p})
                resid = b_data[(N, theta, theta_p)] - b0k + b1k
                scale = (2 * mp.mpf(N)) ** (4 * p)
                us.append(mp.mpf(1) / N)
                gs.append(resid / scale)
            deg = min(FIT_DEGREE, len(ladder) - 1)
            c0, fr = _polyfit_constant(us, gs, deg)
            c0s.append(c0)
            fit_resids.append(fr)

        # monomial system: sum_{S(n)=p} prod_j (t_j^2)^{n_j} V(n) = c0(pair)
        rows = len(samples)
        A = mp.matrix(rows, len(sites))
        for i, (theta, theta_p) in enumerate(samples):
            for j, n in enumerate(sites):
                prod = mp.mpf(1)
                for tj, tpj, nj in zip(theta, theta_p, n):
                    prod *= (mp.mpf(tj) * tpj) ** (2 * nj)
                A[i, j] = prod
        Afl = np.array([[float(A[i, j]) for j in range(len(sites))] for i in range(rows)])
        cond = float(np.linalg.cond(Afl)) if min(Afl.shape) > 0 else 1.0
        if cond > COND_LIMIT:
            raise NumericsError(f"layer {p}: monomial system condition {cond:.2e}; "
                                "add sample pairs")
        y = mp.matrix([mp.re(c) for c in c0s])
        imag_leak = max(abs(mp.im(c)) for c in c0s)
        sol = mp.qr_solve(A, y)[0] if rows > len(sites) else mp.lu_solve(A, y)
        out = {n: sol[j] for j, n in enumerate(sites)}
        diag = {"layer": p, "sites": len(sites),
                "fit_residual": float(max(fit_resids)),
                "imag_leak": float(imag_leak),
                "condition": cond}
        return out, diag


# ---------------------------------------------------------------------------
# Gauss-Newton refinement on the exact forward model
# ---------------------------------------------------------------------------

def _gn_refine(model: _MPModel, b_data: Dict, samples, ladder, start: Dict,
               digits: int, max_iter: int = 12) -> Tuple[Dict, dict]:
    sites = model.sites
    K = len(sites)
    with mp.workdps(digits):
        v = [mp.mpmathify(start.get(n, 0)) for n in sites]
        history = []
        for it in range(max_iter):
            rows = []
            rhs = []
            for (theta, theta_p) in samples:
                for N in ladder:
                    z = mp.mpc(N, 1)
                    b0, b1, e, f, R, u, Rw = model.b_parts(z, theta, theta_p, v)
                    bmod = b0 - b1
                    data = b_data[(N, theta, theta_p)]
                    scale = 1 + abs(data)
                    uR = R.T * u      # (u^T R)_k as a column
                    jac = []
                    for k in range(K):
                        dk = e[k] * f[k] - (e[k] * Rw[k] + uR[k] * f[k] - uR[k] * Rw[k])
                        jac.append(dk / scale)
                    rows.append(jac)
                    rhs.append((data - bmod) / scale)
            # column equilibration, stacked real least squares
            colnorm = []
            for k in range(K):
                s = mp.sqrt(mp.fsum(abs(r[k]) ** 2 for r in rows))
                colnorm.append(s if s > 0 else mp.mpf(1))
            A = mp.matrix(2 * len(rows), K)
            b = mp.matrix(2 * len(rows), 1)
            for i, (r, y) in enumerate(zip(rows, rhs)):
                for k in range(K):
                    A[2 * i, k] = mp.re(r[k] / colnorm[k])
                    A[2 * i + 1, k] = mp.im(r[k] / colnorm[k])
                b[2 * i] = mp.re(y)
                b[2 * i + 1] = mp.im(y)
            step = mp.qr_solve(A, b)[0]
            vnew = [vi + step[k] / colnorm[k] for k, vi in enumerate(v)]
            stepsize = max(abs(step[k] / colnorm[k]) for k in range(K))
            resid = max(abs(x) for x in rhs)
            history.append({"iteration": it, "step": float(stepsize),
                            "scaled_residual": float(resid)})
            v = vnew
            if stepsize < mp.mpf(10) ** (-(digits - 8)):
                break
        return {n: v[j] for j, n in enumerate(sites)}, {"iterations": history}


# ---------------------------------------------------------------------------
# Full reconstruction
# ---------------------------------------------------------------------------

def reconstruct(evaluator: Callable, d: int, M: int, digits: int = DEFAULT_DIGITS,
                samples=None, ladder: Sequence[int] = DEFAULT_LADDER,
                polish: bool = True) -> Tuple[Potential, dict]:
    """Recover a potential supported in {|n_j| <= M} from the data
    evaluator B(z, theta, theta').

    Runs the descending layer sweep p = dM .. -dM (whose per-layer fit
    diagnostics quantify how the extraction degrades with depth), then the
    Gauss-Newton polish against the exact forward model unless
    polish=False.  Returns the recovered potential (float entries) and a
    diagnostics report."""
    if digits < 30:
        raise ValidationError("reconstruction needs >= 30 digits")
    if samples is None:
        samples = design_samples(d)
    sites = box_sites(d, M)
    model = _MPModel(d, sites, digits)
    with mp.workdps(digits):
        b_data: Dict = {}
        for (theta, theta_p) in samples:
            for N in ladder:
                b_data[(N, theta, theta_p)] = mp.mpmathify(
                    evaluator(mp.mpc(N, 1), theta, theta_p))

        state = ReconstructionState(d, M, d * M, {}, digits)
        layer_diags = []
        for p in range(d * M, -d * M - 1, -1):
            state.layer = p
            got, diag = layer_extract(state, model, b_data, samples, ladder)
            state.recovered.update(got)
            layer_diags.append(diag)

        sweep_values = dict(state.recovered)
        report = {"layers": layer_diags, "polish": None,
                  "digits": digits, "ladder": list(ladder),
                  "samples": [(list(a), list(b)) for a, b in samples]}
        final = sweep_values
        if polish:
            final, pol = _gn_refine(model, b_data, samples, ladder, sweep_values, digits)
            report["polish"] = pol
        entries = {n: float(v) for n, v in final.items() if abs(v) > 1e-30}
        report["sweep_values"] = {str(n): float(v) for n, v in sweep_values.items()}
        return Potential(d, entries), report
