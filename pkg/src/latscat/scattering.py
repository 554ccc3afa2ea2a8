"""On-shell scattering: energy surface, generalized eigenfunctions,
scattering amplitude and S-matrix.

The energy surface M_lam = {h(x) = lam} on the torus is parametrized by
x_j = 2 arcsin(sqrt(lam) theta_j), theta on the unit sphere, with the
surface measure dM/|grad h| = (sqrt(lam))^{d-2} J(sqrt(lam) theta)/2 dtheta,
J(y) = prod_j 2/sqrt(1 - y_j^2).  The chart covers the whole surface for
lam < 1; at higher energies nodes with |sqrt(lam) theta_j| >= 1 are
flagged excluded and only the chart's coverage is claimed.

The S-matrix S(lam) = I - 2 pi i A(lam) is discretized Nystrom style
with the surface weights; det S is evaluated independently of any grid
through the finite-rank reduction to supp V:

    det S(lam) = det(I - 2 pi i T(lam) Pi(lam)),
    T = V - V R(lam + i0) V,     Pi_{mn} = (1/pi) Im r0(m - n, lam + i0).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from .errors import NumericsError, ValidationError
from .green import SIDE_PLUS, EnergyPoint, kernel_table
from .lattice import STANDARD, Potential, check_convention, convention_shift
from .spectrum import resolvent_matrix

SURFACE_CHECK_TOL = 1e-13


def _check_surface_energy(lam: float, d: int) -> float:
    lam = float(lam)
    if not (0.0 < lam < d) or abs(lam - round(lam)) < 1e-12:
        raise ValidationError(f"surface energies live in (0, {d}) off the integers")
    return lam


def surface_point(lam: float, theta: Sequence[float]) -> Tuple[np.ndarray, float]:
    """Chart point x(sqrt(lam) theta) on M_lam and the Jacobian factor
    J(sqrt(lam) theta).  Requires |sqrt(lam) theta_j| < 1 for every j."""
    theta = np.asarray(theta, dtype=float)
    d = len(theta)
    lam = _check_surface_energy(lam, d)
    y = math.sqrt(lam) * theta
    if np.any(np.abs(y) >= 1.0):
        raise ValidationError(f"chart cutoff: |sqrt(lam) theta| = {np.abs(y).max():.3f} >= 1")
    x = 2.0 * np.arcsin(y)
    jac = float(np.prod(2.0 / np.sqrt(1.0 - y * y)))
    h = float(np.sum(np.sin(x / 2.0) ** 2))
    if abs(h - lam) > SURFACE_CHECK_TOL * (1.0 + lam):
        raise NumericsError(f"surface point off the level set: h = {h}, lam = {lam}")
    return x, jac


def psi0(n: Sequence[int], lam: float, theta: Sequence[float]) -> complex:
    """Generalized plane-wave eigenfunction sample
    (2 pi)^{-d/2} (sqrt(lam))^{d-2}/2 e^{i n.x} J(sqrt(lam) theta)."""
    theta = np.asarray(theta, dtype=float)
    d = len(theta)
    x, jac = surface_point(lam, theta)
    n = np.asarray(n, dtype=float)
    phase = cmath.exp(1j * float(n @ x))
    return (2.0 * math.pi) ** (-d / 2.0) * math.sqrt(lam) ** (d - 2) / 2.0 * phase * jac


@dataclass
class SurfaceGrid:
    """Discretized energy surface: unit-sphere nodes, chart weights
    approximating the measure dM_lam/|grad h|, and cutoff bookkeeping."""

    dim: int
    lam: float
    nodes: np.ndarray          # (N, d) unit vectors
    weights: np.ndarray        # (N,) positive chart weights
    excluded: np.ndarray       # (N,) bool, |sqrt(lam) theta_j| >= 1 somewhere
    coverage: float            # fraction of sphere weight kept

    @property
    def size(self) -> int:
        return int(np.sum(~self.excluded))

    def active_nodes(self) -> np.ndarray:
        return self.nodes[~self.excluded]

    def active_weights(self) -> np.ndarray:
        return self.weights[~self.excluded]


def surface_grid(d: int, lam: float, n_nodes: int = 256) -> SurfaceGrid:
    """Quadrature grid on M_lam.

    d=1: the two points of S^0; d=2: uniform angles on S^1 (trapezoid is
    spectrally accurate for the analytic weight); d=3: Gauss-Legendre in
    the polar cosine times uniform azimuth, n_nodes = (n_polar, n_azimuth).
    """
    lam = _check_surface_energy(lam, d)
    rt = math.sqrt(lam)
    if d == 1:
        thetas = np.array([[1.0], [-1.0]])
        sphere_w = np.array([1.0, 1.0])
    elif d == 2:
        ang = 2.0 * np.pi * (np.arange(n_nodes) + 0.5) / n_nodes
        thetas = np.column_stack([np.cos(ang), np.sin(ang)])
        sphere_w = np.full(n_nodes, 2.0 * np.pi / n_nodes)
    elif d == 3:
        if isinstance(n_nodes, int):
            n_polar, n_az = max(8, n_nodes // 2), n_nodes
        else:
            n_polar, n_az = n_nodes
        c, wc = np.polynomial.legendre.leggauss(n_polar)
        az = 2.0 * np.pi * (np.arange(n_az) + 0.5) / n_az
        ths, ws = [], []
        for ci, wi in zip(c, wc):
            s = math.sqrt(1.0 - ci * ci)
            for a in az:
                ths.append((s * math.cos(a), s * math.sin(a), ci))
                ws.append(wi * 2.0 * np.pi / n_az)
        thetas = np.array(ths)
        sphere_w = np.array(ws)
    else:
        raise ValidationError("surface grids cover d in {1, 2, 3}")

    y = rt * thetas
    excluded = np.any(np.abs(y) >= 1.0 - 1e-12, axis=1)
    weights = np.zeros(len(thetas))
    keep = ~excluded
    jac = np.prod(2.0 / np.sqrt(np.clip(1.0 - y[keep] ** 2, a_min=1e-300, a_max=None)), axis=1)
    weights[keep] = sphere_w[keep] * rt ** (d - 2) * jac / 2.0
    coverage = float(np.sum(sphere_w[keep]) / np.sum(sphere_w))
    return SurfaceGrid(d, lam, thetas, weights, excluded, coverage)


def surface_measure_coarea(lam: float, d: int = 2, tol: float = 1e-10) -> float:
    """Independent evaluation of int_{M_lam} dM/|grad h| for d = 2: the
    level curve is parametrized by x_1 and integrated as a line integral
    (independent of the chart weights above)."""
    if d != 2:
        raise ValidationError("coarea check implemented for d = 2")
    lam = _check_surface_energy(lam, 2)

    def h1(x):
        return 0.5 * (1.0 - math.cos(x))

    # for each x1 with h1(x1) <= lam (and lam - h1 <= 1) there are x2 = +-x2(x1)
    def integrand(x1):
        mu = lam - h1(x1)
        if mu <= 0.0 or mu >= 1.0:
            return 0.0
        x2 = 2.0 * math.asin(math.sqrt(mu))
        dh1 = 0.5 * math.sin(x1)
        dh2 = 0.5 * math.sin(x2)
        # |dx2/dx1| = |h1'(x1)| / |h2'(x2)|; arc length / |grad h|
        grad = math.hypot(dh1, dh2)
        dx2dx1 = dh1 / dh2
        return math.sqrt(1.0 + dx2dx1 ** 2) / grad

    x1max = 2.0 * math.asin(math.sqrt(min(lam, 1.0 - 1e-15)))
    lo = 0.0
    if lam > 1.0:
        lo = 2.0 * math.asin(math.sqrt(lam - 1.0))
    val, err = quad(integrand, lo, min(x1max, math.pi), limit=400,
                    epsabs=tol, epsrel=tol,
                    points=[lo, min(x1max, math.pi)])
    # 4 quadrants (x1 -> -x1, x2 -> -x2)
    return 4.0 * val


# ---------------------------------------------------------------------------
# Amplitudes
# ---------------------------------------------------------------------------

def _phase_matrix(V: Potential, lam: float, thetas: np.ndarray) -> np.ndarray:
    """E[i, n] = exp(-i x(theta_i) . n) over the support sites."""
    supp = V.support()
    xs = np.array([surface_point(lam, th)[0] for th in thetas])
    ns = np.array(supp, dtype=float)
    return np.exp(-1j * xs @ ns.T)


def born_amplitude(V: Potential, lam: float, theta, theta_p) -> complex:
    """First-order (Born) amplitude kernel
    (2 pi)^{-d} lam^{d-2}/4 J J' sum_n e^{-i n.(x - x')} V(n)."""
    d = V.dim
    x, j1 = surface_point(lam, theta)
    xp, j2 = surface_point(lam, theta_p)
    acc = 0.0 + 0.0j
    for n, v in V.entries.items():
        acc += float(v) * cmath.exp(-1j * float(np.dot(n, x - xp)))
    return (2.0 * math.pi) ** (-d) * lam ** (d - 2) / 4.0 * j1 * j2 * acc


def full_amplitude(V: Potential, lam: float, theta, theta_p,
                   resolvent: np.ndarray = None, accuracy: str = "fast") -> complex:
    """Born amplitude minus the resolvent correction
    (2 pi)^{-d} lam^{d-2}/4 J J' sum_{m,n} e^{-i m.x} V(m) R(lam+i0)_{mn} V(n) e^{i n.x'}."""
    if not V.entries:
        return 0.0 + 0.0j
    d = V.dim
    if resolvent is None:
        _, resolvent = resolvent_matrix(V, lam, side=SIDE_PLUS,
                                        method="direct" if accuracy == "mp" else "fast")
    supp = V.support()
    x, j1 = surface_point(lam, theta)
    xp, j2 = surface_point(lam, theta_p)
    vals = np.array([complex(V.entries[n]) for n in supp])
    left = np.array([cmath.exp(-1j * float(np.dot(n, x))) for n in supp]) * vals
    right = np.array([cmath.exp(1j * float(np.dot(n, xp))) for n in supp]) * vals
    corr = left @ resolvent @ right
    born = born_amplitude(V, lam, theta, theta_p)
    return born - (2.0 * math.pi) ** (-d) * lam ** (d - 2) / 4.0 * j1 * j2 * corr


def amplitude_matrix(V: Potential, lam: float, grid: SurfaceGrid,
                     accuracy: str = "fast") -> np.ndarray:
    """A(lam) sampled on all active node pairs (vectorized assembly)."""
    d = V.dim
    thetas = grid.active_nodes()
    supp = V.support()
    vals = np.array([complex(V.entries[n]) for n in supp])
    E = _phase_matrix(V, lam, thetas)           # (N, S)
    y = math.sqrt(lam) * thetas
    jac = np.prod(2.0 / np.sqrt(1.0 - y * y), axis=1)
    born = (E * vals[None, :]) @ E.conj().T     # sum_n e^{-i x_i n} V(n) e^{+i x_j n}
    if V.entries:
        _, R = resolvent_matrix(V, lam, side=SIDE_PLUS,
                                method="direct" if accuracy == "mp" else "fast")
        corr = (E * vals[None, :]) @ R @ (E.conj() * vals[None, :]).T
    else:
        corr = 0.0
    pref = (2.0 * math.pi) ** (-d) * lam ** (d - 2) / 4.0
    return pref * np.outer(jac, jac) * (born - corr)


@dataclass
class SMatrixPanel:
    grid: SurfaceGrid
    amplitude: np.ndarray
    smatrix: np.ndarray
    defect: float
    det: complex

    def unitarity_defect(self) -> float:
        return self.defect


def s_matrix(V: Potential, lam: float, grid: SurfaceGrid = None, n_nodes: int = 256,
             accuracy: str = "fast") -> SMatrixPanel:
    """Nystrom S-matrix S = I - 2 pi i A W on the weighted surface grid.

    The unitarity defect ||S* W S - W||_2 reflects both the quadrature
    error (spectrally small for analytic kernels) and the accuracy of the
    boundary resolvent."""
    if grid is None:
        grid = surface_grid(V.dim, lam, n_nodes)
    if grid.coverage < 1.0 - 1e-12:
        # chart does not cover M_lam (lam >= 1); weights renormalized to the
        # chart, unitarity only claimed on the covered part
        pass
    A = amplitude_matrix(V, lam, grid, accuracy=accuracy)
    w = grid.active_weights()
    S = np.eye(len(w), dtype=complex) - 2j * np.pi * A * w[None, :]
    W = np.diag(w)
    defect = float(np.linalg.norm(S.conj().T @ W @ S - W, ord=2))
    det = complex(np.linalg.det(S))
    return SMatrixPanel(grid, A, S, defect, det)


def det_s(V: Potential, lam: float, convention: str = STANDARD,
          accuracy: str = "mp") -> complex:
    """Grid-free det S(lam) by finite-rank reduction to supp V.

    |det S| = 1 up to the accuracy of the boundary resolvent; the value
    equals exp(-2 pi i xi(lam)) (checked against the spectral shift
    module in the tests)."""
    check_convention(convention)
    if not V.entries:
        return 1.0 + 0.0j
    lam_std = float(lam) + convention_shift(V.dim, convention)
    supp = V.support()
    method = "direct" if accuracy == "mp" else "fast"
    _, R = resolvent_matrix(V, lam_std, side=SIDE_PLUS, method=method)
    table = kernel_table(V.dim, EnergyPoint(lam_std, SIDE_PLUS),
                         V.offsets(), method=method)
    vals = np.array([complex(V.entries[n]) for n in supp])
    T = np.diag(vals) - np.diag(vals) @ R @ np.diag(vals)
    Pi = np.array([[table.get(tuple(a - b for a, b in zip(m, n))).imag / math.pi
                    for n in supp] for m in supp])
    S = np.eye(len(supp), dtype=complex) - 2j * np.pi * T @ Pi
    det = complex(np.linalg.det(S))
    if abs(abs(det) - 1.0) > 1e-6:
        raise NumericsError(f"|det S| = {abs(det)} strays from 1 at lam = {lam}")
    return det
