"""Kernel-level diagnostics: distance-standard report, Dini functional,
and small-scale/large-scale limit profiles."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NonpositiveKernel, NotRadial, OrderUnavailable
from .kernels import fibonacci_sphere, require_radial
from .quadrature import integrate


@dataclass
class GridSpec:
    """Log-radial x angular sampling grid for kernel suprema."""

    r_min: float = 1e-6
    r_max: float = 1e6
    radial_count: int = 49
    directions: int = 64  # >= 256 recommended for n = 3

    def radii(self):
        return np.logspace(np.log10(self.r_min), np.log10(self.r_max), self.radial_count)

    def points(self, n):
        if n == 2:
            ang = np.linspace(0.0, 2.0 * np.pi, self.directions, endpoint=False)
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            dirs = fibonacci_sphere(max(self.directions, 256) if n == 3 else self.directions)
        r = self.radii()
        return (r[:, None, None] * dirs[None, :, :]).reshape(-1, n), r, dirs


@dataclass
class DistanceStandardReport:
    sup_K: float
    sup_gradK_x: float
    sup_hessK_x2: float
    sup_inv_K: float
    sup_d3K_x3: float | None
    grid_spec: GridSpec
    verdict: bool

    def rows(self):
        yield ("sup_K", self.sup_K)
        yield ("sup_gradK_x", self.sup_gradK_x)
        yield ("sup_hessK_x2", self.sup_hessK_x2)
        yield ("sup_inv_K", self.sup_inv_K)
        if self.sup_d3K_x3 is not None:
            yield ("sup_d3K_x3", self.sup_d3K_x3)


def distance_standard_report(kernel, grid=None):
    """Sampled suprema of |nabla^m K| |x|^m (m <= 2, and 3 when available) and 1/K.

    Raises NonpositiveKernel if any sample is <= 0.  Derivative norms are
    Euclidean/Frobenius on the documented grid.
    """
    grid = grid or GridSpec()
    X, r_axis, dirs = grid.points(kernel.n)
    r = np.sqrt(np.sum(X * X, axis=1))
    vals = kernel.values(X)
    if np.any(vals <= 0.0):
        i = int(np.argmin(vals))
        raise NonpositiveKernel(f"K({X[i]}) = {vals[i]:.6g} <= 0")
    sup_K = float(np.max(vals))
    sup_inv = float(np.max(1.0 / vals))
    if kernel.derivative_order >= 1:
        g = kernel.gradients(X)
        sup_g = float(np.max(np.linalg.norm(g, axis=1) * r))
    else:
        sup_g = float("nan")
    if kernel.derivative_order >= 2:
        H = kernel.hessians(X)
        sup_h = float(np.max(np.sqrt(np.sum(H * H, axis=(1, 2))) * r**2))
    else:
        sup_h = float("nan")
    sup_3 = None
    if kernel.derivative_order >= 3:
        T = kernel.thirds(X)
        sup_3 = float(np.max(np.sqrt(np.sum(T * T, axis=(1, 2, 3))) * r**3))
    verdict = bool(
        np.isfinite([sup_K, sup_g, sup_h, sup_inv]).all() and sup_inv < np.inf
    )
    return DistanceStandardReport(sup_K, sup_g, sup_h, sup_inv, sup_3, grid, verdict)


def dini_functional(kernel, k0, k1, m, t_range=(1e-6, 1e6), rel_tol=1e-10):
    """Weighted log-scale L^2 mismatch from the constants k0 (near 0) and k1 (near inf):

        int_{t_lo}^1 (t^m (K - k0)^(m))^2 dt/t  +  int_1^{t_hi} (t^m (K - k1)^(m))^2 dt/t

    computed in the log variable.  Requires a radial kernel with m derivatives.
    """
    prof = require_radial(kernel)
    if m > prof.max_log_order:
        raise OrderUnavailable(f"profile supports order {prof.max_log_order}")
    t_lo, t_hi = t_range
    if not (0.0 < t_lo < 1.0 < t_hi):
        raise ValueError("need 0 < t_lo < 1 < t_hi")

    def low(u):
        t = np.exp(u)
        base = prof.scaled_deriv(t, m) - (k0 if m == 0 else 0.0)
        return base**2

    def high(u):
        t = np.exp(u)
        base = prof.scaled_deriv(t, m) - (k1 if m == 0 else 0.0)
        return base**2

    a = integrate(lambda u: float(low(np.array([u]))[0]), np.log(t_lo), 0.0, rel_tol=rel_tol, abs_tol=1e-14)
    b = integrate(lambda u: float(high(np.array([u]))[0]), 0.0, np.log(t_hi), rel_tol=rel_tol, abs_tol=1e-14)
    return a + b


def dini_verdict(kernel, k0, k1, m, base_range=(1e-4, 1e4), growth_tol=0.25):
    """Convergent/divergent verdict by comparing nested log-ranges.

    Returns (verdict, values) where values are the functional on the base
    range, the doubled range, and the quadrupled range (in log width).
    """
    lo, hi = base_range
    vals = []
    for scale in (1.0, 2.0, 4.0):
        vals.append(dini_functional(kernel, k0, k1, m, (lo**scale, hi**scale)))
    increments = np.diff(vals)
    converged = bool(
        vals[-1] < 1e-12
        or increments[-1] <= growth_tol * max(vals[0], 1e-300)
    )
    return ("convergent" if converged else "divergent"), vals


@dataclass
class LimitProfileReport:
    lambdas: np.ndarray
    annulus_points: np.ndarray
    profiles: np.ndarray  # (len(lambdas), len(points))
    cauchy_diffs: np.ndarray
    non_cauchy: bool
    constant_estimate: float | None = None

    @property
    def final(self):
        return self.profiles[-1]


def limit_profile(kernel, end="zero", lambdas=None, annulus_count=96):
    """Evaluate K(lambda_j x) on the annulus 1 <= |x| <= 2 and report
    sup-norm Cauchy differences of consecutive rescalings.

    ``end`` selects dyadic lambda_j -> 0 ('zero') or -> inf ('inf').
    For radial kernels a scalar limit estimate is attached.
    """
    if lambdas is None:
        exponents = np.arange(1, 25)
        lambdas = 2.0 ** (-exponents) if end == "zero" else 2.0**exponents
    lambdas = np.asarray(lambdas, dtype=float)
    radii = np.linspace(1.0, 2.0, 8)
    if kernel.n == 2:
        ang = np.linspace(0.0, 2.0 * np.pi, max(8, annulus_count // 8), endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        dirs = fibonacci_sphere(max(16, annulus_count // 8))
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, kernel.n)
    profs = np.stack([kernel.values(pts * lam) for lam in lambdas])
    diffs = np.max(np.abs(np.diff(profs, axis=0)), axis=1)
    tail = diffs[len(diffs) // 2 :]
    non_cauchy = bool(len(tail) >= 2 and tail[-1] > 2.0 * max(tail[0], 1e-15))
    est = None
    if kernel.is_radial or kernel.radial_profile() is not None:
        est = float(np.mean(profs[-1]))
    return LimitProfileReport(lambdas, pts, profs, diffs, non_cauchy, est)
