"""Radial profiles: 1-D functions on (0, inf) with derivative access.

Profiles are parametrized in the log variable u = log t, which is the
natural scale for every diagnostic in the toolkit.  A profile supplies
d^k/du^k of itself; plain t-derivatives are recovered through the
falling-factorial identity

    t^m f^(m)(t) = sum_k s(m, k) (d/du)^k f,

with s(m, k) the signed Stirling numbers of the first kind.
"""

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import OrderUnavailable

MAX_LOG_ORDER = 8


def _stirling_first(max_m):
    """Rows s[m][k] with t^m d^m/dt^m = sum_k s[m][k] (d/du)^k."""
    rows = [np.array([1.0])]  # m = 0: identity
    poly = np.array([1.0])  # coefficients of theta^k, ascending
    for m in range(1, max_m + 1):
        # multiply by (theta - m + 1)
        shifted = np.concatenate([[0.0], poly])
        poly = shifted + (-(m - 1)) * np.concatenate([poly, [0.0]])
        rows.append(poly.copy())
    return rows


_STIRLING = _stirling_first(MAX_LOG_ORDER)


class RadialProfile:
    """Base class. Subclasses implement log_deriv(u, k) for k <= max_log_order."""

    max_log_order = MAX_LOG_ORDER
    limit_at_zero = None
    limit_at_infinity = None

    def log_deriv(self, u, k):
        raise NotImplementedError

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return self.log_deriv(np.log(t), 0)

    def deriv(self, t, m):
        """m-th t-derivative, m <= max_log_order."""
        if m > self.max_log_order:
            raise OrderUnavailable(f"profile supports order {self.max_log_order}")
        t = np.asarray(t, dtype=float)
        if m == 0:
            return self.value(t)
        u = np.log(t)
        acc = np.zeros_like(u)
        for k in range(1, m + 1):
            c = _STIRLING[m][k]
            if c != 0.0:
                acc = acc + c * self.log_deriv(u, k)
        return acc / t**m

    def scaled_deriv(self, t, m):
        """t^m f^(m)(t): the scale-invariant derivative used by Dini checks."""
        if m > self.max_log_order:
            raise OrderUnavailable(f"profile supports order {self.max_log_order}")
        t = np.asarray(t, dtype=float)
        if m == 0:
            return self.value(t)
        u = np.log(t)
        acc = np.zeros_like(u)
        for k in range(1, m + 1):
            c = _STIRLING[m][k]
            if c != 0.0:
                acc = acc + c * self.log_deriv(u, k)
        return acc

    def rescale(self, lam):
        """Profile of t -> f(lam * t)."""
        return ShiftedProfile(self, np.log(lam))


class ConstantProfile(RadialProfile):
    def __init__(self, c):
        self.c = float(c)
        self.limit_at_zero = self.c
        self.limit_at_infinity = self.c

    def log_deriv(self, u, k):
        u = np.asarray(u, dtype=float)
        return np.full_like(u, self.c) if k == 0 else np.zeros_like(u)


class GaussLogProfile(RadialProfile):
    """f(t) = base + amplitude * exp(-((log t - center)/width)^2)."""

    def __init__(self, base=1.0, amplitude=1.0, center=0.0, width=1.0):
        self.base = float(base)
        self.amplitude = float(amplitude)
        self.center = float(center)
        self.width = float(width)
        self.limit_at_zero = self.base
        self.limit_at_infinity = self.base
        # physicists' Hermite coefficients, ascending powers
        self._herm = [np.array([1.0])]
        for k in range(MAX_LOG_ORDER):
            h = self._herm[k]
            nxt = np.zeros(k + 2)
            nxt[1:] += 2.0 * h
            if k >= 1:
                nxt[: k] -= 2.0 * k * self._herm[k - 1][: k]
            self._herm.append(nxt)

    def log_deriv(self, u, k):
        u = np.asarray(u, dtype=float)
        v = (u - self.center) / self.width
        bump = self.amplitude * np.exp(-(v**2))
        if k == 0:
            return self.base + bump
        hk = np.polynomial.polynomial.polyval(v, self._herm[k])
        return ((-1.0) ** k) * hk * bump / self.width**k


class SinLogProfile(RadialProfile):
    """f(t) = base + amplitude * sin(freq * log t + phase)."""

    def __init__(self, base=1.0, amplitude=0.5, freq=1.0, phase=0.0):
        self.base = float(base)
        self.amplitude = float(amplitude)
        self.freq = float(freq)
        self.phase = float(phase)

    def log_deriv(self, u, k):
        u = np.asarray(u, dtype=float)
        val = self.amplitude * self.freq**k * np.sin(
            self.freq * u + self.phase + 0.5 * np.pi * k
        )
        if k == 0:
            return self.base + val
        return val


class PowerProfile(RadialProfile):
    """f(t) = coef * t^p  (f = coef * exp(p u) in log scale)."""

    def __init__(self, p, coef=1.0):
        self.p = float(p)
        self.coef = float(coef)

    def log_deriv(self, u, k):
        u = np.asarray(u, dtype=float)
        return self.coef * self.p**k * np.exp(self.p * u)


class TableProfile(RadialProfile):
    """Cubic interpolation of (t, f) samples on a log-spaced grid.

    Outside the table the profile continues with the configured limits
    (default: edge values); derivatives vanish there.  Needs >= 64 nodes
    per decade for the derivative guarantees to hold.
    """

    max_log_order = 3

    def __init__(self, t_nodes, values, limit_at_zero=None, limit_at_infinity=None):
        t_nodes = np.asarray(t_nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if t_nodes.ndim != 1 or t_nodes.size < 4:
            raise ValueError("need at least 4 table nodes")
        if np.any(t_nodes <= 0) or np.any(np.diff(t_nodes) <= 0):
            raise ValueError("table nodes must be positive and increasing")
        self.u_nodes = np.log(t_nodes)
        self.values = values
        self._spline = CubicSpline(self.u_nodes, values, bc_type="natural")
        self.limit_at_zero = (
            float(values[0]) if limit_at_zero is None else float(limit_at_zero)
        )
        self.limit_at_infinity = (
            float(values[-1]) if limit_at_infinity is None else float(limit_at_infinity)
        )

    def node_spacing(self):
        return float(np.max(np.diff(self.u_nodes)))

    def log_deriv(self, u, k):
        u = np.asarray(u, dtype=float)
        lo = u < self.u_nodes[0]
        hi = u > self.u_nodes[-1]
        inside = ~(lo | hi)
        out = np.zeros_like(u)
        if k == 0:
            out[lo] = self.limit_at_zero
            out[hi] = self.limit_at_infinity
            out[inside] = self._spline(u[inside])
        else:
            out[inside] = self._spline(u[inside], k)
        return out


class ShiftedProfile(RadialProfile):
    """f(lam * t): a shift by log(lam) in the log variable."""

    def __init__(self, base, shift):
        self.base = base
        self.shift = float(shift)
        self.max_log_order = base.max_log_order
        self.limit_at_zero = base.limit_at_zero
        self.limit_at_infinity = base.limit_at_infinity

    def log_deriv(self, u, k):
        return self.base.log_deriv(np.asarray(u, dtype=float) + self.shift, k)


class ComboProfile(RadialProfile):
    """offset + sum of coef * profile terms."""

    def __init__(self, terms, offset=0.0):
        self.terms = [(float(c), p) for c, p in terms]
        self.offset = float(offset)
        self.max_log_order = min(
            [p.max_log_order for _, p in self.terms], default=MAX_LOG_ORDER
        )
        lims0 = [p.limit_at_zero for _, p in self.terms]
        limsi = [p.limit_at_infinity for _, p in self.terms]
        if all(v is not None for v in lims0):
            self.limit_at_zero = self.offset + sum(
                c * v for (c, _), v in zip(self.terms, lims0)
            )
        if all(v is not None for v in limsi):
            self.limit_at_infinity = self.offset + sum(
                c * v for (c, _), v in zip(self.terms, limsi)
            )

    def log_deriv(self, u, k):
        u = np.asarray(u, dtype=float)
        acc = np.full_like(u, self.offset) if k == 0 else np.zeros_like(u)
        for c, p in self.terms:
            acc = acc + c * p.log_deriv(u, k)
        return acc


class CallableLogProfile(RadialProfile):
    """Profile from user callables g_k(u) = d^k/du^k f(e^u)."""

    def __init__(self, log_derivs, limit_at_zero=None, limit_at_infinity=None):
        self._fns = list(log_derivs)
        self.max_log_order = len(self._fns) - 1
        self.limit_at_zero = limit_at_zero
        self.limit_at_infinity = limit_at_infinity

    def log_deriv(self, u, k):
        if k > self.max_log_order:
            raise OrderUnavailable(f"profile supports order {self.max_log_order}")
        u = np.asarray(u, dtype=float)
        return np.asarray(self._fns[k](u), dtype=float)
