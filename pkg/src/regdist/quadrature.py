"""1-D quadrature helpers.

Adaptive integration is delegated to scipy's QUADPACK wrapper (adaptive
Gauss-Kronrod); this module adds tolerance checking with a proper error,
and fixed Gauss-Legendre rules for vectorized integrands.
"""

import warnings

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import QuadratureFailure

DEFAULT_REL_TOL = 1e-8


def integrate(f, a, b, rel_tol=DEFAULT_REL_TOL, abs_tol=0.0, points=None, limit=200):
    """Integrate f over (a, b), raising QuadratureFailure on a bad error estimate.

    ``a``/``b`` may be +-inf. ``points`` marks known difficult spots
    (ignored for infinite ranges, as in scipy).
    """
    kwargs = {"limit": limit, "epsabs": abs_tol, "epsrel": rel_tol}
    if points is not None and np.isfinite(a) and np.isfinite(b):
        kwargs["points"] = points
    with warnings.catch_warnings():
        # tolerance is checked below; scipy's roundoff chatter is redundant
        warnings.simplefilter("ignore", IntegrationWarning)
        val, err = quad(f, a, b, **kwargs)
    bound = max(abs_tol, rel_tol * abs(val), 1e-300)
    if err > 10.0 * bound and err > 1e-13:
        raise QuadratureFailure(
            f"integral error estimate {err:.3e} exceeds tolerance {bound:.3e}"
        )
    return val


def gauss_legendre(a, b, order):
    """Nodes and weights of the Gauss-Legendre rule on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def gauss_legendre_panels(a, b, panels, order):
    """Composite Gauss-Legendre rule: `panels` equal panels of given order."""
    edges = np.linspace(a, b, panels + 1)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(lo, hi, order)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def graded_panels(a, b, panels, order, ratio=0.5, both_ends=True):
    """Gauss-Legendre on [a, b] with panels shrinking geometrically toward
    the singular end(s): both endpoints, or just b when both_ends=False."""
    if both_ends:
        half = max(2, panels // 2)
        mid = 0.5 * (a + b)
        offs = (mid - a) * ratio ** np.arange(half - 1, -1, -1)
        left = np.concatenate([[a], a + offs])  # clusters at a, ends at mid
        right = (a + b) - left[::-1]
        all_edges = np.concatenate([left, right[1:]])
    else:
        offs = (b - a) * ratio ** np.arange(1, panels)
        all_edges = np.concatenate([[a], (b - offs)[::-1], [b]])
    xs, ws = [], []
    for lo, hi in zip(all_edges[:-1], all_edges[1:]):
        x, w = gauss_legendre(lo, hi, order)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def log_panels(a, b, panels, order):
    """Composite Gauss-Legendre rule on (a, b), panels equal in log scale.

    Returns nodes t and weights for integration in dt (not dt/t).
    """
    if a <= 0 or b <= a:
        raise ValueError("log_panels needs 0 < a < b")
    u, wu = gauss_legendre_panels(np.log(a), np.log(b), panels, order)
    t = np.exp(u)
    return t, wu * t
