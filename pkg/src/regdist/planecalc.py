"""Continuum R outside exact planes, by quadrature.

Two evaluators:

* ``line_field``: R, grad R, hess R outside a 1-dimensional affine line in
  R^n for an arbitrary kernel.  Nodes follow a sinh substitution centered
  at the projection of the query point; the two rays beyond the cutoff are
  integrated in closed form through W(z) = int_z^inf (1+v^2)^{-q/2} dv
  (possible whenever the kernel has directional limits along the line:
  radial kernels with a limit, zero-homogeneous kernels, or compactly
  supported ones).

* ``radial_plane_rho``: the 1-D profile rho(delta) = R(x) outside a
  d-plane for radial kernels, with d/ddelta derivatives up to order 2,
  by adaptive quadrature of the differentiated integrand.
"""

import numpy as np

from .errors import QuadratureFailure
from .quadrature import gauss_legendre_panels, integrate


def _w_tools(q):
    from .engine import _HalfLineTail

    return _HalfLineTail(q)


def _side_limits(kernel, tangent):
    """Kernel limits along -tangent / +tangent displacement directions.

    Returns (K_left, K_right, compact) where compact means the kernel
    vanishes far out (so the tail is exactly zero).
    """
    support = getattr(kernel, "radial_support", None)
    if support is not None:
        return 0.0, 0.0, True
    lim = kernel.constant_limit("inf")
    if lim is not None:
        return float(lim), float(lim), False
    if kernel.is_zero_homogeneous:
        # z = x - y(s): direction -> -t as s -> +inf, +t as s -> -inf
        k_left = float(kernel.value(tangent))
        k_right = float(kernel.value(-tangent))
        return k_left, k_right, False
    # last resort: probe decay
    far = 1e9
    probe = max(abs(kernel.value(tangent * far)), abs(kernel.value(-tangent * far)))
    if probe < 1e-14:
        return 0.0, 0.0, True
    raise QuadratureFailure(
        "kernel has no usable limit along the line; cannot build the tail"
    )


def line_field(kernel, frame, alpha, x, order=2, panels_per_unit=2, gl_order=16):
    """Continuum (R, gradR, hessR) at x outside the line given by ``frame``.

    ``frame`` is a PlaneFrame with d = 1.  The result differentiates the
    integral analytically; no measure discretization is involved.
    """
    from .engine import _summand_arrays

    x = np.asarray(x, dtype=float)
    tangent = frame.tangent[0]
    d = 1.0
    q = d + alpha
    s0 = float((x - frame.point) @ tangent)
    base = frame.point + s0 * tangent
    normal_vec = x - base
    delta = float(np.linalg.norm(normal_vec))
    if delta <= 0:
        raise QuadratureFailure("query point lies on the line")
    nu = normal_vec / delta

    k_left, k_right, compact = _side_limits(kernel, tangent)
    support = getattr(kernel, "radial_support", None)
    if support is not None:
        rmax = support[1]
        if delta >= rmax:
            n = len(x)
            return 0.0, np.zeros(n), np.zeros((n, n))
        S = float(np.sqrt(rmax * rmax - delta * delta)) * 1.0000001 + delta
    else:
        S = max(np.exp(7.0), 1.0) * delta
        prof = kernel.radial_profile()
        if prof is not None:
            # push the cutoff to where the profile has settled to its limit
            probe = np.geomspace(max(delta, 1e-12), max(delta, 1e-12) * 1e9, 160)
            lim = kernel.constant_limit("inf")
            settled = np.abs(prof.value(probe) - lim) <= 1e-14 * max(1.0, abs(lim))
            idx = np.argmax(settled) if settled.any() else len(probe) - 1
            S = max(S, float(probe[idx]))
        elif kernel.is_zero_homogeneous:
            S = np.exp(16.0) * delta

    U = float(np.arcsinh(S / delta))
    panels = max(8, int(np.ceil(U * panels_per_unit)))
    u, wu = gauss_legendre_panels(-U, U, panels, gl_order)
    s = s0 + delta * np.sinh(u)
    w = delta * np.cosh(u) * wu
    Y = frame.point[None, :] + s[:, None] * tangent[None, :]
    Z = x[None, :] - Y
    val, grad, hess = _summand_arrays(kernel, Z, q, order)
    R = float(w @ val)
    gR = w @ grad if order >= 1 else None
    hR = np.einsum("i,ijk->jk", w, hess) if order >= 2 else None

    # closed-form ray tails beyond |s - s0| = S (frozen at this query)
    if not compact and (k_left != 0.0 or k_right != 0.0):
        h = _w_tools(q)
        z = S / delta
        W, dW, d2W = h.w(z), h.dw(z), h.d2w(z)
        ksum = k_left + k_right
        kdif = k_left - k_right
        R += ksum * delta ** (1.0 - q) * W
        if order >= 1:
            Td = ksum * delta ** (-q) * ((1.0 - q) * W - z * dW)
            Ta = kdif * delta ** (-q) * dW
            gR = gR + Td * nu + Ta * tangent
        if order >= 2:
            Tdd = ksum * delta ** (-q - 1.0) * (
                q * (q - 1.0) * W + 2.0 * q * z * dW + z * z * d2W
            )
            Taa = ksum * delta ** (-q - 1.0) * d2W
            Tda = -kdif * delta ** (-q - 1.0) * (q * dW + z * d2W)
            PN = frame.normal.T @ frame.normal
            nn = np.outer(nu, nu)
            tt = np.outer(tangent, tangent)
            nt = np.outer(nu, tangent)
            hR = hR + (
                Tdd * nn
                + Tda * (nt + nt.T)
                + Taa * tt
                + Td * (PN - nn) / delta
            )
    return R, gR, hR


def radial_plane_rho(profile, d, alpha, delta, m=0, rel_tol=1e-11):
    """(d/ddelta)^m of R(delta) outside a d-plane for a radial kernel.

    R(delta) = sigma_{d-1} int_0^inf f(sqrt(delta^2+s^2))
               (delta^2+s^2)^{-q/2} s^{d-1} ds, m <= 2.
    """
    from .engine import sphere_area

    q = d + alpha
    delta = float(delta)

    def integrand(s):
        t = np.hypot(delta, s)
        p = delta * delta + s * s
        if m == 0:
            core = profile.value(t) * p ** (-q / 2.0)
        elif m == 1:
            core = (
                profile.deriv(t, 1) * delta / t - q * delta * profile.value(t) / p
            ) * p ** (-q / 2.0)
        else:
            g0 = profile.value(t)
            g1 = profile.deriv(t, 1)
            g2 = profile.deriv(t, 2)
            core = (
                g2 * (delta / t) ** 2
                + g1 * (1.0 / t - delta**2 / t**3)
                - 2.0 * q * delta * g1 * (delta / t) / p
                - q * g0 / p
                + q * (q + 2.0) * g0 * delta**2 / p**2
            ) * p ** (-q / 2.0)
        return float(core) * s ** (d - 1.0)

    sigma = sphere_area(d)
    # split at the delta scale; quad handles the decaying infinite tail
    head = integrate(integrand, 0.0, 8.0 * delta, rel_tol=rel_tol, abs_tol=1e-300)
    tail = integrate(integrand, 8.0 * delta, np.inf, rel_tol=rel_tol, abs_tol=1e-300)
    return sigma * (head + tail)
