"""Kernel representations with analytic derivatives up to order 3.

A kernel is a function on R^n \\ {0}.  Structured variants:

* ``ConstantKernel``     -- K = c
* ``RadialKernel``       -- K(x) = f(|x|), any ambient dimension
* ``Spherical2D``        -- zero-homogeneous, K(x) = h(theta) in the plane
* ``Spherical3D``        -- zero-homogeneous on S^2, evaluation only
* ``Product2D``          -- f(|x|) * h(theta)
* combinators            -- sums, dilations K(t x), rotations K(A x),
                            rescalings K(lam x)

Planar kernels with angular structure share one chain-rule engine written
in log-polar coordinates (u, theta) = (log |x|, atan2).
"""

import numpy as np

from .errors import NotRadial, OrderUnavailable, ZeroPoint
from .profiles import ComboProfile, ConstantProfile, RadialProfile


def _as_points(x, n):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != n:
        raise ValueError(f"points have dimension {X.shape[1]}, kernel has {n}")
    r = np.sqrt(np.sum(X * X, axis=1))
    if np.any(r == 0.0):
        raise ZeroPoint("kernel evaluated at the origin")
    return X, r, single


class Kernel:
    """Base class; subclasses fill in the vectorized evaluators."""

    n = 2
    derivative_order = 0
    is_radial = False
    is_zero_homogeneous = False

    # -- vectorized interface: X is (m, n) ---------------------------------
    def values(self, X):
        raise NotImplementedError

    def gradients(self, X):
        raise OrderUnavailable("gradient not available for this kernel")

    def hessians(self, X):
        raise OrderUnavailable("hessian not available for this kernel")

    def thirds(self, X):
        raise OrderUnavailable("third derivative not available for this kernel")

    # -- single-point conveniences ------------------------------------------
    def value(self, x):
        return float(self.values(np.asarray(x, dtype=float)[None, :])[0])

    def gradient(self, x):
        return self.gradients(np.asarray(x, dtype=float)[None, :])[0]

    def hessian(self, x):
        return self.hessians(np.asarray(x, dtype=float)[None, :])[0]

    def third(self, x):
        return self.thirds(np.asarray(x, dtype=float)[None, :])[0]

    def rescale(self, lam):
        """Kernel x -> K(lam x)."""
        if lam <= 0:
            raise ValueError("rescale factor must be positive")
        return ScaledKernel(self, lam)

    def radial_profile(self):
        """1-D profile when the kernel is radial, else None."""
        return None

    def constant_limit(self, end):
        """Limit value at |x| -> 0 ('zero') or infinity ('inf'), if known."""
        prof = self.radial_profile()
        if prof is None:
            return None
        return prof.limit_at_zero if end == "zero" else prof.limit_at_infinity

    def sup_abs(self, radii=None, directions=64):
        """Sampled sup of |K| on a log-radial x angular grid."""
        if radii is None:
            radii = np.logspace(-6, 6, 97)
        ang = np.linspace(0.0, 2.0 * np.pi, directions, endpoint=False)
        if self.n == 2:
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            dirs = fibonacci_sphere(max(directions, 64))
        X = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, self.n)
        return float(np.max(np.abs(self.values(X))))


# ---------------------------------------------------------------------------
# simple variants


class ConstantKernel(Kernel):
    is_radial = True
    is_zero_homogeneous = True
    derivative_order = 10

    def __init__(self, c, n=2):
        self.c = float(c)
        self.n = int(n)

    def values(self, X):
        X, _, single = _as_points(X, self.n)
        out = np.full(X.shape[0], self.c)
        return out[0] if single else out

    def gradients(self, X):
        X, _, single = _as_points(X, self.n)
        out = np.zeros((X.shape[0], self.n))
        return out[0] if single else out

    def hessians(self, X):
        X, _, single = _as_points(X, self.n)
        out = np.zeros((X.shape[0], self.n, self.n))
        return out[0] if single else out

    def thirds(self, X):
        X, _, single = _as_points(X, self.n)
        out = np.zeros((X.shape[0], self.n, self.n, self.n))
        return out[0] if single else out

    def rescale(self, lam):
        return self

    def radial_profile(self):
        return ConstantProfile(self.c)


class RadialKernel(Kernel):
    """K(x) = f(|x|) in any ambient dimension."""

    is_radial = True

    def __init__(self, profile, n=2):
        if not isinstance(profile, RadialProfile):
            raise TypeError("profile must be a RadialProfile")
        self.profile = profile
        self.n = int(n)
        self.derivative_order = min(3, profile.max_log_order)

    def values(self, X):
        X, r, single = _as_points(X, self.n)
        out = self.profile.value(r)
        return out[0] if single else out

    def gradients(self, X):
        X, r, single = _as_points(X, self.n)
        f1 = self.profile.deriv(r, 1)
        out = (f1 / r)[:, None] * X
        return out[0] if single else out

    def hessians(self, X):
        X, r, single = _as_points(X, self.n)
        u = X / r[:, None]
        f1 = self.profile.deriv(r, 1)
        f2 = self.profile.deriv(r, 2)
        uu = u[:, :, None] * u[:, None, :]
        eye = np.eye(self.n)[None, :, :]
        out = f2[:, None, None] * uu + (f1 / r)[:, None, None] * (eye - uu)
        return out[0] if single else out

    def thirds(self, X):
        if self.derivative_order < 3:
            raise OrderUnavailable("profile lacks a third derivative")
        X, r, single = _as_points(X, self.n)
        u = X / r[:, None]
        f1 = self.profile.deriv(r, 1)
        f2 = self.profile.deriv(r, 2)
        f3 = self.profile.deriv(r, 3)
        eye = np.eye(self.n)
        uu = u[:, :, None] * u[:, None, :]
        proj = eye[None, :, :] - uu  # (m,n,n)
        uuu = uu[:, :, :, None] * u[:, None, None, :]
        sym = (
            proj[:, :, :, None] * u[:, None, None, :]
            + proj[:, :, None, :] * u[:, None, :, None]
            + proj[:, None, :, :] * u[:, :, None, None]
        )
        coef = (f2 / r - f1 / r**2)[:, None, None, None]
        out = f3[:, None, None, None] * uuu + coef * sym
        return out[0] if single else out

    def rescale(self, lam):
        return RadialKernel(self.profile.rescale(lam), self.n)

    def radial_profile(self):
        return self.profile


# ---------------------------------------------------------------------------
# planar log-polar machinery


def _logpolar_frames(X):
    """Differentials of u = log r and theta up to order 3 at points X (m,2)."""
    x, y = X[:, 0], X[:, 1]
    r2 = x * x + y * y
    r = np.sqrt(r2)
    m = X.shape[0]

    gu = X / r2[:, None]
    gt = np.stack([-y, x], axis=1) / r2[:, None]

    uhat = X / r[:, None]
    uu = uhat[:, :, None] * uhat[:, None, :]
    eye = np.eye(2)[None, :, :]
    Hu = (eye - 2.0 * uu) / r2[:, None, None]

    A = 2.0 * x * y / r2**2
    B = (y * y - x * x) / r2**2
    Ht = np.empty((m, 2, 2))
    Ht[:, 0, 0] = A
    Ht[:, 0, 1] = B
    Ht[:, 1, 0] = B
    Ht[:, 1, 1] = -A

    # third-order tensors
    Tu = np.empty((m, 2, 2, 2))
    d = eye[0]  # reuse below via explicit indices
    r3 = r2 * r
    for i in range(2):
        for j in range(2):
            for k in range(2):
                val = 8.0 * uhat[:, i] * uhat[:, j] * uhat[:, k]
                if i == j:
                    val -= 2.0 * uhat[:, k]
                if i == k:
                    val -= 2.0 * uhat[:, j]
                if j == k:
                    val -= 2.0 * uhat[:, i]
                Tu[:, i, j, k] = val / r3
    del d

    r6 = r2**3
    dxA = 2.0 * y * (r2 - 4.0 * x * x) / r6
    dyA = 2.0 * x * (r2 - 4.0 * y * y) / r6
    dxB = -2.0 * x * (r2 + 2.0 * (y * y - x * x)) / r6
    dyB = 2.0 * y * (r2 - 2.0 * (y * y - x * x)) / r6
    Tt = np.empty((m, 2, 2, 2))
    Tt[:, 0, 0, 0] = dxA
    Tt[:, 0, 0, 1] = dyA
    Tt[:, 0, 1, 0] = dxB
    Tt[:, 0, 1, 1] = dyB
    Tt[:, 1, 0, 0] = dxB
    Tt[:, 1, 0, 1] = dyB
    Tt[:, 1, 1, 0] = -dxA
    Tt[:, 1, 1, 1] = -dyA
    return gu, gt, Hu, Ht, Tu, Tt


def _sym_vt(H, v):
    """sym(H_{ij} v_k): H (m,2,2), v (m,2) -> (m,2,2,2)."""
    return (
        H[:, :, :, None] * v[:, None, None, :]
        + H[:, :, None, :] * v[:, None, :, None]
        + H[:, None, :, :] * v[:, :, None, None]
    )


def _sym_vvw(a, b, c):
    """sym over which slot carries c: a_i b_j c_k + a_i c_j b_k + c_i a_j b_k."""
    return (
        a[:, :, None, None] * b[:, None, :, None] * c[:, None, None, :]
        + a[:, :, None, None] * c[:, None, :, None] * b[:, None, None, :]
        + c[:, :, None, None] * a[:, None, :, None] * b[:, None, None, :]
    )


class LogPolar2DKernel(Kernel):
    """Planar kernel defined through kappa(u, theta), u = log |x|.

    Subclasses implement ``partials(u, theta, order)`` returning the tuple
    of partial derivatives up to the requested total order, in the order
    (k), (ku, kt), (kuu, kut, ktt), (kuuu, kuut, kutt, kttt).
    """

    n = 2

    def partials(self, u, theta, order):
        raise NotImplementedError

    def _uth(self, X):
        return np.log(np.hypot(X[:, 0], X[:, 1])), np.arctan2(X[:, 1], X[:, 0])

    def values(self, X):
        X, _, single = _as_points(X, 2)
        u, th = self._uth(X)
        (k,) = self.partials(u, th, 0)
        return k[0] if single else k

    def gradients(self, X):
        X, _, single = _as_points(X, 2)
        u, th = self._uth(X)
        _, (ku, kt) = self.partials(u, th, 1)
        gu, gt, *_ = _logpolar_frames(X)
        out = ku[:, None] * gu + kt[:, None] * gt
        return out[0] if single else out

    def hessians(self, X):
        X, _, single = _as_points(X, 2)
        u, th = self._uth(X)
        _, (ku, kt), (kuu, kut, ktt) = self.partials(u, th, 2)
        gu, gt, Hu, Ht, _, _ = _logpolar_frames(X)
        uu = gu[:, :, None] * gu[:, None, :]
        ut = gu[:, :, None] * gt[:, None, :] + gt[:, :, None] * gu[:, None, :]
        tt = gt[:, :, None] * gt[:, None, :]
        out = (
            kuu[:, None, None] * uu
            + kut[:, None, None] * ut
            + ktt[:, None, None] * tt
            + ku[:, None, None] * Hu
            + kt[:, None, None] * Ht
        )
        return out[0] if single else out

    def thirds(self, X):
        if self.derivative_order < 3:
            raise OrderUnavailable("third derivative not available")
        X, _, single = _as_points(X, 2)
        u, th = self._uth(X)
        _, (ku, kt), (kuu, kut, ktt), (kuuu, kuut, kutt, kttt) = self.partials(
            u, th, 3
        )
        gu, gt, Hu, Ht, Tu, Tt = _logpolar_frames(X)

        def outer3(a, b, c):
            return a[:, :, None, None] * b[:, None, :, None] * c[:, None, None, :]

        out = (
            kuuu[:, None, None, None] * outer3(gu, gu, gu)
            + kuut[:, None, None, None] * _sym_vvw(gu, gu, gt)
            + kutt[:, None, None, None] * _sym_vvw(gt, gt, gu)
            + kttt[:, None, None, None] * outer3(gt, gt, gt)
            + kuu[:, None, None, None] * _sym_vt(Hu, gu)
            + kut[:, None, None, None] * (_sym_vt(Hu, gt) + _sym_vt(Ht, gu))
            + ktt[:, None, None, None] * _sym_vt(Ht, gt)
            + ku[:, None, None, None] * Tu
            + kt[:, None, None, None] * Tt
        )
        return out[0] if single else out


class AngularFunction:
    """Function on S^1 with derivatives in theta."""

    max_order = 3

    def deriv(self, theta, k):
        raise NotImplementedError


class TrigSeries(AngularFunction):
    """a0 + sum_k (a_k cos(k theta) + b_k sin(k theta))."""

    max_order = 10

    def __init__(self, a0=0.0, cos_coefs=(), sin_coefs=()):
        self.a0 = float(a0)
        self.cos_coefs = np.asarray(cos_coefs, dtype=float)
        self.sin_coefs = np.asarray(sin_coefs, dtype=float)

    def deriv(self, theta, k):
        theta = np.asarray(theta, dtype=float)
        out = np.full_like(theta, self.a0) if k == 0 else np.zeros_like(theta)
        for j, a in enumerate(self.cos_coefs, start=1):
            if a != 0.0:
                out = out + a * j**k * np.cos(j * theta + 0.5 * np.pi * k)
        for j, b in enumerate(self.sin_coefs, start=1):
            if b != 0.0:
                out = out + b * j**k * np.sin(j * theta + 0.5 * np.pi * k)
        return out


class CallableAngular(AngularFunction):
    def __init__(self, fns):
        self._fns = list(fns)
        self.max_order = len(self._fns) - 1

    def deriv(self, theta, k):
        if k > self.max_order:
            raise OrderUnavailable(f"angular function supports order {self.max_order}")
        return np.asarray(self._fns[k](np.asarray(theta, dtype=float)), dtype=float)


class Spherical2D(LogPolar2DKernel):
    """Zero-homogeneous planar kernel K(x) = h(theta)."""

    is_zero_homogeneous = True

    def __init__(self, angular):
        self.angular = angular
        self.derivative_order = min(3, angular.max_order)

    def partials(self, u, th, order):
        z = np.zeros_like(u)
        h = self.angular.deriv
        if order == 0:
            return (h(th, 0),)
        if order == 1:
            return h(th, 0), (z, h(th, 1))
        if order == 2:
            return h(th, 0), (z, h(th, 1)), (z, z, h(th, 2))
        return (
            h(th, 0),
            (z, h(th, 1)),
            (z, z, h(th, 2)),
            (z, z, z, h(th, 3)),
        )

    def rescale(self, lam):
        return self


class Product2D(LogPolar2DKernel):
    """K(x) = f(|x|) * h(theta) in the plane."""

    def __init__(self, profile, angular):
        self.profile = profile
        self.angular = angular
        self.derivative_order = min(3, profile.max_log_order, angular.max_order)

    def partials(self, u, th, order):
        g = self.profile.log_deriv
        h = self.angular.deriv
        g0 = g(u, 0)
        h0 = h(th, 0)
        if order == 0:
            return (g0 * h0,)
        g1, h1 = g(u, 1), h(th, 1)
        if order == 1:
            return g0 * h0, (g1 * h0, g0 * h1)
        g2, h2 = g(u, 2), h(th, 2)
        if order == 2:
            return (
                g0 * h0,
                (g1 * h0, g0 * h1),
                (g2 * h0, g1 * h1, g0 * h2),
            )
        g3, h3 = g(u, 3), h(th, 3)
        return (
            g0 * h0,
            (g1 * h0, g0 * h1),
            (g2 * h0, g1 * h1, g0 * h2),
            (g3 * h0, g2 * h1, g1 * h2, g0 * h3),
        )

    def rescale(self, lam):
        return Product2D(self.profile.rescale(lam), self.angular)

    def radial_profile(self):
        return None


def fibonacci_sphere(m):
    """Quasi-uniform directions on S^2 (golden-angle lattice)."""
    i = np.arange(m, dtype=float)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    z = 1.0 - 2.0 * (i + 0.5) / m
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


class Spherical3D(Kernel):
    """Zero-homogeneous kernel on R^3 from a function on S^2 (values only)."""

    n = 3
    is_zero_homogeneous = True
    derivative_order = 0

    def __init__(self, sphere_fn):
        self.sphere_fn = sphere_fn

    def values(self, X):
        X, r, single = _as_points(X, 3)
        out = np.asarray(self.sphere_fn(X / r[:, None]), dtype=float)
        return out[0] if single else out

    def rescale(self, lam):
        return self


# ---------------------------------------------------------------------------
# combinators


class SumKernel(Kernel):
    """offset + sum of coef * kernel."""

    def __init__(self, terms, offset=0.0):
        terms = [(float(c), k) for c, k in terms]
        if not terms:
            raise ValueError("need at least one term")
        self.n = terms[0][1].n
        if any(k.n != self.n for _, k in terms):
            raise ValueError("mixed ambient dimensions")
        self.terms = terms
        self.offset = float(offset)
        self.derivative_order = min(k.derivative_order for _, k in terms)
        self.is_radial = all(k.is_radial for _, k in terms)
        self.is_zero_homogeneous = all(k.is_zero_homogeneous for _, k in terms)

    def values(self, X):
        X, _, single = _as_points(X, self.n)
        acc = np.full(X.shape[0], self.offset)
        for c, k in self.terms:
            acc = acc + c * k.values(X)
        return acc[0] if single else acc

    def _combine(self, X, attr):
        X, _, single = _as_points(X, self.n)
        acc = None
        for c, k in self.terms:
            part = c * getattr(k, attr)(X)
            acc = part if acc is None else acc + part
        return acc[0] if single else acc

    def gradients(self, X):
        return self._combine(X, "gradients")

    def hessians(self, X):
        return self._combine(X, "hessians")

    def thirds(self, X):
        return self._combine(X, "thirds")

    def rescale(self, lam):
        return SumKernel([(c, k.rescale(lam)) for c, k in self.terms], self.offset)

    def radial_profile(self):
        if not self.is_radial:
            return None
        profs = [(c, k.radial_profile()) for c, k in self.terms]
        if any(p is None for _, p in profs):
            return None
        return ComboProfile(profs, offset=self.offset)


class ScaledKernel(Kernel):
    """K(lam x)."""

    def __init__(self, base, lam):
        self.base = base
        self.lam = float(lam)
        self.n = base.n
        self.derivative_order = base.derivative_order
        self.is_radial = base.is_radial
        self.is_zero_homogeneous = base.is_zero_homogeneous

    def values(self, X):
        return self.base.values(np.asarray(X, dtype=float) * self.lam)

    def gradients(self, X):
        return self.lam * self.base.gradients(np.asarray(X, dtype=float) * self.lam)

    def hessians(self, X):
        return self.lam**2 * self.base.hessians(np.asarray(X, dtype=float) * self.lam)

    def thirds(self, X):
        return self.lam**3 * self.base.thirds(np.asarray(X, dtype=float) * self.lam)

    def rescale(self, lam):
        return ScaledKernel(self.base, self.lam * lam)

    def radial_profile(self):
        prof = self.base.radial_profile()
        return None if prof is None else prof.rescale(self.lam)


class DilatedSumKernel(Kernel):
    """sum_i w_i K(t_i x): frozen-quadrature radial mollification."""

    def __init__(self, base, ts, ws):
        self.base = base
        self.ts = np.asarray(ts, dtype=float)
        self.ws = np.asarray(ws, dtype=float)
        if self.ts.ndim != 1 or self.ts.shape != self.ws.shape:
            raise ValueError("ts and ws must be matching 1-D arrays")
        self.n = base.n
        self.derivative_order = base.derivative_order
        self.is_radial = base.is_radial

    def _acc(self, X, attr, power):
        X = np.asarray(X, dtype=float)
        acc = None
        for t, w in zip(self.ts, self.ws):
            part = (w * t**power) * getattr(self.base, attr)(X * t)
            acc = part if acc is None else acc + part
        return acc

    def values(self, X):
        return self._acc(X, "values", 0)

    def gradients(self, X):
        return self._acc(X, "gradients", 1)

    def hessians(self, X):
        return self._acc(X, "hessians", 2)

    def thirds(self, X):
        return self._acc(X, "thirds", 3)

    def rescale(self, lam):
        return DilatedSumKernel(self.base.rescale(lam), self.ts, self.ws)

    def radial_profile(self):
        prof = self.base.radial_profile()
        if prof is None:
            return None
        return ComboProfile([(w, prof.rescale(t)) for t, w in zip(self.ts, self.ws)])


class RotatedSumKernel(Kernel):
    """sum_i w_i K(A_i x): frozen-grid rotational average."""

    def __init__(self, base, mats, ws):
        self.base = base
        self.mats = np.asarray(mats, dtype=float)
        self.ws = np.asarray(ws, dtype=float)
        if self.mats.ndim != 3 or self.mats.shape[0] != self.ws.shape[0]:
            raise ValueError("mats must be (k, n, n) matching ws")
        self.n = base.n
        self.derivative_order = base.derivative_order
        self.is_radial = base.is_radial

    def values(self, X):
        X = np.asarray(X, dtype=float)
        acc = None
        for A, w in zip(self.mats, self.ws):
            part = w * self.base.values(X @ A.T)
            acc = part if acc is None else acc + part
        return acc

    def gradients(self, X):
        X = np.asarray(X, dtype=float)
        acc = None
        for A, w in zip(self.mats, self.ws):
            g = self.base.gradients(X @ A.T)
            part = w * (g @ A)
            acc = part if acc is None else acc + part
        return acc

    def hessians(self, X):
        X = np.asarray(X, dtype=float)
        acc = None
        for A, w in zip(self.mats, self.ws):
            H = self.base.hessians(X @ A.T)
            part = w * np.einsum("ia,mij,jb->mab", A, H, A)
            acc = part if acc is None else acc + part
        return acc

    def thirds(self, X):
        X = np.asarray(X, dtype=float)
        acc = None
        for A, w in zip(self.mats, self.ws):
            T = self.base.thirds(X @ A.T)
            part = w * np.einsum("ia,jb,kc,mijk->mabc", A, A, A, T)
            acc = part if acc is None else acc + part
        return acc

    def rescale(self, lam):
        return RotatedSumKernel(self.base.rescale(lam), self.mats, self.ws)


# ---------------------------------------------------------------------------
# operations


def eval_kernel(kernel, x, order=0, fd_fallback=True):
    """Evaluate K and derivatives at one point.

    Returns a tuple (value, grad, hess, third) truncated at ``order``.
    Tabulated radial profiles may fall back to centered differences for
    orders beyond their analytic capability when ``fd_fallback`` is set.
    """
    x = np.asarray(x, dtype=float)
    if np.all(x == 0.0):
        raise ZeroPoint("kernel evaluated at the origin")
    if order > kernel.derivative_order and not fd_fallback:
        raise OrderUnavailable(
            f"order {order} exceeds capability {kernel.derivative_order}"
        )
    out = [kernel.value(x)]
    attrs = ["gradient", "hessian", "third"]
    for m in range(1, order + 1):
        if m <= kernel.derivative_order:
            out.append(getattr(kernel, attrs[m - 1])(x))
        else:
            out.append(_fd_derivative(kernel, x, m))
    return tuple(out)


def _fd_derivative(kernel, x, m):
    h = 1e-6 * float(np.linalg.norm(x))
    n = kernel.n
    if m - 1 <= kernel.derivative_order:
        lower = lambda y: eval_kernel(kernel, y, m - 1, fd_fallback=False)[m - 1]
    else:
        lower = lambda y: _fd_derivative(kernel, y, m - 1)
    parts = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        parts.append((np.asarray(lower(x + e)) - np.asarray(lower(x - e))) / (2 * h))
    return np.stack(parts, axis=-1)


def rescale_kernel(kernel, lam):
    """K_lam(x) = K(lam x); distance-standard constants are preserved."""
    return kernel.rescale(lam)


def rotation_matrix_2d(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def require_radial(kernel):
    prof = kernel.radial_profile()
    if prof is None:
        raise NotRadial("operation requires a radial kernel")
    return prof
