"""Kernel smoothing and gluing.

Two smoothing transforms both preserve plane-orthogonality of a kernel:
averaging over dilations, K~(x) = int K(t x) phi(t) dt, and averaging
over rotations, K~(x) = int K(A x) phi(A) dnu(A).  Both are frozen into
finite weighted sums so the results compose and differentiate exactly.

The glued construction M + sum_i phi_i(|x|) K~(x / sqrt(a_i a_{i+1}))
stacks rescaled copies of a kernel on a fast-decaying scale ladder; its
small-scale limit depends on the chosen subsequence of scales.
"""

import numpy as np

from .errors import QuadratureFailure, ScaleViolation, UnsupportedDimension
from .kernels import (
    ConstantKernel,
    DilatedSumKernel,
    Kernel,
    RotatedSumKernel,
    _as_points,
    fibonacci_sphere,
    rotation_matrix_2d,
)
from .quadrature import gauss_legendre_panels


def log_bump(t_lo, t_hi, normalized=True):
    """Smooth bump supported on (t_lo, t_hi), symmetric in log t.

    Returns (callable, (t_lo, t_hi)).  With ``normalized`` the bump
    integrates to 1 in dt.
    """
    if not 0.0 < t_lo < t_hi:
        raise ValueError("need 0 < t_lo < t_hi")
    u_lo, u_hi = np.log(t_lo), np.log(t_hi)

    def raw(t):
        t = np.asarray(t, dtype=float)
        v = (2.0 * (np.log(t) - u_lo) / (u_hi - u_lo)) - 1.0
        out = np.zeros_like(v)
        inside = np.abs(v) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - v[inside] ** 2))
        return out

    if not normalized:
        return raw, (t_lo, t_hi)
    t, w = gauss_legendre_panels(t_lo, t_hi, 8, 16)
    total = float(np.sum(raw(t) * w))

    def phi(t):
        return raw(t) / total

    return phi, (t_lo, t_hi)


def _probe_points(n, seed=8):
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(12, n))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    radii = np.array([0.5, 1.0, 2.0])
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, n)


def radial_mollify(kernel, phi, support, rel_tol=1e-8, max_panels=64, order=16):
    """K~(x) = int K(t x) phi(t) dt over the support of phi.

    The integral is frozen into a Gauss-Legendre sum whose panel count is
    refined until probe values stabilize to ``rel_tol``; derivative access
    comes from differentiating the frozen sum term by term.
    """
    t_lo, t_hi = support
    probes = _probe_points(kernel.n)
    prev = None
    panels = 2
    while panels <= max_panels:
        t, w = gauss_legendre_panels(t_lo, t_hi, panels, order)
        cand = DilatedSumKernel(kernel, t, np.asarray(phi(t)) * w)
        vals = cand.values(probes)
        if prev is not None:
            scale = max(float(np.max(np.abs(vals))), 1e-300)
            if float(np.max(np.abs(vals - prev))) <= rel_tol * scale:
                return cand
        prev = vals
        panels *= 2
    raise QuadratureFailure(
        f"mollification did not stabilize to {rel_tol} within {max_panels} panels"
    )


def so3_grid(count=10000, seed=0):
    """Deterministic quasi-uniform rotations in SO(3).

    Halton points (bases 2, 3, 5) pushed through the uniform-quaternion
    map; low-discrepancy on the rotation group.
    """

    def halton(index, base):
        f, r = 1.0, 0.0
        while index > 0:
            f /= base
            r += f * (index % base)
            index //= base
        return r

    mats = np.empty((count, 3, 3))
    for i in range(count):
        u1 = halton(i + 1, 2)
        u2 = halton(i + 1, 3)
        u3 = halton(i + 1, 5)
        a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
        qw = a * np.sin(2.0 * np.pi * u2)
        qx = a * np.cos(2.0 * np.pi * u2)
        qy = b * np.sin(2.0 * np.pi * u3)
        qz = b * np.cos(2.0 * np.pi * u3)
        mats[i] = _quat_to_matrix(qw, qx, qy, qz)
    return mats


def _quat_to_matrix(w, x, y, z):
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotational_average(kernel, phi=None, nodes=None, normalize=True):
    """K~(x) = sum_j K(A_j x) phi(A_j) w_j over a rotation grid.

    n = 2: uniform angles (>= 256 nodes); ``phi`` maps the rotation angle
    to a weight.  n = 3: the documented quasi-uniform SO(3) grid (>= 1e4
    nodes); ``phi`` maps rotation matrices to weights.  Higher ambient
    dimensions are not supported.
    """
    if kernel.n == 2:
        m = nodes or 256
        ang = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)
        mats = np.stack([rotation_matrix_2d(a) for a in ang])
        w = np.ones(m) / m if phi is None else np.asarray(phi(ang), dtype=float) / m
    elif kernel.n == 3:
        m = nodes or 10000
        mats = so3_grid(m)
        if phi is None:
            w = np.ones(m) / m
        else:
            w = np.array([float(phi(A)) for A in mats]) / m
    else:
        raise UnsupportedDimension("rotational average supports n in {2, 3}")
    if normalize:
        total = float(np.sum(w))
        if total <= 0:
            raise ValueError("rotation weights must have positive total mass")
        w = w / total
    return RotatedSumKernel(kernel, mats, w)


def _smoothstep(w):
    w = np.clip(w, 0.0, 1.0)
    return w**3 * (6.0 * w * w - 15.0 * w + 10.0)


def _smoothstep_d1(w):
    inside = (w > 0.0) & (w < 1.0)
    out = np.zeros_like(w)
    wi = w[inside]
    out[inside] = 30.0 * wi**2 * (wi - 1.0) ** 2
    return out


def _smoothstep_d2(w):
    inside = (w > 0.0) & (w < 1.0)
    out = np.zeros_like(w)
    wi = w[inside]
    out[inside] = 60.0 * wi * (2.0 * wi - 1.0) * (wi - 1.0)
    return out


_LOG4 = np.log(4.0)


class BumpPartition:
    """phi_i supported in (a_{i+1}/2, 2 a_i), == 1 on (2 a_{i+1}, a_i / 2).

    Built from C^2 smoothsteps in log radius; for scale ladders with
    a_{i+1} <= a_i / 16 the transitions are disjoint and the bumps sum to
    one on the covered range.
    """

    def __init__(self, scales):
        scales = np.asarray(scales, dtype=float)
        if np.any(np.diff(scales) >= 0) or np.any(scales <= 0):
            raise ValueError("scales must be positive and strictly decreasing")
        self.scales = scales
        self.depth = len(scales) - 1
        self.plateaus_ok = bool(np.all(scales[1:] <= scales[:-1] / 16.0))

    def _t(self, u, i, order):
        # cutoff: 1 below a_i/2, 0 above 2 a_i, smoothstep between (log scale)
        u0 = np.log(self.scales[i] / 2.0)
        w = (u - u0) / _LOG4
        if order == 0:
            return 1.0 - _smoothstep(w)
        if order == 1:
            return -_smoothstep_d1(w) / _LOG4
        return -_smoothstep_d2(w) / _LOG4**2

    def log_value(self, u, i, order=0):
        """d^order/du^order of phi_i as a function of u = log r."""
        ti = self._t(u, i, 0)
        tn = self._t(u, i + 1, 0)
        if order == 0:
            return ti * (1.0 - tn)
        ti1 = self._t(u, i, 1)
        tn1 = self._t(u, i + 1, 1)
        if order == 1:
            return ti1 * (1.0 - tn) - ti * tn1
        ti2 = self._t(u, i, 2)
        tn2 = self._t(u, i + 1, 2)
        return ti2 * (1.0 - tn) - 2.0 * ti1 * tn1 - ti * tn2

    def value(self, r, i):
        return self.log_value(np.log(np.asarray(r, dtype=float)), i, 0)

    def support(self, i):
        return self.scales[i + 1] / 2.0, 2.0 * self.scales[i]


class GluedKernel(Kernel):
    """M + sum_i phi_i(|x|) K~(x / sqrt(a_i a_{i+1})), truncated at finite depth."""

    def __init__(self, base, offset, scales):
        self.base = base
        self.offset = float(offset)
        self.n = base.n
        self.partition = BumpPartition(scales)
        self.scales = self.partition.scales
        self.copy_scales = np.sqrt(self.scales[:-1] * self.scales[1:])
        self.derivative_order = min(2, base.derivative_order)
        self.is_radial = base.is_radial

    @property
    def depth(self):
        return self.partition.depth

    def _active(self, r, i):
        lo, hi = self.partition.support(i)
        return (r > lo) & (r < hi)

    def values(self, X):
        X, r, single = _as_points(X, self.n)
        u = np.log(r)
        acc = np.full(X.shape[0], self.offset)
        for i in range(self.depth):
            mask = self._active(r, i)
            if not np.any(mask):
                continue
            phi = self.partition.log_value(u[mask], i, 0)
            acc[mask] += phi * self.base.values(X[mask] / self.copy_scales[i])
        return acc[0] if single else acc

    def gradients(self, X):
        X, r, single = _as_points(X, self.n)
        u = np.log(r)
        xhat = X / r[:, None]
        acc = np.zeros_like(X)
        for i in range(self.depth):
            mask = self._active(r, i)
            if not np.any(mask):
                continue
            s = self.copy_scales[i]
            xm = X[mask] / s
            phi = self.partition.log_value(u[mask], i, 0)
            dphi_dr = self.partition.log_value(u[mask], i, 1) / r[mask]
            vals = self.base.values(xm)
            grads = self.base.gradients(xm)
            acc[mask] += (
                dphi_dr[:, None] * xhat[mask] * vals[:, None]
                + (phi / s)[:, None] * grads
            )
        return acc[0] if single else acc

    def hessians(self, X):
        X, r, single = _as_points(X, self.n)
        u = np.log(r)
        xhat = X / r[:, None]
        eye = np.eye(self.n)[None, :, :]
        acc = np.zeros((X.shape[0], self.n, self.n))
        for i in range(self.depth):
            mask = self._active(r, i)
            if not np.any(mask):
                continue
            s = self.copy_scales[i]
            xm = X[mask] / s
            rm = r[mask]
            xh = xhat[mask]
            phi = self.partition.log_value(u[mask], i, 0)
            p1 = self.partition.log_value(u[mask], i, 1)
            p2 = self.partition.log_value(u[mask], i, 2)
            dphi = p1 / rm
            d2phi = (p2 - p1) / rm**2
            vals = self.base.values(xm)
            grads = self.base.gradients(xm)
            hess = self.base.hessians(xm)
            hh = xh[:, :, None] * xh[:, None, :]
            radial_hess = d2phi[:, None, None] * hh + (dphi / rm)[:, None, None] * (
                eye - hh
            )
            cross = xh[:, :, None] * grads[:, None, :] + grads[:, :, None] * xh[:, None, :]
            acc[mask] += (
                radial_hess * vals[:, None, None]
                + (dphi / s)[:, None, None] * cross
                + (phi / s**2)[:, None, None] * hess
            )
        return acc[0] if single else acc

    def limit_copy(self):
        """The small-scale limit along lambda_i = sqrt(a_i a_{i+1}): offset + base."""
        return SumOffset(self.base, self.offset)


class SumOffset(Kernel):
    """base + constant offset (cheap wrapper used by glued limits)."""

    def __init__(self, base, offset):
        self.base = base
        self.offset = float(offset)
        self.n = base.n
        self.derivative_order = base.derivative_order
        self.is_radial = base.is_radial

    def values(self, X):
        return self.offset + self.base.values(X)

    def gradients(self, X):
        return self.base.gradients(X)

    def hessians(self, X):
        return self.base.hessians(X)

    def thirds(self, X):
        return self.base.thirds(X)

    def rescale(self, lam):
        return SumOffset(self.base.rescale(lam), self.offset)


def glue_scaled_kernels(base, offset, scales, b_seq=None, sup_bound=None):
    """Build the glued kernel; raises ScaleViolation on a bad ladder.

    ``scales`` is the decreasing sequence a_1 > a_2 > ... (depth + 1 values);
    the i-th copy lives at scale sqrt(a_i a_{i+1}).  ``b_seq`` defaults to
    2^i.  ``offset`` must exceed sup |base| for positivity (checked against
    ``sup_bound`` or a sampled sup).
    """
    scales = np.asarray(scales, dtype=float)
    if len(scales) < 2:
        raise ValueError("need at least two scales")
    if b_seq is None:
        b_seq = 2.0 ** np.arange(1, len(scales))
    b_seq = np.asarray(b_seq, dtype=float)
    for i in range(len(scales) - 1):
        if scales[i + 1] > scales[i] ** 2 / b_seq[i] * (1.0 + 1e-12):
            raise ScaleViolation(
                f"a[{i + 1}] = {scales[i + 1]:.3e} exceeds a[{i}]^2/b[{i}] = "
                f"{scales[i] ** 2 / b_seq[i]:.3e}"
            )
    if isinstance(base, ConstantKernel) and base.c == 0.0:
        return ConstantKernel(offset, base.n)
    bound = sup_bound if sup_bound is not None else base.sup_abs()
    if offset <= bound:
        raise ValueError(f"offset {offset} must exceed sup|K~| ~ {bound:.6g}")
    return GluedKernel(base, offset, scales)
