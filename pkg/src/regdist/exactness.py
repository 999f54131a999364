"""Distance-exactness and orthogonality tests against planes.

A kernel is distance-exact when D = c_E * delta outside every plane E,
equivalently R * delta^alpha is constant on planes' level sets; it is
distance-orthogonal when R vanishes identically.  The tests here sample
planes and level sets and evaluate R by continuum quadrature.  The
half-arc transform rewrites the plane integral as a weighted integral
over a hemisphere of directions and provides an independent check plus a
rotation-invariance criterion.
"""

from dataclasses import dataclass

import numpy as np

from .engine import flat_constant
from .errors import DivergentTail, QuadratureFailure, UnsupportedDimension
from .kernels import fibonacci_sphere, require_radial
from .measures import PlaneFrame
from .planecalc import line_field, radial_plane_rho
from .quadrature import gauss_legendre_panels, graded_panels, integrate


def line_frames(n, count, seed=None):
    """Lines through the origin: uniform angles (n=2) or a sphere lattice (n=3)."""
    frames = []
    if n == 2:
        for ang in np.linspace(0.0, np.pi, count, endpoint=False):
            t = np.array([np.cos(ang), np.sin(ang)])
            nu = np.array([-np.sin(ang), np.cos(ang)])
            frames.append(PlaneFrame(np.zeros(2), t[None, :], nu[None, :]))
    elif n == 3:
        for t in fibonacci_sphere(2 * count)[:count]:
            a = np.array([1.0, 0.0, 0.0])
            if abs(t @ a) > 0.9:
                a = np.array([0.0, 1.0, 0.0])
            n1 = np.cross(t, a)
            n1 /= np.linalg.norm(n1)
            n2 = np.cross(t, n1)
            frames.append(PlaneFrame(np.zeros(3), t[None, :], np.stack([n1, n2])))
    else:
        raise UnsupportedDimension("plane sampling supports n in {2, 3}")
    return frames


def plane2_frames(count):
    """2-planes through the origin in R^3, normals on a sphere lattice."""
    frames = []
    for nu in fibonacci_sphere(2 * count)[:count]:
        a = np.array([1.0, 0.0, 0.0])
        if abs(nu @ a) > 0.9:
            a = np.array([0.0, 1.0, 0.0])
        t1 = np.cross(nu, a)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(nu, t1)
        frames.append(PlaneFrame(np.zeros(3), np.stack([t1, t2]), nu[None, :]))
    return frames


def level_set_points(frame, offsets=(-0.7, 0.0, 0.7), normal_dirs=4):
    """Points at distance exactly 1 from the plane, spread along it."""
    n = frame.n
    d = frame.d
    pts = []
    if n - d == 1:
        nus = [frame.normal[0], -frame.normal[0]]
    else:
        nus = []
        for ang in np.linspace(0.0, 2.0 * np.pi, normal_dirs, endpoint=False):
            nus.append(np.cos(ang) * frame.normal[0] + np.sin(ang) * frame.normal[1])
    for off in offsets:
        shift = off * frame.tangent[0]
        for nu in nus:
            pts.append(frame.point + shift + nu)
    return np.asarray(pts)


def _plane_r(kernel, frame, alpha, x):
    """Continuum R at x outside the plane given by ``frame``."""
    if frame.d == 1:
        R, _, _ = line_field(kernel, frame, alpha, x, order=0)
        return R
    prof = kernel.radial_profile()
    if prof is not None:
        return radial_plane_rho(prof, frame.d, alpha, frame.dist(x[None, :])[0], 0)
    if kernel.is_zero_homogeneous and frame.d == 2:
        return halfarc_transform(kernel, frame, x, alpha).direct
    raise UnsupportedDimension(
        "d = 2 plane integrals support radial or zero-homogeneous kernels"
    )


@dataclass
class ExactnessEntry:
    frame: PlaneFrame
    c_E: float
    residual_exact: float
    residual_orth: float
    residual_orth_centered: float


@dataclass
class ExactnessReport:
    entries: list
    alpha: float
    d: int
    residual_exact: float
    residual_orth: float
    plane_dependence: float
    normalizer: float  # R*delta^alpha produced by K == 1

    def c_values(self):
        return np.array([e.c_E for e in self.entries])


def exactness_residual(kernel, alpha, d=1, planes=16, offsets=(-0.7, 0.0, 0.7), frames=None):
    """Distance-exactness diagnostics over sampled planes through the origin.

    For each plane, samples on the level set delta = 1 give c_E (mean of
    D) and the relative residual of R against the constant c_E^-alpha.
    The centered orthogonality residual subtracts the best constant
    kernel, following the reduction of exactness to orthogonality.
    """
    if frames is None:
        if d == 1:
            frames = line_frames(kernel.n, planes)
        elif d == 2 and kernel.n == 3:
            frames = plane2_frames(planes)
        else:
            raise UnsupportedDimension(f"d={d} in R^{kernel.n} not supported")
    entries = []
    norm = flat_constant(d, alpha)
    for frame in frames:
        pts = level_set_points(frame, offsets)
        Rs = np.array([_plane_r(kernel, frame, alpha, x) for x in pts])
        res_orth = float(np.max(np.abs(Rs)))
        centered = float(np.max(np.abs(Rs - np.mean(Rs))))
        if np.all(Rs > 0):
            c_E = float(np.mean(Rs ** (-1.0 / alpha)))
            res_exact = float(np.max(np.abs(Rs - c_E**-alpha)) / c_E**-alpha)
        else:
            c_E = float("nan")
            res_exact = float("inf")
        entries.append(ExactnessEntry(frame, c_E, res_exact, res_orth, centered))
    cs = np.array([e.c_E for e in entries])
    return ExactnessReport(
        entries=entries,
        alpha=alpha,
        d=d,
        residual_exact=float(np.max([e.residual_exact for e in entries])),
        residual_orth=float(np.max([e.residual_orth for e in entries])),
        plane_dependence=float(np.max(cs) - np.min(cs)) if np.isfinite(cs).all() else float("inf"),
        normalizer=norm,
    )


def orthogonality_residual(kernel, alpha, d=1, planes=16, frames=None, offsets=(-0.7, 0.0, 0.7)):
    """sup |R delta^alpha| / flat_constant over sampled planes: the magnitude
    of the constant kernel that would produce the same response."""
    report = exactness_residual(kernel, alpha, d, planes, offsets, frames)
    return report.residual_orth / report.normalizer


def radial_orthogonality_integral(kernel, d, alpha, r, rel_tol=1e-10):
    """int_r^inf K(t) t^-(d+alpha-1) (t^2-r^2)^((d-2)/2) dt.

    Vanishing for all r > 0 characterizes distance-orthogonality of a
    radial kernel.  The endpoint is tamed by t = r cosh(u) when d < 2.
    """
    prof = require_radial(kernel) if hasattr(kernel, "radial_profile") else kernel
    if d < 1:
        raise UnsupportedDimension("requires d >= 1")
    if alpha <= 0:
        raise DivergentTail("needs alpha > 0 for a convergent tail")
    probe = np.geomspace(max(r, 1e-6), max(r, 1e-6) * 1e8, 64)
    if np.max(np.abs(prof.value(probe))) > 1e12:
        raise DivergentTail("kernel grows too fast for a convergent tail")
    if d >= 2:
        def fn(t):
            return (
                float(prof.value(np.array([t]))[0])
                * t ** (-(d + alpha - 1.0))
                * (t * t - r * r) ** ((d - 2.0) / 2.0)
            )

        return integrate(fn, r, np.inf, rel_tol=rel_tol, abs_tol=1e-300)

    def fn(u):
        # integrand ~ e^{-alpha u} at large u; beyond u ~ 600 it underflows
        if u > 600.0:
            return 0.0
        t = r * np.cosh(u)
        return (
            float(prof.value(np.array([t]))[0])
            * r ** (-alpha)
            * np.cosh(u) ** (-(d + alpha - 1.0))
            * np.sinh(u) ** (d - 1.0)
        )

    return integrate(fn, 0.0, 600.0, rel_tol=rel_tol, abs_tol=1e-300)


# ---------------------------------------------------------------------------
# half-arc transform


@dataclass
class HalfArcResult:
    transform: float
    direct: float
    frame: PlaneFrame
    x0: np.ndarray
    w0: np.ndarray

    @property
    def rel_difference(self):
        scale = max(abs(self.direct), abs(self.transform), 1e-300)
        return abs(self.transform - self.direct) / scale


def _halfarc_quad_d1(kernel, tangent, nu, alpha, panels=None, order=16):
    # graded panels absorb the cos^(alpha-1) endpoint behavior
    ratio = 0.3 if alpha < 1.0 else 0.5
    if panels is None:
        panels = 64 if alpha < 1.0 else 40
    phi, w = graded_panels(-np.pi / 2.0, np.pi / 2.0, panels, order, ratio=ratio)
    xi = np.sin(phi)
    root = np.cos(phi)
    W = xi[:, None] * tangent[None, :] - root[:, None] * nu[None, :]
    vals = kernel.values(-W)
    return float(np.sum(vals * root ** (alpha - 1.0) * w))


def _halfarc_quad_d2(kernel, t1, t2, nu, alpha, panels=None, order=12):
    ratio = 0.3 if alpha < 1.0 else 0.5
    if panels is None:
        panels = 48 if alpha < 1.0 else 24
    phi, wphi = graded_panels(0.0, np.pi / 2.0, panels, order, ratio=ratio, both_ends=False)
    th, wth = gauss_legendre_panels(0.0, 2.0 * np.pi, 24, order)
    PH, TH = np.meshgrid(phi, th, indexing="ij")
    WW = np.outer(wphi, wth)
    rho = np.sin(PH)
    root = np.cos(PH)
    xi1 = rho * np.cos(TH)
    xi2 = rho * np.sin(TH)
    W = (
        xi1.ravel()[:, None] * t1[None, :]
        + xi2.ravel()[:, None] * t2[None, :]
        - root.ravel()[:, None] * nu[None, :]
    )
    vals = kernel.values(-W)
    integrand = vals * (root.ravel() ** (alpha - 1.0)) * np.sin(PH).ravel()
    return float(np.sum(integrand * WW.ravel()))


def _direct_plane_integral_2d(kernel, frame, alpha, x0, S=np.exp(8.0), panels=40, order=12):
    """2-D plane integral for bounded kernels with a first-order far tail."""
    q = 2.0 + alpha
    u, wu = gauss_legendre_panels(np.arcsinh(1e-8), np.arcsinh(S), panels, order)
    r = np.sinh(u)
    wr = np.cosh(u) * wu
    th, wth = gauss_legendre_panels(0.0, 2.0 * np.pi, 24, order)
    Rg, Tg = np.meshgrid(r, th, indexing="ij")
    Wg = np.outer(wr * r, wth)  # r dr dtheta
    t1, t2 = frame.tangent
    Y = (
        frame.point[None, :]
        + (Rg * np.cos(Tg)).ravel()[:, None] * t1[None, :]
        + (Rg * np.sin(Tg)).ravel()[:, None] * t2[None, :]
    )
    Z = x0[None, :] - Y
    t2n = np.sum(Z * Z, axis=1)
    vals = kernel.values(Z) * t2n ** (-q / 2.0)
    head = float(np.sum(vals * Wg.ravel()))
    # far tail: K(x0 - r w) -> K(-w); include the first moment correction
    omega = np.stack([np.cos(th), np.sin(th)], axis=1)
    dirs = omega @ frame.tangent
    kvals = kernel.values(-dirs)
    m0 = float(np.sum(kvals * wth))
    m1 = float(np.sum(kvals * (dirs @ x0) * wth))
    tail = m0 * S**-alpha / alpha + q * m1 * S ** (-alpha - 1.0) / (alpha + 1.0)
    return head + tail


def halfarc_transform(kernel, frame, x0, alpha):
    """Weighted hemisphere integral equal to the plane integral R(x0).

    Requires delta_E(x0) = 1.  Returns both the transform value and the
    directly computed plane integral; they agree when K is
    zero-homogeneous (values are read on the unit sphere either way).
    """
    x0 = np.asarray(x0, dtype=float)
    delta = float(frame.dist(x0[None, :])[0])
    if abs(delta - 1.0) > 1e-9:
        raise ValueError("halfarc transform requires delta_E(x0) = 1")
    proj = frame.project(x0[None, :])[0]
    nu = x0 - proj  # unit by the delta check
    w0 = -nu
    if frame.d == 1:
        transform = _halfarc_quad_d1(kernel, frame.tangent[0], nu, alpha)
        direct, _, _ = line_field(kernel, frame, alpha, x0, order=0)
    elif frame.d == 2 and frame.n == 3:
        transform = _halfarc_quad_d2(
            kernel, frame.tangent[0], frame.tangent[1], nu, alpha
        )
        direct = _direct_plane_integral_2d(kernel, frame, alpha, x0)
    else:
        raise UnsupportedDimension("half-arc supports d=1 (n=2,3) and d=2 (n=3)")
    return HalfArcResult(transform, direct, frame, x0, w0)


def _fixing_rotations(frame, count=8):
    """Orthogonal maps A with A(E) = E: block maps in the (tangent, normal) split."""
    n = frame.n
    d = frame.d
    B = np.vstack([frame.tangent, frame.normal])  # rows: adapted basis
    mats = []

    def embed(At, An):
        blk = np.zeros((n, n))
        blk[:d, :d] = At
        blk[d:, d:] = An
        return B.T @ blk @ B

    if d == 1:
        tang_blocks = [np.array([[1.0]]), np.array([[-1.0]])]
    else:
        tang_blocks = [np.eye(d)]
        for ang in np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)[1:]:
            c, s = np.cos(ang), np.sin(ang)
            tang_blocks.append(np.array([[c, -s], [s, c]]))
        tang_blocks.append(np.diag([1.0, -1.0]))
    if n - d == 1:
        norm_blocks = [np.array([[1.0]]), np.array([[-1.0]])]
    else:
        norm_blocks = [np.eye(n - d)]
        for ang in np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)[1:]:
            c, s = np.cos(ang), np.sin(ang)
            norm_blocks.append(np.array([[c, -s], [s, c]]))
        norm_blocks.append(np.diag([1.0, -1.0]))
    for At in tang_blocks:
        for An in norm_blocks:
            mats.append(embed(At, An))
    return mats


class _RotatedView:
    """K(A x) wrapper for quadrature (values only)."""

    def __init__(self, base, A):
        self.base = base
        self.A = A
        self.n = base.n
        self.is_zero_homogeneous = base.is_zero_homogeneous

    def values(self, X):
        return self.base.values(np.asarray(X, dtype=float) @ self.A.T)


def rotation_invariance_check(kernel, frame, x0, alpha, rotations=None):
    """Max deviation of the half-arc integral under plane-fixing rotations.

    Zero deviation across all A with A(E) = E characterizes exactness for
    the plane; finitely many rotations give a lower bound on the true sup.
    """
    x0 = np.asarray(x0, dtype=float)
    proj = frame.project(x0[None, :])[0]
    nu = x0 - proj
    if rotations is None:
        rotations = _fixing_rotations(frame)
    if frame.d == 1:
        base_val = _halfarc_quad_d1(kernel, frame.tangent[0], nu, alpha)
        vals = [
            _halfarc_quad_d1(_RotatedView(kernel, A), frame.tangent[0], nu, alpha)
            for A in rotations
        ]
    elif frame.d == 2 and frame.n == 3:
        base_val = _halfarc_quad_d2(
            kernel, frame.tangent[0], frame.tangent[1], nu, alpha
        )
        vals = [
            _halfarc_quad_d2(
                _RotatedView(kernel, A), frame.tangent[0], frame.tangent[1], nu, alpha
            )
            for A in rotations
        ]
    else:
        raise UnsupportedDimension("half-arc supports d=1 (n=2,3) and d=2 (n=3)")
    return float(np.max(np.abs(np.asarray(vals) - base_val)))
