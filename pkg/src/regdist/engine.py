"""Field evaluation: R, its derivatives, D, and the oscillation F.

For a kernel K, measure mu, and exponent alpha > 0 (q = d + alpha):

    R(x)    = sum_i w_i K(x - y_i) |x - y_i|^-q   (+ analytic tail)
    D(x)    = R(x)^(-1/alpha)
    F(x)    = delta(x) * |grad |grad D|^2|

Brute-force summation is vectorized over atoms in a fixed order (numpy's
pairwise reduction), so results are reproducible and independent of any
batching.  Tree acceleration lives in ``tree.py`` and is selected through
``SummationConfig``.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn

from .errors import TailModelInvalid, TailUnavailable, TooCloseToSupport
from .measures import dist_to_support
from .quadrature import integrate


def sphere_area(dim):
    """Surface measure of the unit sphere S^(dim-1) in R^dim."""
    return 2.0 * np.pi ** (dim / 2.0) / gamma_fn(dim / 2.0)


def flat_constant(d, alpha):
    """R(x) * delta^alpha outside a d-plane for K == 1:
    (sigma_{d-1}/2) B(d/2, alpha/2) = pi^{d/2} Gamma(alpha/2) / Gamma((d+alpha)/2)."""
    return np.pi ** (d / 2.0) * gamma_fn(alpha / 2.0) / gamma_fn((d + alpha) / 2.0)


def flat_oracle(d, alpha, c, delta):
    """Closed-form (R, D, |grad D|) outside a d-plane with constant kernel c."""
    R = c * flat_constant(d, alpha) * delta ** (-alpha)
    D = R ** (-1.0 / alpha)
    return R, D, D / delta


@dataclass
class SummationConfig:
    method: str = "brute"  # 'brute' | 'tree'
    theta: float = 0.5
    order: int = 4
    tail_correction: bool = True
    target_rel_error: float = 1e-7
    guard_factor: float = 2.0

    def brute(self):
        return replace(self, method="brute")


DEFAULT_CONFIG = SummationConfig()


@dataclass
class FieldEval:
    """R and D data at one off-support point (all derivatives analytic)."""

    x: np.ndarray
    delta: float
    r: float
    grad_r: np.ndarray
    hess_r: np.ndarray
    d: float
    grad_d: np.ndarray
    grad_sq_grad_d: np.ndarray  # grad |grad D|^2
    f: float

    @property
    def grad_d_norm(self):
        return float(np.linalg.norm(self.grad_d))


def _summand_arrays(kernel, Z, q, order):
    """R/grad/hess contributions of displacement rows Z (m, n), unweighted."""
    t2 = np.sum(Z * Z, axis=1)
    tq = t2 ** (-q / 2.0)
    kv = kernel.values(Z)
    val = kv * tq
    grad = hess = None
    if order >= 1:
        tq2 = tq / t2
        kg = kernel.gradients(Z)
        grad = kg * tq[:, None] - (q * kv * tq2)[:, None] * Z
    if order >= 2:
        kh = kernel.hessians(Z)
        eye = np.eye(Z.shape[1])[None, :, :]
        zz = Z[:, :, None] * Z[:, None, :]
        cross = kg[:, :, None] * Z[:, None, :] + Z[:, :, None] * kg[:, None, :]
        hess = (
            kh * tq[:, None, None]
            - (q * tq2)[:, None, None] * cross
            + (q * kv)[:, None, None]
            * ((q + 2.0) * (tq2 / t2)[:, None, None] * zz - tq2[:, None, None] * eye)
        )
    return val, grad, hess


def _brute_point(kernel, mu, q, x, order):
    Z = x[None, :] - mu.atoms
    val, grad, hess = _summand_arrays(kernel, Z, q, order)
    w = mu.weights
    R = float(w @ val)
    gR = w @ grad if order >= 1 else None
    hR = np.einsum("i,ijk->jk", w, hess) if order >= 2 else None
    return R, gR, hR


class _HalfLineTail:
    """Closed forms for W(z) = int_z^inf (1+v^2)^{-q/2} dv and derivatives.

    W reduces to a regularized incomplete beta function, so every tail
    quantity for constant kernels outside a truncated line is exact.
    """

    def __init__(self, q):
        from scipy.special import beta as beta_fn, betainc

        self.q = float(q)
        self._betainc = betainc
        self._bfull = beta_fn((q - 1.0) / 2.0, 0.5)

    def w(self, z):
        x = 1.0 / (1.0 + z * z)
        return 0.5 * self._bfull * self._betainc((self.q - 1.0) / 2.0, 0.5, x)

    def dw(self, z):
        return -((1.0 + z * z) ** (-self.q / 2.0))

    def d2w(self, z):
        return self.q * z * (1.0 + z * z) ** (-self.q / 2.0 - 1.0)


class TailModel:
    """Flat-tail contribution beyond the in-plane truncation radius L.

    The constant part of a radial kernel (its limit at infinity) is
    integrated in closed form; for d = 1 the query's in-plane offset is
    handled exactly through the two half-line integrals.  The decaying
    residual of the profile is integrated around the frame center and
    splined over log delta (its offset sensitivity is second order in a
    quantity that is itself Dini-small).
    """

    def __init__(self, mu, kernel, alpha):
        if mu.tail is None:
            raise TailUnavailable("measure carries no tail descriptor")
        profile = kernel.radial_profile()
        if profile is None:
            raise TailModelInvalid("tail correction needs a radial kernel")
        if profile.limit_at_infinity is None:
            raise TailModelInvalid("kernel profile has no limit at infinity")
        self.mu = mu
        self.profile = profile
        self.kinf = float(profile.limit_at_infinity)
        self.alpha = float(alpha)
        self.d = mu.d
        self.q = mu.d + alpha
        self.L = mu.tail.extent
        self.sigma = sphere_area(max(mu.d, 1.0))
        if self.d == 1:
            self._half = _HalfLineTail(self.q)
        self._res_splines = None
        self._res_zero = None

    # -- constant part ------------------------------------------------------

    def _const_half_terms(self, delta, M, order):
        """(T, T_delta, T_deltadelta, T_M, T_MM, T_Mdelta) for one ray."""
        q, h = self.q, self._half
        z = M / delta
        W, dW = h.w(z), h.dw(z)
        T = delta ** (1.0 - q) * W
        out = [T]
        if order >= 1:
            out.append(delta ** (-q) * ((1.0 - q) * W - z * dW))
        if order >= 2:
            d2W = h.d2w(z)
            out.append(
                delta ** (-q - 1.0) * (q * (q - 1.0) * W + 2.0 * q * z * dW + z * z * d2W)
            )
        return out

    def _const_d2(self, delta, order):
        """Centered disk tail for d = 2: sigma_1 K_inf (delta^2+L^2)^{(2-q)/2}/(q-2)."""
        q, L = self.q, self.L
        p = delta**2 + L**2
        T = 2.0 * np.pi * p ** ((2.0 - q) / 2.0) / (q - 2.0)
        out = [T]
        if order >= 1:
            out.append(2.0 * np.pi * (2.0 - q) / (q - 2.0) * delta * p ** (-q / 2.0))
        if order >= 2:
            out.append(
                2.0
                * np.pi
                * (2.0 - q)
                / (q - 2.0)
                * (p ** (-q / 2.0) - q * delta**2 * p ** (-q / 2.0 - 1.0))
            )
        return out

    # -- decaying residual (profile minus its limit), centered ---------------

    def _res_raw(self, delta, order):
        prof = self.profile
        kinf = self.kinf
        q, d, L = self.q, self.d, self.L

        def f0(t):
            return prof.value(t) - kinf

        if order == 0:
            fn = lambda s, t, p: f0(t) * p ** (-q / 2.0)
        elif order == 1:
            fn = lambda s, t, p: (
                prof.deriv(t, 1) * delta / t - q * delta * f0(t) / p
            ) * p ** (-q / 2.0)
        else:

            def fn(s, t, p):
                g0 = f0(t)
                g1 = prof.deriv(t, 1)
                g2 = prof.deriv(t, 2)
                term = (
                    g2 * (delta / t) ** 2
                    + g1 * (1.0 / t - delta**2 / t**3)
                    - 2.0 * q * delta * g1 * (delta / t) / p
                    - q * g0 / p
                    + q * (q + 2.0) * g0 * delta**2 / p**2
                )
                return term * p ** (-q / 2.0)

        def integrand(s):
            t = np.hypot(delta, s)
            p = delta * delta + s * s
            return float(fn(np.array([s]), np.array([t]), np.array([p]))[0]) * s ** (
                d - 1.0
            )

        return self.sigma * integrate(integrand, L, np.inf, rel_tol=1e-10, abs_tol=1e-300)

    def _res(self, delta, order):
        if self._res_zero is None:
            probe = np.geomspace(self.L, 100.0 * self.L, 64)
            self._res_zero = bool(
                np.max(np.abs(self.profile.value(probe) - self.kinf)) < 1e-15
            )
        if self._res_zero:
            return 0.0
        if self._res_splines is None:
            lo = max(self.mu.spacing * 0.5, self.L * 1e-9)
            hi = 16.0 * self.L
            grid = np.logspace(np.log10(lo), np.log10(hi), 240)
            vals = [np.array([self._res_raw(dl, m) for dl in grid]) for m in range(3)]
            self._res_splines = [CubicSpline(np.log(grid), v) for v in vals]
            self._res_range = (lo, hi)
        lo, hi = self._res_range
        if lo <= delta <= hi:
            return float(self._res_splines[order](np.log(delta)))
        return self._res_raw(delta, order)

    # -- assembled terms ------------------------------------------------------

    def terms(self, x, order):
        """Tail contributions (T, grad, hess) at the point x."""
        frame = self.mu.tail.frame
        comp = frame.normal_component(x[None, :])[0]
        delta = float(np.linalg.norm(comp))
        nu = (comp @ frame.normal) / delta
        kinf, q = self.kinf, self.q
        if self.d == 1:
            tangent = frame.tangent[0]
            a = float((x - frame.point) @ tangent)
            M1, M2 = self.L - a, self.L + a
            if min(M1, M2) <= 2.0 * delta * 1e-12 or min(M1, M2) <= 0:
                raise TailUnavailable("query point beyond the truncation extent")
            h1 = self._const_half_terms(delta, M1, order)
            h2 = self._const_half_terms(delta, M2, order)
            T0 = kinf * (h1[0] + h2[0]) + 2.0 * self._res(delta, 0)
            if order == 0:
                return T0, None, None
            z1, z2 = M1 / delta, M2 / delta
            dW1, dW2 = self._half.dw(z1), self._half.dw(z2)
            Td = kinf * (h1[1] + h2[1]) + 2.0 * self._res(delta, 1)
            Ta = kinf * delta ** (-q) * (dW2 - dW1)
            g = Td * nu + Ta * tangent
            if order == 1:
                return T0, g, None
            d2W1, d2W2 = self._half.d2w(z1), self._half.d2w(z2)
            Tdd = kinf * (h1[2] + h2[2]) + 2.0 * self._res(delta, 2)
            Taa = kinf * delta ** (-q - 1.0) * (d2W1 + d2W2)
            Tda = kinf * delta ** (-q - 1.0) * (
                -q * (dW2 - dW1) - z2 * d2W2 + z1 * d2W1
            )
            PN = frame.normal.T @ frame.normal
            nn = np.outer(nu, nu)
            tt = np.outer(tangent, tangent)
            nt = np.outer(nu, tangent)
            H = Tdd * nn + Tda * (nt + nt.T) + Taa * tt + Td * (PN - nn) / delta
            return T0, g, H
        # d == 2: centered approximation (documented: valid for |x_par| << L)
        c = self._const_d2(delta, order)
        T0 = kinf * c[0] + self._res(delta, 0)
        if order == 0:
            return T0, None, None
        Td = kinf * c[1] + self._res(delta, 1)
        g = Td * nu
        if order == 1:
            return T0, g, None
        Tdd = kinf * c[2] + self._res(delta, 2)
        PN = frame.normal.T @ frame.normal
        nn = np.outer(nu, nu)
        H = Tdd * nn + Td * (PN - nn) / delta
        return T0, g, H


def _tail_terms(mu, kernel, alpha, x, order, cache):
    key = (id(kernel), float(alpha))
    model = cache.get(key)
    if model is None:
        model = TailModel(mu, kernel, alpha)
        cache[key] = model
    return model.terms(x, order)


def tail_correction(mu, kernel, alpha, x, order=2):
    """Closed-form flat-tail contribution to (R, gradR, hessR) at x.

    Requires a measure with a tail descriptor and a radial kernel whose
    profile has a limit at infinity (checked); magnitudes are returned
    separately from the discrete sums.
    """
    if mu.tail is None:
        raise TailUnavailable("measure carries no tail descriptor")
    cache = getattr(mu, "_tail_cache", None)
    if cache is None:
        cache = {}
        mu._tail_cache = cache
    return _tail_terms(mu, kernel, alpha, np.asarray(x, dtype=float), order, cache)


def eval_r(kernel, mu, alpha, x, config=DEFAULT_CONFIG, order=2):
    """(R, gradR, hessR) at one point; derivatives above ``order`` are None."""
    x = np.asarray(x, dtype=float)
    delta = dist_to_support(mu, x)
    if delta < config.guard_factor * mu.spacing:
        raise TooCloseToSupport(
            f"delta = {delta:.3g} inside guard band {config.guard_factor} x spacing"
        )
    q = mu.d + alpha
    if config.method == "tree":
        from .tree import tree_eval

        R, gR, hR = tree_eval(kernel, mu, alpha, x[None, :], config, order)
        R, gR, hR = float(R[0]), (gR[0] if order >= 1 else None), (
            hR[0] if order >= 2 else None
        )
    else:
        R, gR, hR = _brute_point(kernel, mu, q, x, order)
    if config.tail_correction and mu.tail is not None:
        T0, T1, T2 = tail_correction(mu, kernel, alpha, x, order)
        R += T0
        if order >= 1:
            gR = gR + T1
        if order >= 2:
            hR = hR + T2
    return R, gR, hR


def assemble_field(x, delta, alpha, R, gR, hR):
    """Chain rule from (R, gradR, hessR) to D, grad D, grad|grad D|^2, F."""
    a = float(alpha)
    D = R ** (-1.0 / a)
    gD = (-1.0 / a) * R ** (-1.0 / a - 1.0) * gR
    g2 = float(gR @ gR)
    # grad |grad D|^2, summing over all coordinates
    grad_sq = (1.0 / a**2) * (
        (-2.0 / a - 2.0) * R ** (-2.0 / a - 3.0) * g2 * gR
        + 2.0 * R ** (-2.0 / a - 2.0) * (hR @ gR)
    )
    F = delta * float(np.linalg.norm(grad_sq))
    return FieldEval(
        x=x,
        delta=delta,
        r=R,
        grad_r=gR,
        hess_r=hR,
        d=D,
        grad_d=gD,
        grad_sq_grad_d=grad_sq,
        f=F,
    )


def eval_field(kernel, mu, alpha, x, config=DEFAULT_CONFIG):
    """Full FieldEval at one off-support point."""
    x = np.asarray(x, dtype=float)
    R, gR, hR = eval_r(kernel, mu, alpha, x, config, order=2)
    delta = dist_to_support(mu, x)
    return assemble_field(x, delta, alpha, R, gR, hR)


def eval_field_batch(kernel, mu, alpha, X, config=DEFAULT_CONFIG, threads=1):
    """FieldEvals at many points, in input order.

    Per-point results do not depend on the batching, so any thread count
    yields identical output.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if config.method == "tree" and len(X) > 1:
        return _batch_tree(kernel, mu, alpha, X, config)
    if threads <= 1 or len(X) < 4:
        return [eval_field(kernel, mu, alpha, x, config) for x in X]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda x: eval_field(kernel, mu, alpha, x, config), X))


def _batch_tree(kernel, mu, alpha, X, config):
    from .tree import tree_eval

    deltas = np.array([dist_to_support(mu, x) for x in X])
    bad = deltas < config.guard_factor * mu.spacing
    if np.any(bad):
        i = int(np.argmax(bad))
        raise TooCloseToSupport(f"point {X[i]} inside guard band")
    R, gR, hR = tree_eval(kernel, mu, alpha, X, config, order=2)
    if config.tail_correction and mu.tail is not None:
        for i, x in enumerate(X):
            T0, T1, T2 = tail_correction(mu, kernel, alpha, x, 2)
            R[i] += T0
            gR[i] += T1
            hR[i] += T2
    return [
        assemble_field(x, dl, alpha, float(R[i]), gR[i], hR[i])
        for i, (x, dl) in enumerate(zip(X, deltas))
    ]
