"""Tree-accelerated summation of K(x-y)|x-y|^(-q) over atom clouds.

A 2^n-ary spatial tree stores, per node, the centroid-centered moments

    N[beta, m] = sum_a w_a u_a^beta |u_a|^(2m),   u_a = y_a - centroid,

for |beta| + 2m <= p.  A far node's contribution expands the summand in
sigma = |x-y|^2 - |x-c|^2 around the centroid:

    sum_a w_a g(|x - y_a|) ~ sum_k H_k(D^2)/k! * sum_a w_a sigma_a^k,

with H_k = (d/ds)^k g(sqrt(s)), which is closed-form for power-law
summands (constant kernels) and otherwise built from profile derivatives.
Admissibility combines the opening-angle cap (radius/dist <= theta) with
a per-node truncation bound, so the configured target relative error is
met regardless of theta.

Evaluation paths:
  * constant kernels: fused numba traversal (fast path),
  * radial kernels with enough profile derivatives: numba traversal
    collecting interaction lists + vectorized numpy evaluation,
  * anything else, or theta == 0: exact brute-force summation
    (bit-identical to the brute path at theta == 0 by delegation).
"""

import math

import numpy as np
from numba import njit
from scipy.special import gamma as gamma_fn

from .profiles import ConstantProfile


# ---------------------------------------------------------------------------
# term tables


def _compositions(total, n):
    if n == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, n - 1):
            yield (head,) + rest


def _term_table(n, p):
    """Flattened expansion terms (k, j, beta, m) with j + 2m <= p."""
    col_index = {}
    terms = []
    for j in range(p + 1):
        for m in range((p - j) // 2 + 1):
            k = j + m
            cj = math.comb(k, j) * (-2.0) ** j / math.factorial(k)
            for beta in _compositions(j, n):
                multi = math.factorial(j)
                for b in beta:
                    multi //= math.factorial(b)
                key = (beta, m)
                col = col_index.setdefault(key, len(col_index))
                terms.append((k, cj * multi, beta, col))
    t_k = np.array([t[0] for t in terms], dtype=np.int64)
    t_coef = np.array([t[1] for t in terms], dtype=np.float64)
    t_beta = np.array([t[2] for t in terms], dtype=np.int64)
    t_col = np.array([t[3] for t in terms], dtype=np.int64)
    cols = [None] * len(col_index)
    for (beta, m), idx in col_index.items():
        cols[idx] = (beta, m)
    return t_k, t_coef, t_beta, t_col, cols


def _power_h_coefs(q, kmax):
    """hc[k] with H_k(s) = hc[k] * s^(-q/2-k) for g(t) = t^-q."""
    hc = np.empty(kmax + 1)
    hc[0] = 1.0
    for k in range(kmax):
        hc[k + 1] = hc[k] * (-q / 2.0 - k)
    return hc


def _profile_h_matrix(q, kmax):
    """A[k, l] with H_k = sum_l A[k, l] f^(l)(t) t^(l - q - 2k)."""
    # c[k][i]: H_k = sum_i c[k][i] g^(i) t^(i-2k)
    c = [np.array([1.0])]
    for k in range(kmax):
        prev = c[k]
        nxt = np.zeros(len(prev) + 1)
        for i, ci in enumerate(prev):
            nxt[i + 1] += ci / 2.0
            nxt[i] += ci * (i - 2 * k) / 2.0
        c.append(nxt)
    # falling factorial of -q
    ff = [1.0]
    for j in range(kmax):
        ff.append(ff[-1] * (-q - j))
    A = np.zeros((kmax + 1, kmax + 1))
    for k in range(kmax + 1):
        for l in range(k + 1):
            A[k, l] = sum(
                c[k][i] * math.comb(i, l) * ff[i - l] for i in range(l, len(c[k]))
            )
    return A


def _gate_coef(q, p):
    """Safe bound for the dropped-term size: rising(q/2, p+1) 3^(p+1) / (p+1)!."""
    rising = gamma_fn(q / 2.0 + p + 1.0) / gamma_fn(q / 2.0)
    return rising * 3.0 ** (p + 1) / math.factorial(p + 1)


# ---------------------------------------------------------------------------
# tree construction


class SummationTree:
    """Flat-array spatial tree with per-node expansion moments."""

    def __init__(self, mu, order=4, leaf_size=32):
        atoms = mu.atoms
        weights = mu.weights
        n = atoms.shape[1]
        self.n = n
        self.order = int(order)
        self.leaf_size = int(leaf_size)
        (self.t_k, self.t_coef, self.t_beta, self.t_col, self.cols) = _term_table(
            n, self.order
        )

        perm = np.arange(len(atoms))
        centers, radii, masses = [], [], []
        child_ptr, child_cnt = [], []
        atom_ptr, atom_cnt = [], []
        spans = [(0, len(atoms))]
        boxes = [
            (np.min(atoms, axis=0), np.max(atoms, axis=0))
        ]  # per pending node, aligned with spans
        # breadth-first build so children of node i are contiguous
        head = 0
        while head < len(spans):
            lo, hi = spans[head]
            bmin, bmax = boxes[head]
            seg = perm[lo:hi]
            pts = atoms[seg]
            w = weights[seg]
            total = float(np.sum(w))
            centroid = (w @ pts) / total
            radius = float(np.sqrt(np.max(np.sum((pts - centroid) ** 2, axis=1))))
            centers.append(centroid)
            radii.append(radius)
            masses.append(total)
            atom_ptr.append(lo)
            atom_cnt.append(hi - lo)
            if hi - lo <= self.leaf_size or radius == 0.0:
                child_ptr.append(-1)
                child_cnt.append(0)
            else:
                mid = (bmin + bmax) / 2.0
                codes = np.zeros(hi - lo, dtype=np.int64)
                for axis in range(n):
                    codes |= (pts[:, axis] > mid[axis]).astype(np.int64) << axis
                order_idx = np.argsort(codes, kind="stable")
                perm[lo:hi] = seg[order_idx]
                codes = codes[order_idx]
                child_ptr.append(len(spans))
                cnt = 0
                for code in range(2**n):
                    sel = np.searchsorted(codes, [code, code + 1])
                    if sel[1] > sel[0]:
                        child_lo, child_hi = lo + sel[0], lo + sel[1]
                        cmin = bmin.copy()
                        cmax = bmax.copy()
                        for axis in range(n):
                            if code >> axis & 1:
                                cmin[axis] = mid[axis]
                            else:
                                cmax[axis] = mid[axis]
                        spans.append((child_lo, child_hi))
                        boxes.append((cmin, cmax))
                        cnt += 1
                child_cnt.append(cnt)
            head += 1

        self.centers = np.asarray(centers)
        self.radii = np.asarray(radii)
        self.masses = np.asarray(masses)
        self.child_ptr = np.asarray(child_ptr, dtype=np.int64)
        self.child_cnt = np.asarray(child_cnt, dtype=np.int64)
        self.atom_ptr = np.asarray(atom_ptr, dtype=np.int64)
        self.atom_cnt = np.asarray(atom_cnt, dtype=np.int64)
        self.atoms = np.ascontiguousarray(atoms[perm])
        self.weights = np.ascontiguousarray(weights[perm])
        self.perm = perm
        self._build_moments()

    def _build_moments(self):
        ncols = len(self.cols)
        nn = len(self.centers)
        self.moments = np.zeros((nn, ncols))
        for node in range(nn):
            lo = self.atom_ptr[node]
            hi = lo + self.atom_cnt[node]
            u = self.atoms[lo:hi] - self.centers[node]
            w = self.weights[lo:hi]
            u2 = np.sum(u * u, axis=1)
            for col, (beta, m) in enumerate(self.cols):
                term = w.copy()
                for axis, b in enumerate(beta):
                    if b:
                        term = term * u[:, axis] ** b
                if m:
                    term = term * u2**m
                self.moments[node, col] = np.sum(term)


def get_tree(mu, order=4, leaf_size=32):
    cache = getattr(mu, "_summation_tree", None)
    if cache is None:
        cache = {}
        mu._summation_tree = cache
    key = (order, leaf_size)
    if key not in cache:
        cache[key] = SummationTree(mu, order, leaf_size)
    return cache[key]


# ---------------------------------------------------------------------------
# fused numba path for constant kernels


@njit(cache=False)
def _eval_const_kernel(
    centers,
    radii,
    masses,
    child_ptr,
    child_cnt,
    atom_ptr,
    atom_cnt,
    moments,
    t_k,
    t_coef,
    t_beta,
    t_col,
    hc,
    atoms,
    weights,
    X,
    q,
    kc,
    theta,
    gate,
    target,
    order,
):
    nq, n = X.shape
    p1 = 0
    for t in range(len(t_k)):
        if t_k[t] > p1:
            p1 = t_k[t]
    kmax = p1 + 2
    R = np.zeros(nq)
    G = np.zeros((nq, n))
    H = np.zeros((nq, n, n))
    stack = np.empty(8192, dtype=np.int64)
    Hk = np.empty(kmax + 1)
    vp = np.empty((n, 8))
    exp_p1 = 0.5 * (p1 + 1.0)
    for qi in range(nq):
        x = X[qi]
        sp = 0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            D2 = 0.0
            for i in range(n):
                dv = x[i] - centers[node, i]
                D2 += dv * dv
            rad = radii[node]
            far = False
            if D2 > 0.0 and rad * rad <= theta * theta * D2:
                rho2 = rad * rad / D2
                if gate * rho2**exp_p1 <= target:
                    far = True
            if far:
                # H_k tables at s = D2
                sqq = D2 ** (-0.5 * q)
                for k in range(kmax + 1):
                    Hk[k] = kc * hc[k] * sqq
                    sqq /= D2
                for i in range(n):
                    vp[i, 0] = 1.0
                    vi = x[i] - centers[node, i]
                    for e in range(1, 8):
                        vp[i, e] = vp[i, e - 1] * vi
                for t in range(len(t_k)):
                    k = t_k[t]
                    base = t_coef[t] * moments[node, t_col[t]]
                    if base == 0.0:
                        continue
                    vb = 1.0
                    for i in range(n):
                        vb *= vp[i, t_beta[t, i]]
                    R[qi] += base * Hk[k] * vb
                    if order >= 1:
                        for i in range(n):
                            vi = x[i] - centers[node, i]
                            gi = 2.0 * Hk[k + 1] * vi * vb
                            bi = t_beta[t, i]
                            if bi > 0:
                                dec = 1.0
                                for l in range(n):
                                    e = t_beta[t, l]
                                    if l == i:
                                        e -= 1
                                    dec *= vp[l, e]
                                gi += Hk[k] * bi * dec
                            G[qi, i] += base * gi
                    if order >= 2:
                        for i in range(n):
                            vi = x[i] - centers[node, i]
                            bi = t_beta[t, i]
                            for j in range(i, n):
                                vj = x[j] - centers[node, j]
                                bj = t_beta[t, j]
                                hij = 4.0 * Hk[k + 2] * vi * vj * vb
                                if i == j:
                                    hij += 2.0 * Hk[k + 1] * vb
                                if bj > 0:
                                    dec = 1.0
                                    for l in range(n):
                                        e = t_beta[t, l]
                                        if l == j:
                                            e -= 1
                                        dec *= vp[l, e]
                                    hij += 2.0 * Hk[k + 1] * vi * bj * dec
                                if bi > 0:
                                    dec = 1.0
                                    for l in range(n):
                                        e = t_beta[t, l]
                                        if l == i:
                                            e -= 1
                                        dec *= vp[l, e]
                                    hij += 2.0 * Hk[k + 1] * vj * bi * dec
                                # second derivative of v^beta
                                if i == j:
                                    if bi >= 2:
                                        dec = 1.0
                                        for l in range(n):
                                            e = t_beta[t, l]
                                            if l == i:
                                                e -= 2
                                            dec *= vp[l, e]
                                        hij += Hk[k] * bi * (bi - 1) * dec
                                else:
                                    if bi >= 1 and bj >= 1:
                                        dec = 1.0
                                        for l in range(n):
                                            e = t_beta[t, l]
                                            if l == i or l == j:
                                                e -= 1
                                            dec *= vp[l, e]
                                        hij += Hk[k] * bi * bj * dec
                                val = base * hij
                                H[qi, i, j] += val
                                if i != j:
                                    H[qi, j, i] += val
            elif child_cnt[node] == 0:
                lo = atom_ptr[node]
                hi = lo + atom_cnt[node]
                for a in range(lo, hi):
                    t2 = 0.0
                    for i in range(n):
                        z = x[i] - atoms[a, i]
                        t2 += z * z
                    val = weights[a] * kc * t2 ** (-0.5 * q)
                    R[qi] += val
                    if order >= 1:
                        c1 = -q * val / t2
                        for i in range(n):
                            G[qi, i] += c1 * (x[i] - atoms[a, i])
                    if order >= 2:
                        c1 = -q * val / t2
                        c2 = q * (q + 2.0) * val / (t2 * t2)
                        for i in range(n):
                            zi = x[i] - atoms[a, i]
                            for j in range(i, n):
                                zj = x[j] - atoms[a, j]
                                hij = c2 * zi * zj
                                if i == j:
                                    hij += c1
                                H[qi, i, j] += hij
                                if i != j:
                                    H[qi, j, i] += hij
            else:
                for c in range(child_ptr[node], child_ptr[node] + child_cnt[node]):
                    stack[sp] = c
                    sp += 1
    return R, G, H


@njit(cache=False)
def _collect_interactions(
    centers,
    radii,
    child_ptr,
    child_cnt,
    x,
    theta,
    gate,
    target,
    exp_p1,
    far_out,
    near_out,
):
    sp = 0
    stack = np.empty(8192, dtype=np.int64)
    stack[0] = 0
    sp = 1
    nf = 0
    nn_ = 0
    n = centers.shape[1]
    while sp > 0:
        sp -= 1
        node = stack[sp]
        D2 = 0.0
        for i in range(n):
            dv = x[i] - centers[node, i]
            D2 += dv * dv
        rad = radii[node]
        far = False
        if D2 > 0.0 and rad * rad <= theta * theta * D2:
            rho2 = rad * rad / D2
            if gate * rho2**exp_p1 <= target:
                far = True
        if far:
            if nf >= len(far_out):
                return -1, -1
            far_out[nf] = node
            nf += 1
        elif child_cnt[node] == 0:
            if nn_ >= len(near_out):
                return -1, -1
            near_out[nn_] = node
            nn_ += 1
        else:
            for c in range(child_ptr[node], child_ptr[node] + child_cnt[node]):
                stack[sp] = c
                sp += 1
    return nf, nn_


def _radial_far_eval(tree, profile, q, X, far_qi, far_node, order, out):
    """Vectorized far-field for radial kernels via the H_k profile matrix."""
    p = tree.order
    kmax = p + order
    A = _profile_h_matrix(q, kmax)
    R, G, H = out
    v = X[far_qi] - tree.centers[far_node]
    D2 = np.sum(v * v, axis=1)
    t = np.sqrt(D2)
    n = tree.n
    f_l = [profile.deriv(t, l) for l in range(kmax + 1)]
    Hk = np.zeros((len(v), kmax + 1))
    for k in range(kmax + 1):
        acc = np.zeros(len(v))
        for l in range(k + 1):
            if A[k, l] != 0.0:
                acc += A[k, l] * f_l[l] * t ** (l - q - 2 * k)
        Hk[:, k] = acc
    mom = tree.moments[far_node]

    def vpow(beta, dec=None, dec2=None):
        out_ = np.ones(len(v))
        for axis in range(n):
            e = beta[axis]
            if dec is not None and axis == dec:
                e -= 1
            if dec2 is not None and axis == dec2:
                e -= 1
            if e > 0:
                out_ = out_ * v[:, axis] ** e
            elif e < 0:
                return None
        return out_

    for idx in range(len(tree.t_k)):
        k = int(tree.t_k[idx])
        beta = tree.t_beta[idx]
        base = tree.t_coef[idx] * mom[:, tree.t_col[idx]]
        vb = vpow(beta)
        np.add.at(R, far_qi, base * Hk[:, k] * vb)
        if order >= 1:
            for i in range(n):
                gi = 2.0 * Hk[:, k + 1] * v[:, i] * vb
                if beta[i] > 0:
                    gi = gi + Hk[:, k] * beta[i] * vpow(beta, dec=i)
                np.add.at(G[:, i], far_qi, base * gi)
        if order >= 2:
            for i in range(n):
                for j in range(i, n):
                    hij = 4.0 * Hk[:, k + 2] * v[:, i] * v[:, j] * vb
                    if i == j:
                        hij = hij + 2.0 * Hk[:, k + 1] * vb
                    if beta[j] > 0:
                        hij = hij + 2.0 * Hk[:, k + 1] * v[:, i] * beta[j] * vpow(
                            beta, dec=j
                        )
                    if beta[i] > 0:
                        hij = hij + 2.0 * Hk[:, k + 1] * v[:, j] * beta[i] * vpow(
                            beta, dec=i
                        )
                    if i == j:
                        if beta[i] >= 2:
                            hij = hij + Hk[:, k] * beta[i] * (beta[i] - 1) * vpow(
                                beta, dec=i, dec2=i
                            )
                    elif beta[i] >= 1 and beta[j] >= 1:
                        hij = hij + Hk[:, k] * beta[i] * beta[j] * vpow(
                            beta, dec=i, dec2=j
                        )
                    np.add.at(H[:, i, j], far_qi, base * hij)
                    if i != j:
                        np.add.at(H[:, j, i], far_qi, base * hij)


def tree_eval(kernel, mu, alpha, X, config, order=2):
    """(R, gradR, hessR) arrays over query rows of X using the tree path."""
    from .engine import _brute_point  # local import to avoid a cycle

    X = np.atleast_2d(np.asarray(X, dtype=float))
    q = mu.d + alpha
    nq, n = X.shape
    if config.theta == 0.0:
        R = np.empty(nq)
        G = np.empty((nq, n))
        H = np.empty((nq, n, n))
        for i, x in enumerate(X):
            r_, g_, h_ = _brute_point(kernel, mu, q, x, order)
            R[i] = r_
            if order >= 1:
                G[i] = g_
            if order >= 2:
                H[i] = h_
        return R, G, H

    profile = kernel.radial_profile()
    tree = get_tree(mu, config.order)
    p = tree.order
    gate = _gate_coef(q, p)
    target = config.target_rel_error

    if profile is not None and isinstance(profile, ConstantProfile):
        hc = _power_h_coefs(q, p + 2)
        return _eval_const_kernel(
            tree.centers,
            tree.radii,
            tree.masses,
            tree.child_ptr,
            tree.child_cnt,
            tree.atom_ptr,
            tree.atom_cnt,
            tree.moments,
            tree.t_k,
            tree.t_coef,
            tree.t_beta,
            tree.t_col,
            hc,
            tree.atoms,
            tree.weights,
            X,
            float(q),
            float(profile.c),
            float(config.theta),
            float(gate),
            float(target),
            int(order),
        )

    if profile is None or profile.max_log_order < p + order:
        # no radial far-field available: exact summation
        R = np.empty(nq)
        G = np.empty((nq, n))
        H = np.empty((nq, n, n))
        for i, x in enumerate(X):
            r_, g_, h_ = _brute_point(kernel, mu, q, x, order)
            R[i] = r_
            if order >= 1:
                G[i] = g_
            if order >= 2:
                H[i] = h_
        return R, G, H

    # two-pass path for general radial kernels
    R = np.zeros(nq)
    G = np.zeros((nq, n))
    H = np.zeros((nq, n, n))
    cap = 1 << 16
    far_buf = np.empty(cap, dtype=np.int64)
    near_buf = np.empty(cap, dtype=np.int64)
    exp_p1 = 0.5 * (p + 1.0)
    far_qi, far_node, near_qi, near_node = [], [], [], []
    for i, x in enumerate(X):
        while True:
            nf, nn_ = _collect_interactions(
                tree.centers,
                tree.radii,
                tree.child_ptr,
                tree.child_cnt,
                x,
                float(config.theta),
                float(gate),
                float(target),
                exp_p1,
                far_buf,
                near_buf,
            )
            if nf >= 0:
                break
            cap *= 4
            far_buf = np.empty(cap, dtype=np.int64)
            near_buf = np.empty(cap, dtype=np.int64)
        far_qi.append(np.full(nf, i, dtype=np.int64))
        far_node.append(far_buf[:nf].copy())
        near_qi.append(np.full(nn_, i, dtype=np.int64))
        near_node.append(near_buf[:nn_].copy())
    far_qi = np.concatenate(far_qi)
    far_node = np.concatenate(far_node)
    near_qi = np.concatenate(near_qi)
    near_node = np.concatenate(near_node)

    if len(far_qi):
        _radial_far_eval(tree, profile, q, X, far_qi, far_node, order, (R, G, H))

    if len(near_qi):
        from .engine import _summand_arrays

        lengths = tree.atom_cnt[near_node]
        seg_starts = np.repeat(tree.atom_ptr[near_node], lengths)
        within = np.arange(int(np.sum(lengths))) - np.repeat(
            np.cumsum(lengths) - lengths, lengths
        )
        flat_atom = seg_starts + within
        flat_qi = np.repeat(near_qi, lengths)
        Z = X[flat_qi] - tree.atoms[flat_atom]
        w = tree.weights[flat_atom]
        val, grad, hess = _summand_arrays(kernel, Z, q, order)
        R += np.bincount(flat_qi, weights=w * val, minlength=nq)
        if order >= 1:
            for i in range(n):
                G[:, i] += np.bincount(flat_qi, weights=w * grad[:, i], minlength=nq)
        if order >= 2:
            for i in range(n):
                for j in range(n):
                    H[:, i, j] += np.bincount(
                        flat_qi, weights=w * hess[:, i, j], minlength=nq
                    )
    return R, G, H
