"""Discrete approximations of d-Ahlfors-regular measures.

A DiscreteMeasure is a weighted point cloud with optional extras: an
analytic distance function for model sets (planes, spheres, graphs), a
tail descriptor for truncated unbounded sets, and a nearest-neighbor
index.  Generators cover the test zoo: planes, circles/spheres,
sinusoidal Lipschitz graphs, the four-corner Cantor set, and point-cloud
files.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import BadSpec, EmptyCone, ScaleOutOfRange


@dataclass
class Tail:
    """Closed-form continuation of a truncated unbounded set.

    ``extent`` is the in-plane truncation radius; beyond it the set is
    modeled as the flat continuation of ``frame`` (a PlaneFrame).  For
    graphs this is an approximation, flagged by ``exact=False``.
    """

    extent: float
    frame: "PlaneFrame"
    exact: bool = True


@dataclass
class PlaneFrame:
    """Affine d-plane: point + orthonormal tangent and normal bases."""

    point: np.ndarray  # (n,)
    tangent: np.ndarray  # (d, n)
    normal: np.ndarray  # (n-d, n)

    @property
    def n(self):
        return self.point.shape[0]

    @property
    def d(self):
        return self.tangent.shape[0]

    def dist(self, X):
        rel = np.atleast_2d(X) - self.point
        return np.linalg.norm(rel @ self.normal.T, axis=1)

    def normal_component(self, X):
        rel = np.atleast_2d(X) - self.point
        return rel @ self.normal.T  # (m, n-d)

    def project(self, X):
        rel = np.atleast_2d(X) - self.point
        return self.point + (rel @ self.tangent.T) @ self.tangent


class DiscreteMeasure:
    """Weighted atoms approximating a d-AR measure."""

    def __init__(
        self,
        atoms,
        weights,
        d,
        spacing,
        exact_distance=None,
        tail=None,
        generator=None,
    ):
        self.atoms = np.ascontiguousarray(atoms, dtype=float)
        self.weights = np.ascontiguousarray(weights, dtype=float)
        if self.atoms.ndim != 2 or len(self.weights) != len(self.atoms):
            raise BadSpec("atoms must be (N, n) with matching weights")
        if np.any(self.weights <= 0):
            raise BadSpec("weights must be positive")
        self.n = self.atoms.shape[1]
        self.d = float(d)
        self.spacing = float(spacing)
        self.exact_distance = exact_distance
        self.tail = tail
        self.generator = generator or {}
        self._tree = None
        self._summation_tree = None  # engine attaches its structure here

    @property
    def total_mass(self):
        return float(np.sum(self.weights))

    @property
    def size(self):
        return len(self.weights)

    def kdtree(self):
        if self._tree is None:
            self._tree = cKDTree(self.atoms)
        return self._tree

    def nearest_atom_distance(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        dist, _ = self.kdtree().query(X)
        return dist

    def support_point(self, x):
        """Nearest atom to x (a canonical on-support point)."""
        _, idx = self.kdtree().query(np.asarray(x, dtype=float))
        return self.atoms[int(idx)]

    def valid_scale_range(self):
        lo = 2.0 * self.spacing
        if self.tail is not None:
            hi = self.tail.extent / 4.0
        else:
            span = np.max(self.atoms, axis=0) - np.min(self.atoms, axis=0)
            hi = float(np.max(span))
        return lo, hi


def dist_to_support(mu, x):
    """delta_E(x): analytic distance when the generator provides one,
    nearest-atom distance otherwise."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if mu.exact_distance is not None:
        out = np.asarray(mu.exact_distance(X2), dtype=float)
    else:
        out = mu.nearest_atom_distance(X2)
    return float(out[0]) if single else out


def rescale_measure(mu, Q, r):
    """Zoom: atoms -> (atoms - Q)/r, weights / r^d, so mass is AR-invariant."""
    if r <= 0:
        raise BadSpec("rescale factor must be positive")
    Q = np.asarray(Q, dtype=float)
    atoms = (mu.atoms - Q) / r
    weights = mu.weights / r**mu.d
    exact = None
    if mu.exact_distance is not None:
        base = mu.exact_distance
        exact = lambda X: np.asarray(base(np.atleast_2d(X) * r + Q)) / r
    tail = None
    if mu.tail is not None:
        f = mu.tail.frame
        frame = PlaneFrame((f.point - Q) / r, f.tangent, f.normal)
        tail = Tail(mu.tail.extent / r, frame, mu.tail.exact)
    return DiscreteMeasure(
        atoms,
        weights,
        mu.d,
        mu.spacing / r,
        exact_distance=exact,
        tail=tail,
        generator={"rescaled_from": mu.generator, "Q": Q.tolist(), "r": r},
    )


# ---------------------------------------------------------------------------
# generators


def plane(n=2, d=1, half_extent=1.0, spacing=0.01, through=None):
    """Truncated d-plane in R^n with a flat tail model.

    d = 1: segment along e1; d = 2 (n = 3): disk grid in the e1-e2 plane.
    Atom weights equal the cell H^d measure (spacing^d).
    """
    if spacing <= 0 or half_extent <= 0:
        raise BadSpec("spacing and half_extent must be positive")
    if d == 1:
        m = int(round(half_extent / spacing))
        s = np.arange(-m, m + 1) * spacing
        atoms = np.zeros((len(s), n))
        atoms[:, 0] = s
        weights = np.full(len(s), spacing)
        covered = m * spacing + spacing / 2.0  # cells reach half a cell past the last atom
    elif d == 2 and n == 3:
        m = int(math.floor(half_extent / spacing))
        g = np.arange(-m, m + 1) * spacing
        gx, gy = np.meshgrid(g, g, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        keep = np.linalg.norm(pts, axis=1) <= half_extent
        pts = pts[keep]
        atoms = np.zeros((len(pts), 3))
        atoms[:, :2] = pts
        weights = np.full(len(pts), spacing**2)
        # match the tail boundary to the actual covered area
        covered = math.sqrt(len(pts) * spacing**2 / math.pi)
    else:
        raise BadSpec(f"plane generator supports d=1 (any n) or d=2 in R^3, got d={d}, n={n}")
    point = np.zeros(n) if through is None else np.asarray(through, dtype=float)
    atoms = atoms + point
    tangent = np.eye(n)[:d]
    normal = np.eye(n)[d:]
    frame = PlaneFrame(point, tangent, normal)
    exact = lambda X: frame.dist(X)
    return DiscreteMeasure(
        atoms,
        weights,
        d,
        spacing,
        exact_distance=exact,
        tail=Tail(covered, frame, exact=True),
        generator={"type": "plane", "n": n, "d": d, "half_extent": half_extent, "spacing": spacing},
    )


def circle(radius=1.0, count=360):
    if radius <= 0 or count < 8:
        raise BadSpec("need radius > 0 and at least 8 nodes")
    ang = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    atoms = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    weights = np.full(count, 2.0 * np.pi * radius / count)
    exact = lambda X: np.abs(np.linalg.norm(np.atleast_2d(X), axis=1) - radius)
    return DiscreteMeasure(
        atoms,
        weights,
        1,
        2.0 * np.pi * radius / count,
        exact_distance=exact,
        generator={"type": "circle", "radius": radius, "count": count},
    )


def sphere(radius=1.0, count=4096):
    from .kernels import fibonacci_sphere

    if radius <= 0 or count < 64:
        raise BadSpec("need radius > 0 and at least 64 nodes")
    atoms = radius * fibonacci_sphere(count)
    weights = np.full(count, 4.0 * np.pi * radius**2 / count)
    exact = lambda X: np.abs(np.linalg.norm(np.atleast_2d(X), axis=1) - radius)
    spacing = radius * np.sqrt(4.0 * np.pi / count)
    return DiscreteMeasure(
        atoms,
        weights,
        2,
        spacing,
        exact_distance=exact,
        generator={"type": "sphere", "radius": radius, "count": count},
    )


def lipschitz_graph(amplitude=0.3, frequency=1.0, half_extent=10.0, spacing=0.01):
    """Curve y = A sin(w x) in R^2 with arclength weights and a flat tail model."""
    if spacing <= 0:
        raise BadSpec("spacing must be positive")
    m = int(round(half_extent / spacing))
    s = np.arange(-m, m + 1) * spacing
    y = amplitude * np.sin(frequency * s)
    atoms = np.stack([s, y], axis=1)
    slope = amplitude * frequency * np.cos(frequency * s)
    weights = spacing * np.sqrt(1.0 + slope**2)
    lip = abs(amplitude * frequency)

    def exact(X):
        X2 = np.atleast_2d(np.asarray(X, dtype=float))
        return _graph_distance(X2, amplitude, frequency)

    frame = PlaneFrame(np.zeros(2), np.eye(2)[:1], np.eye(2)[1:])
    return DiscreteMeasure(
        atoms,
        weights,
        1,
        spacing * np.sqrt(1 + lip**2),
        exact_distance=exact,
        tail=Tail(m * spacing + spacing / 2.0, frame, exact=False),
        generator={
            "type": "graph",
            "amplitude": amplitude,
            "frequency": frequency,
            "half_extent": half_extent,
            "spacing": spacing,
            "lipschitz_bound": lip,
        },
    )


def _graph_distance(X, A, w):
    """Distance to {(t, A sin(wt))} by coarse scan + Newton refinement."""
    out = np.empty(len(X))
    for row, (px, py) in enumerate(X):
        span = 2.0 + abs(A)
        t = np.linspace(px - span, px + span, 257)
        d2 = (t - px) ** 2 + (A * np.sin(w * t) - py) ** 2
        t0 = t[int(np.argmin(d2))]
        for _ in range(30):
            st, ct = np.sin(w * t0), np.cos(w * t0)
            g = 2 * (t0 - px) + 2 * (A * st - py) * A * w * ct
            h = 2 + 2 * (A * w * ct) ** 2 - 2 * (A * st - py) * A * w * w * st
            if h <= 0:
                break
            step = g / h
            t0 -= step
            if abs(step) < 1e-14:
                break
        out[row] = math.hypot(t0 - px, A * math.sin(w * t0) - py)
    return out


def four_corner_cantor(generation):
    """4^g atoms at the centers of the generation-g squares (side 4^-g),
    each with weight 4^-g; total mass 1."""
    g = int(generation)
    if g < 0 or g > 12:
        raise BadSpec("generation must be in 0..12")
    corners = np.zeros((1, 2))
    side = 1.0
    for _ in range(g):
        side /= 4.0
        offs = np.array(
            [[0.0, 0.0], [3.0 * side, 0.0], [0.0, 3.0 * side], [3.0 * side, 3.0 * side]]
        )
        corners = (corners[:, None, :] + offs[None, :, :]).reshape(-1, 2)
    atoms = corners + side / 2.0
    weights = np.full(len(atoms), 4.0 ** (-g))
    return DiscreteMeasure(
        atoms,
        weights,
        1,
        side,
        generator={"type": "cantor", "generation": g, "side": side},
    )


def point_cloud_from_file(path, d):
    """One atom per line: x1 ... xn weight; '#' comments."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            rows.append([float(tok) for tok in line.split()])
    if not rows:
        raise BadSpec(f"no atoms in {path}")
    arr = np.asarray(rows, dtype=float)
    if arr.shape[1] < 3:
        raise BadSpec("need at least 2 coordinates and a weight per line")
    atoms, weights = arr[:, :-1], arr[:, -1]
    tree = cKDTree(atoms)
    dist, _ = tree.query(atoms, k=2)
    spacing = float(np.median(dist[:, 1]))
    return DiscreteMeasure(
        atoms, weights, d, spacing, generator={"type": "cloud", "path": str(path)}
    )


def generate(spec):
    """Uniform entry point from a {'type': ..., ...} mapping."""
    spec = dict(spec)
    kind = spec.pop("type", None)
    makers = {
        "plane": plane,
        "circle": circle,
        "sphere": sphere,
        "graph": lipschitz_graph,
        "cantor": four_corner_cantor,
        "cloud": point_cloud_from_file,
    }
    if kind not in makers:
        raise BadSpec(f"unknown measure type {kind!r}")
    return makers[kind](**spec)


# ---------------------------------------------------------------------------
# diagnostics on the measure itself


@dataclass
class ARDiagnostics:
    entries: list  # (Q, R, ratio)
    c_min: float
    c_max: float
    valid_scale_range: tuple


def ahlfors_check(mu, samples):
    """Ratios mu(B(Q, R)) / R^d at the given (Q, R) pairs."""
    lo, hi = mu.valid_scale_range()
    entries = []
    tree = mu.kdtree()
    for Q, R in samples:
        if not (lo <= R <= hi):
            raise ScaleOutOfRange(f"R = {R} outside trusted range [{lo}, {hi}]")
        idx = tree.query_ball_point(np.asarray(Q, dtype=float), R)
        mass = float(np.sum(mu.weights[idx]))
        entries.append((np.asarray(Q, dtype=float), float(R), mass / R**mu.d))
    ratios = [e[2] for e in entries]
    return ARDiagnostics(entries, min(ratios), max(ratios), (lo, hi))


@dataclass
class WhitneyCube:
    center: np.ndarray
    side: float
    generation: int
    dist: float

    @property
    def diam(self):
        return self.side * math.sqrt(len(self.center))


def _cube_distance(mu, center, side):
    """Exact distance from the cube to the atom set (point-to-box)."""
    half = side / 2.0
    tree = mu.kdtree()
    d_center, _ = tree.query(center)
    # any atom within d_center + diam could realize the box distance
    reach = d_center + side * math.sqrt(len(center))
    idx = tree.query_ball_point(center, reach)
    if not idx:
        return float(d_center)
    pts = mu.atoms[idx]
    gaps = np.maximum(np.abs(pts - center) - half, 0.0)
    return float(np.min(np.linalg.norm(gaps, axis=1)))


def whitney_decompose(mu, Q, r, max_generation=None):
    """Dyadic Whitney cubes covering B(Q, r) away from the support.

    Cubes are dyadic in absolute side 2^-j, anchored at Q; each emitted
    cube satisfies side <= dist(cube, E) (and <= 4 diam for non-root
    cubes).  Recursion stops at ``max_generation`` (default: side >=
    atom spacing), with a truncation flag.
    """
    Q = np.asarray(Q, dtype=float)
    n = mu.n
    if max_generation is None:
        max_generation = max(0, int(math.ceil(-math.log2(max(mu.spacing, 1e-300)))))
    # root: smallest dyadic cube centered at Q containing B(Q, r)
    j0 = int(math.floor(-math.log2(2.0 * r)))
    root_side = 2.0 ** (-j0)
    out = []
    truncated = [False]

    def recurse(center, side, gen):
        # prune cubes that miss the ball
        corner_gap = np.maximum(np.abs(center - Q) - side / 2.0, 0.0)
        if np.linalg.norm(corner_gap) > r:
            return
        dist = _cube_distance(mu, center, side)
        if dist >= side:
            out.append(WhitneyCube(center.copy(), side, gen, dist))
            return
        if gen >= max_generation:
            truncated[0] = True
            return
        half = side / 2.0
        for mask in range(2**n):
            off = np.array([(1 if mask >> k & 1 else -1) for k in range(n)]) * half / 2.0
            recurse(center + off, half, gen + 1)

    recurse(Q.copy(), root_side, j0)
    return out, {"truncated": truncated[0], "max_generation": max_generation, "count": len(out)}


def nt_cone(mu, Q, R, eta, count=32, strata=4, seed=0, guard=None):
    """Sample points of the aperture-eta cone at Q up to radius R.

    Rejection sampling stratified over dyadic shells |x - Q| in
    (R 2^-j-1, R 2^-j]; points must clear the guard band (2 x spacing by
    default).  Returns (points, flags) where flags marks empty strata;
    raises EmptyCone if every stratum is empty.
    """
    if not 0.0 < eta < 1.0:
        raise BadSpec("eta must be in (0, 1)")
    Q = np.asarray(Q, dtype=float)
    rng = np.random.default_rng(seed)
    guard = 2.0 * mu.spacing if guard is None else guard
    per = max(1, count // strata)
    pts, empty = [], []
    for j in range(strata):
        r_hi = R * 2.0 ** (-j)
        r_lo = r_hi / 2.0
        got = []
        for _ in range(400 * per):
            v = rng.normal(size=mu.n)
            v /= np.linalg.norm(v)
            rad = rng.uniform(r_lo, r_hi)
            x = Q + rad * v
            dd = dist_to_support(mu, x)
            if dd >= max(eta * rad, guard):
                got.append(x)
                if len(got) >= per:
                    break
        if got:
            pts.extend(got)
        empty.append(len(got) == 0)
    if not pts:
        raise EmptyCone(f"no cone samples at Q={Q}, eta={eta}, R={R}")
    return np.asarray(pts), {"empty_strata": empty}
