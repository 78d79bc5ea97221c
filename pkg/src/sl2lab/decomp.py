"""Prisms around a line, ball conditions, and ball-type decompositions.

Point sets are (n, d) float arrays. Ball conditions are evaluated on balls
centred at data points with dyadic radii; the resulting sup is within a
constant factor of the sup over all balls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist

from .errors import NotSeparated, PreconditionViolation
from .sl2_core import (DEFAULT_R, SL2Line, check_strip_scales, clip_to_ball,
                       distance_to_line, line_distance, plane_normal)
from .twist import coeff_points, twisted_project

# -- prisms ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Prism:
    """Parallelepiped center + sum of lambda_k * dims_k * axes[k], lambda in [-1/2, 1/2]^3."""

    center: np.ndarray
    axes: np.ndarray  # rows v1, v2, v3 (unit)
    dims: tuple  # (delta / t, t, delta)

    @property
    def edges(self) -> np.ndarray:
        return self.axes * np.asarray(self.dims)[:, None]

    def vertices(self) -> np.ndarray:
        signs = np.array([[i, j, k] for i in (-0.5, 0.5) for j in (-0.5, 0.5) for k in (-0.5, 0.5)])
        return self.center + signs @ self.edges

    def local_coords(self, q) -> np.ndarray:
        """Coefficients lambda with q = center + lambda @ edges."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        return np.linalg.solve(self.edges.T, (q - self.center).T).T

    def contains(self, q, tol: float = 1e-12) -> np.ndarray:
        return np.all(np.abs(self.local_coords(q)) <= 0.5 + tol, axis=1)

    def sample(self, n: int, rng) -> np.ndarray:
        lam = rng.uniform(-0.5, 0.5, size=(n, 3))
        return self.center + lam @ self.edges

    def frame_angles(self, line: SL2Line) -> dict:
        """Deviations of the axes from the defining constraints (radians)."""
        c = self.center
        n = plane_normal(c)
        n = n / np.linalg.norm(n)
        h = np.array([c[0], c[1], 0.0])
        h = h / np.linalg.norm(h)
        v1, v2, v3 = self.axes
        return {
            "v1_dot_normal": abs(float(v1 @ n)),
            "v2_vs_horizontal": _angle(v2, h),
            "v3_vs_normal": _angle(v3, n),
            "v1_vs_line": _angle(v1, line.unit_direction),
        }


def _angle(a: np.ndarray, b: np.ndarray) -> float:
    """Unsigned angle between the lines spanned by a and b, accurate near 0."""
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), abs(float(a @ b)))


def prism_frame(line: SL2Line, center) -> np.ndarray:
    """Axes (v1, v2, v3) of the prism centred at ``center``; vectorised.

    v3 is the plane normal at the centre, v2 the horizontal direction of the
    centre, and v1 the direction of the line projected into the plane
    orthogonal to v3. Returns shape (..., 3, 3) with rows v1, v2, v3.
    """
    c = np.asarray(center, dtype=float)
    v3 = plane_normal(c)
    v3 = v3 / np.linalg.norm(v3, axis=-1, keepdims=True)
    v2 = np.stack([c[..., 0], c[..., 1], np.zeros_like(c[..., 0])], axis=-1)
    v2 = v2 / np.linalg.norm(v2, axis=-1, keepdims=True)
    u = line.unit_direction
    v1 = u - np.sum(u * v3, axis=-1, keepdims=True) * v3
    v1 = v1 / np.linalg.norm(v1, axis=-1, keepdims=True)
    return np.stack([v1, v2, v3], axis=-2)


@dataclass(frozen=True)
class PrismSteps:
    """Centre spacing as fractions of the prism dimensions.

    ``along`` and ``thick`` scale the steps δ/t (arc length along ℓ) and δ
    (across layers); ``rim`` is the allowed excess of the covered radius over
    t, in units of δ. The defaults leave room for the twist of the plane field
    across one prism, which shifts neighbouring slabs by up to about δ/2.
    """

    along: float = 0.6
    thick: float = 0.6
    rim: float = 0.2


_SIGNS = np.array([[i, j, k] for i in (-0.5, 0.5) for j in (-0.5, 0.5) for k in (-0.5, 0.5)])


def _core_frame(line: SL2Line, z: np.ndarray):
    p = line.point_at(z)
    e2 = np.stack([p[:, 0], p[:, 1], np.zeros_like(z)], axis=1)
    e2 /= np.linalg.norm(e2, axis=1, keepdims=True)
    e3 = plane_normal(p)
    e3 /= np.linalg.norm(e3, axis=1, keepdims=True)
    return p, e2, e3


def _layer_centres(line: SL2Line, p: np.ndarray, e3: np.ndarray, w: float, dw: float,
                   reach: float, t: float) -> np.ndarray:
    """Centres of one layer {ℓ(z) + w e3(z) + s v(z)} for every lattice height z.

    v is the horizontal direction at ℓ(z) + w e3(z), i.e. the v2 axis the
    prisms of this layer will carry, so the layer is a straight row of
    prisms. Along v the layer must span the chord of the disk of radius
    ``reach`` around ℓ at the inner edge |w| - dw/2 of the layer; that chord
    is split into ceil(chord / t) evenly spaced prisms.
    """
    u = line.unit_direction
    base = p + w * e3
    v = np.stack([base[:, 0], base[:, 1], np.zeros(len(base))], axis=1)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pv = v - np.outer(v @ u, u)
    A = np.sum(pv * pv, axis=1)
    inner = max(abs(w) - dw / 2, 0.0)
    half = np.sqrt(max(reach**2 - inner**2, 0.0) / A)
    mid = -w * np.sum(e3 * pv, axis=1) / A
    n = np.maximum(np.ceil(2 * half / t), 1).astype(int)
    k = np.arange(n.max())
    lo = np.where(n > 1, mid - half + t / 2, mid)
    step = np.where(n > 1, (2 * half - t) / np.maximum(n - 1, 1), 0.0)
    S = lo[:, None] + step[:, None] * k[None, :]
    mask = k[None, :] < n[:, None]
    zi = np.broadcast_to(np.arange(len(p))[:, None], S.shape)[mask]
    return base[zi] + S[mask][:, None] * v[zi]


def prism_decomposition(line: SL2Line, t: float, delta: float, R: float = DEFAULT_R,
                        steps: PrismSteps = PrismSteps()) -> list[Prism]:
    """Cover N_t(line) ∩ B(0, R) by prisms of dimensions δ/t x t x δ.

    ℓ is walked in steps of steps.along·δ/t of arc length. At each core point
    ℓ(z) the cross-section is cut into layers w e3(z), e3 the unit plane
    normal, spaced steps.thick·δ apart, and each layer is tiled by t-wide
    prisms along its own horizontal direction (see ``_layer_centres``). The
    covered width is stretched by 1/sin of the angle between ℓ and the
    horizontal, which matters for nearly horizontal lines. A prism is kept
    when all eight vertices lie in N_{2t}(ℓ), which gives containment by
    convexity of the distance to a line.
    """
    check_strip_scales(delta, t)
    span = clip_to_ball(line, R + t)
    if span is None:
        return []
    dims = np.array([delta / t, t, delta])
    speed = float(np.linalg.norm(line.direction))
    dz = steps.along * dims[0] / speed
    z0, z1 = span[0] - dz, span[1] + dz
    zs = np.arange(math.floor(z0 / dz), math.ceil(z1 / dz) + 1) * dz
    p, _, e3 = _core_frame(line, zs)
    dw = steps.thick * delta
    reach = t + steps.rim * delta
    nw = math.ceil(reach / dw - 0.5)
    centers = np.concatenate([_layer_centres(line, p, e3, w, dw, reach, t)
                              for w in np.arange(-nw, nw + 1) * dw])
    axes = prism_frame(line, centers)
    edges = axes * dims[None, :, None]
    verts = centers[:, None, :] + np.einsum("vk,nkj->nvj", _SIGNS, edges)
    far = distance_to_line(line, verts.reshape(-1, 3)).reshape(len(centers), 8).max(1)
    keep = np.flatnonzero(far <= 2 * t)
    dims_t = tuple(float(x) for x in dims)
    return [Prism(centers[k], axes[k], dims_t) for k in keep]


def sample_tube(line: SL2Line, t: float, n: int, rng, R: float = DEFAULT_R) -> np.ndarray:
    """Uniform samples of N_t(line) ∩ B(0, R) by rejection."""
    span = clip_to_ball(line, R + t)
    if span is None:
        return np.zeros((0, 3))
    u = line.unit_direction
    basis = np.linalg.svd(u[None, :])[2][1:]
    speed = float(np.linalg.norm(line.direction))
    smin, smax = span[0] * speed, span[1] * speed
    pts = []
    total = 0
    while total < n:
        m = 2 * (n - total) + 16
        s = rng.uniform(smin, smax, m)
        rad = t * np.sqrt(rng.uniform(0, 1, m))
        ang = rng.uniform(0, 2 * np.pi, m)
        q = (line.base + np.outer(s, u) + np.outer(rad * np.cos(ang), basis[0])
             + np.outer(rad * np.sin(ang), basis[1]))
        q = q[np.linalg.norm(q, axis=1) <= R]
        pts.append(q)
        total += len(q)
    return np.concatenate(pts)[:n]


class PrismAudit(NamedTuple):
    misses: int
    max_multiplicity: int
    multiplicity_hist: dict
    contained: bool
    max_vertex_distance: float
    count: int
    nominal_count: float


def prism_multiplicity(prisms: Sequence[Prism], pts: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Number of prisms containing each point."""
    if not prisms:
        return np.zeros(len(pts), dtype=np.int64)
    centers = np.array([P.center for P in prisms])
    inv = np.linalg.inv(np.array([P.edges.T for P in prisms]))
    # the axes are not orthogonal, so the circumradius comes from the vertices
    edges = np.array([P.edges for P in prisms])
    corner = np.einsum("vk,nkj->nvj", _SIGNS, edges)
    radius = float(np.linalg.norm(corner, axis=-1).max()) * (1 + 1e-9)
    tree = cKDTree(centers)
    mult = np.zeros(len(pts), dtype=np.int64)
    for lo in range(0, len(pts), chunk):
        block = pts[lo:lo + chunk]
        hits = tree.query_ball_point(block, radius)
        rows = np.repeat(np.arange(len(block)), [len(h) for h in hits])
        cols = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits]) if len(rows) else \
            np.zeros(0, dtype=np.int64)
        lam = np.einsum("nij,nj->ni", inv[cols], block[rows] - centers[cols])
        inside = np.all(np.abs(lam) <= 0.5 + 1e-12, axis=1)
        np.add.at(mult, lo + rows[inside], 1)
    return mult


def audit_prisms(line: SL2Line, prisms: Sequence[Prism], t: float, delta: float,
                 n_samples: int = 100_000, rng=None, R: float = DEFAULT_R) -> PrismAudit:
    """Cover, multiplicity and containment of a prism decomposition."""
    rng = np.random.default_rng(rng)
    pts = sample_tube(line, t, n_samples, rng, R)
    mult = prism_multiplicity(prisms, pts)
    vals, counts = np.unique(mult, return_counts=True)
    verts = np.concatenate([P.vertices() for P in prisms]) if prisms else np.zeros((0, 3))
    vmax = float(np.max(distance_to_line(line, verts))) if len(verts) else 0.0
    nominal = segment_length_in(line, R) * t * t / delta**2
    return PrismAudit(int(np.sum(mult == 0)), int(mult.max()) if len(mult) else 0,
                      {int(v): int(c) for v, c in zip(vals, counts)}, vmax <= 2 * t, vmax,
                      len(prisms), nominal)


def segment_length_in(line: SL2Line, R: float) -> float:
    span = clip_to_ball(line, R)
    return 0.0 if span is None else (span[1] - span[0]) * float(np.linalg.norm(line.direction))


class PrismImage(NamedTuple):
    width: float
    height: float
    distortion: float
    long_side: float
    short_side: float
    axis_distortion: float
    tilt: float
    max_abs_height: float


def _side_distortion(long_side: float, short_side: float, delta: float, t: float) -> float:
    rw = long_side / (delta / t)
    rh = short_side / delta
    return max(rw, 1 / rw, rh, 1 / rh)


def prism_image_stats(line: SL2Line, P: Prism, delta: float, t: float, n: int = 1000,
                      rng=None) -> PrismImage:
    """Size of the twisted projection of P against a δ/t x δ rectangle.

    ``width`` and ``height`` are the sides of the axis-aligned bounding box of
    the image and ``axis_distortion`` compares them with δ/t and δ. The image
    is a thin quadrilateral whose long side is tilted by a small angle
    (``tilt``, radians), so ``distortion`` compares the sides of the box
    aligned with the principal axis of the image instead; either way the
    value is the largest factor by which a side differs, up or down, from
    its nominal length. ``max_abs_height`` is the largest distance of an
    image point from the x-axis.
    """
    rng = np.random.default_rng(rng)
    pts = np.concatenate([P.sample(n, rng), P.vertices()])
    img = twisted_project(line, pts)
    width = float(np.ptp(img[:, 0]))
    height = float(np.ptp(img[:, 1]))
    centred = img - img.mean(0)
    major = np.linalg.svd(centred, full_matrices=False)[2][0]
    if major[0] < 0:
        major = -major
    minor = np.array([-major[1], major[0]])
    long_side = float(np.ptp(centred @ major))
    short_side = float(np.ptp(centred @ minor))
    return PrismImage(width, height, _side_distortion(long_side, short_side, delta, t),
                      long_side, short_side, _side_distortion(width, height, delta, t),
                      float(math.atan2(major[1], major[0])), float(np.max(np.abs(img[:, 1]))))


# -- ball conditions ------------------------------------------------------------------


class BallWorst(NamedTuple):
    center: int
    r: float
    count: int
    bound: float
    ratio: float


class BallCheck(NamedTuple):
    ok: bool
    worst: BallWorst | None


def _dyadic_up_to(delta: float, top: float) -> np.ndarray:
    k = max(0, math.ceil(math.log2(max(top, delta) / delta) - 1e-12))
    return delta * 2.0 ** np.arange(k + 1)


def _as_points(items) -> np.ndarray:
    if len(items) == 0:
        return np.zeros((0, 1))
    first = items[0]
    if hasattr(first, "params"):
        return np.array([x.params for x in items], dtype=float)
    return np.atleast_2d(np.asarray(items, dtype=float))


def _worst_ratio(pts: np.ndarray, delta: float, power: float, scale: float,
                 top: float) -> BallWorst | None:
    n = len(pts)
    if n == 0:
        return None
    tree = cKDTree(pts)
    best = None
    for r in _dyadic_up_to(delta, top):
        bound = scale * (r / delta) ** power
        if n <= bound * (best.ratio if best else 0.0):
            break  # counts cannot beat the current worst any more
        counts = tree.query_ball_point(pts, r * (1 + 1e-12), return_length=True)
        j = int(np.argmax(counts))
        ratio = float(counts[j]) / bound
        if best is None or ratio > best.ratio:
            best = BallWorst(j, float(r), int(counts[j]), float(bound), ratio)
    return best


def _diameter(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    lo, hi = pts.min(0), pts.max(0)
    return float(np.linalg.norm(hi - lo))


def check_ball_condition_2d(L, delta: float, slack: float = 1.0) -> BallCheck:
    """#(L ∩ B(x, r)) <= slack (r/δ)^2 over data-centred balls, r = δ 2^k up to >= 1."""
    pts = _as_points(L)
    worst = _worst_ratio(pts, delta, 2.0, 1.0, max(1.0, _diameter(pts)))
    return BallCheck(worst is None or worst.ratio <= slack * (1 + 1e-12), worst)


def check_ball_condition_1d(F, delta: float, K: float, slack: float = 1.0) -> BallCheck:
    """#(F ∩ B(x, r)) <= slack K (r/δ) over data-centred balls, r = δ 2^k."""
    pts = _as_points(F)
    worst = _worst_ratio(pts, delta, 1.0, K, _diameter(pts))
    return BallCheck(worst is None or worst.ratio <= slack * (1 + 1e-12), worst)


# -- greedy one-dimensional decomposition -------------------------------------------


@dataclass(frozen=True, eq=False)
class BallDecomposition:
    """Partition of X into a kept part and clusters, all as index arrays into X."""

    X: np.ndarray
    delta: float
    K: float
    kept: np.ndarray
    clusters: list
    centers: list
    radii: list
    subsamples: list
    subsample_fallback: list = field(default_factory=list)

    @property
    def Y(self) -> np.ndarray:
        return self.X[self.kept]

    def cluster_points(self, i: int) -> np.ndarray:
        return self.X[self.clusters[i]]

    def subsample_points(self, i: int) -> np.ndarray:
        return self.X[self.subsamples[i]]

    @property
    def kept_fraction(self) -> float:
        return len(self.kept) / len(self.X) if len(self.X) else 1.0

    def radius_constant(self) -> float | None:
        """min r_i / (δ K^{1/d}) over clusters."""
        if not self.radii:
            return None
        d = self.X.shape[1]
        return min(r / (self.delta * self.K ** (1.0 / d)) for r in self.radii)

    def worst_ratios(self) -> dict:
        kept = check_ball_condition_1d(self.Y, self.delta, 1.0).worst
        subs = [check_ball_condition_1d(self.subsample_points(i), self.delta, 1.0).worst
                for i in range(len(self.clusters))]
        return {"kept": kept.ratio if kept else 0.0,
                "subsamples": [w.ratio if w else 0.0 for w in subs]}

    def report(self) -> dict:
        return {
            "K": self.K,
            "kept_fraction": self.kept_fraction,
            "clusters": [{"r_i": float(r), "size": int(len(z)), "subsample_size": int(len(s))}
                         for r, z, s in zip(self.radii, self.clusters, self.subsamples)],
            "worst_ratios": self.worst_ratios(),
        }


def check_separated(X: np.ndarray, delta: float) -> None:
    if len(X) < 2:
        return
    pairs = cKDTree(X).query_pairs(delta * (1 - 1e-9), output_type="ndarray")
    if len(pairs):
        i, j = pairs[0]
        raise NotSeparated(f"points {i} and {j} are {np.linalg.norm(X[i] - X[j]):.3g} apart, "
                           f"below delta={delta}")


def greedy_one_dim_decomposition(X, delta: float, K: float, rng=None,
                                 require_separated: bool = True) -> BallDecomposition:
    """Peel off near-worst balls until the rest obeys the linear ball condition.

    Each round computes S, the sup of #(B ∩ Y) / (r/δ) over data-centred
    dyadic balls. If S <= K the loop stops. Otherwise it takes the smallest
    dyadic radius at which some ball reaches S/2 (so no ball of half that
    radius does), uses the fullest such ball as the next cluster, and removes
    it from Y. Cluster subsamples keep each point with probability
    r_i / (δ #Z_i); draws outside [r_i/(4δ), 4 r_i/δ] are retried up to 16
    times before a deterministic fallback takes a prefix of a seeded
    permutation.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if K < 1:
        raise ValueError("K must be >= 1")
    n = len(X)
    rng = np.random.default_rng(rng)
    if require_separated:
        check_separated(X, delta)
    empty = np.zeros(0, dtype=np.int64)
    if n == 0:
        return BallDecomposition(X, delta, K, empty, [], [], [], [])
    D = cdist(X, X)
    radii = _dyadic_up_to(delta, max(_diameter(X), delta))
    nb = len(radii)
    # bin b holds pairs with radii[b-1] < D <= radii[b]; bin 0 is D <= δ
    bins = np.searchsorted(radii * (1 + 1e-12), D, side="left")
    bins = np.minimum(bins, nb - 1)
    H = np.zeros((n, nb), dtype=np.int64)
    np.add.at(H, (np.repeat(np.arange(n), n), bins.ravel()), 1)
    alive = np.ones(n, dtype=bool)
    scale = radii / delta
    clusters, centers, rads, subs, fallback = [], [], [], [], []
    while alive.any():
        C = np.cumsum(H, axis=1)
        ratio = np.where(alive[:, None], C / scale, 0.0)
        S = float(ratio.max())
        if S <= K:
            break
        hit = ratio >= 0.5 * S
        k = int(np.flatnonzero(hit.any(axis=0))[0])
        cand = np.flatnonzero(hit[:, k])
        x = int(cand[np.argmax(C[cand, k])])
        members = np.flatnonzero(alive & (bins[x] <= k))
        r_i = float(radii[k])
        alive[members] = False
        np.add.at(H, (np.repeat(np.arange(n), len(members)), bins[:, members].ravel()), -1)
        sub, fb = _subsample(members, r_i, delta, rng)
        clusters.append(members)
        centers.append(x)
        rads.append(r_i)
        subs.append(sub)
        fallback.append(fb)
    return BallDecomposition(X, delta, K, np.flatnonzero(alive), clusters, centers, rads, subs,
                             fallback)


def _subsample(members: np.ndarray, r_i: float, delta: float, rng):
    target = r_i / delta
    p = min(1.0, target / len(members))
    lo, hi = target / 4, 4 * target
    for _ in range(16):
        pick = members[rng.random(len(members)) < p]
        if lo <= len(pick) <= hi:
            return pick, False
    m = int(min(len(members), max(1, round(target))))
    return np.sort(rng.permutation(members)[:m]), True


# -- scale-change refinement ---------------------------------------------------------------


class Refinement(NamedTuple):
    lines: list
    retention_constant: float
    projection: np.ndarray | None


def separated_refinement(L, rho: float, r: float, slack: float = 1.0) -> Refinement:
    """Subset of a ρ-separated family in an r-ball obeying #(L' ∩ B(ℓ, s)) <= (s/ρ)^2.

    If the family already passes it is returned whole. Otherwise the
    parameters are projected orthogonally to their top two principal axes
    (a 1-Lipschitz map whose fibres meet the family in short segments) and
    the image is thinned greedily to a 4ρ-separated set. A 4ρ-separated
    planar set has at most (s/ρ)^2 points in any s-ball for s >= ρ, and the
    projection can only shrink distances, so the bound transfers back.
    ``retention_constant`` is #L' / ((ρ / r) #L).
    """
    L = list(L)
    if not L:
        return Refinement([], 0.0, None)
    pts = _as_points(L)
    if check_ball_condition_2d(pts, rho, slack).ok:
        return Refinement(L, r / rho, None)
    centred = pts - pts.mean(0)
    V = np.linalg.svd(centred, full_matrices=False)[2][:2]
    img = centred @ V.T
    order = np.lexsort((img[:, 1], img[:, 0]))
    tree = cKDTree(img)
    taken = np.zeros(len(L), dtype=bool)
    blocked = np.zeros(len(L), dtype=bool)
    for i in order:
        if blocked[i]:
            continue
        taken[i] = True
        blocked[tree.query_ball_point(img[i], 4 * rho * (1 - 1e-12))] = True
    keep = [L[i] for i in np.flatnonzero(taken)]
    return Refinement(keep, len(keep) / ((rho / r) * len(L)), V)


# -- dichotomy classifier -----------------------------------------------------------------


def classify_dichotomy(arr, Lp: Sequence[SL2Line], l0: SL2Line, t: float, r: float, K: float,
                       rng=None, spread_sample: int | None = 4000) -> dict:
    """Split Lp into the well-spread case (A) or the clustered case (B).

    The family is mapped to coefficient points F = F_{ℓ0}(Lp) and decomposed
    with the greedy linear-ball decomposition at scale δ. Case A when the kept
    part holds at least half of F; otherwise the clusters are pigeonholed by
    dyadic diameter and the most populated diameter class gives τ.

    The condition r <= r_L(x) <= 2r on the shadings of Lp is measured, not
    enforced: the violating fraction is reported, over all cubes or over a
    seeded sample of ``spread_sample`` cubes.
    """
    delta = arr.delta
    Lp = list(Lp)
    diag = {"n_lines": len(Lp), "delta": delta, "t": t, "r": r, "K": K}
    if not Lp:
        raise PreconditionViolation("empty line family", diag)
    far = max(line_distance(l, l0) for l in Lp)
    diag["max_distance_to_core"] = far
    if far > t * (1 + 1e-9):
        raise PreconditionViolation("family leaves the ball B(l0, t)", diag)
    if not (delta <= t * (1 + 1e-12) and t <= math.sqrt(delta * r) * (1 + 1e-12)):
        raise PreconditionViolation("need delta <= t <= sqrt(delta r)", diag)
    rng = np.random.default_rng(rng)
    ref = {id(l): k for k, l in enumerate(arr.lines)}
    by_value = {tuple(l.params): k for k, l in enumerate(arr.lines)}
    owned = []
    for l in Lp:
        k = ref.get(id(l), by_value.get(tuple(l.params)))
        if k is None:
            raise PreconditionViolation("family member not in the arrangement", diag)
        owned.append(arr.shadings[k].cubes.keys)
    owned = np.concatenate(owned)
    if spread_sample is not None and len(owned) > spread_sample:
        owned = owned[np.sort(rng.choice(len(owned), spread_sample, replace=False))]
    _, rr = arr.spread_map(owned)
    outside = int(np.sum((rr < r) | (rr > 2 * r)))
    total = len(owned)
    F = coeff_points(l0, Lp)
    dec = greedy_one_dim_decomposition(F, delta, K, rng=rng, require_separated=False)
    report = {"stats": {"n_lines": len(Lp), "kept": int(len(dec.kept)),
                        "kept_fraction": dec.kept_fraction,
                        "n_clusters": len(dec.clusters),
                        "spread_violation_fraction": outside / total if total else 0.0,
                        "min_F_separation": float(pdist(F).min()) / delta if len(F) > 1 else None},
              "decomposition": dec.report()}
    if 2 * len(dec.kept) >= len(F):
        report["type"] = "A"
        return report
    diam = [max(_diameter(dec.cluster_points(i)), delta) for i in range(len(dec.clusters))]
    cls = [math.ceil(math.log2(d / delta) - 1e-12) for d in diam]
    mass = {}
    for c, z in zip(cls, dec.clusters):
        mass[c] = mass.get(c, 0) + len(z)
    best = max(sorted(mass), key=lambda c: mass[c])
    tau = delta * 2.0**best
    members = [i for i, c in enumerate(cls) if c == best]
    report.update({
        "type": "B",
        "tau": tau,
        "tau_in_range": bool(delta * K ** 0.1 <= tau <= 1.0),
        "clusters": [{"r_i": dec.radii[i], "diameter": diam[i],
                      "size": int(len(dec.clusters[i]))} for i in members],
        "popular_mass_fraction": mass[best] / len(F),
    })
    return report
