"""Sparse δ-cube sets, shadings, and the quantities measured on them.

A cube with integer index (i, j, k) is [iδ, (i+1)δ) x [jδ, (j+1)δ) x [kδ, (k+1)δ).
Index sets are stored as sorted arrays of packed int64 keys, so unions and
membership tests are numpy set operations rather than Python-level hashing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyFiber, EmptyIntersection, ShadingOutsideCurve
from .sl2_core import DEFAULT_R, LineLike, clip_to_ball
from .twist import Curve

_OFF = 1 << 20
_BITS = 21
_MASK = (1 << _BITS) - 1


def pack(idx: np.ndarray) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return np.zeros(0, dtype=np.int64)
    if np.any(np.abs(idx) >= _OFF):
        raise ValueError("cube index out of packable range")
    key = np.zeros(len(idx), dtype=np.int64)
    for col in range(idx.shape[1]):
        key = (key << _BITS) | (idx[:, col] + _OFF)
    return key


def unpack(keys: np.ndarray, dims: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty((len(keys), dims), dtype=np.int64)
    k = keys.copy()
    for col in reversed(range(dims)):
        out[:, col] = (k & _MASK) - _OFF
        k >>= _BITS
    return out


@dataclass(frozen=True, eq=False)
class VoxelSet:
    delta: float
    dims: int
    keys: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")

    @classmethod
    def from_indices(cls, delta: float, idx, dims: int | None = None) -> "VoxelSet":
        idx = np.asarray(idx, dtype=np.int64)
        if dims is None:
            dims = idx.shape[1] if idx.ndim == 2 and idx.size else 3
        idx = idx.reshape(-1, dims)
        return cls(delta, dims, np.unique(pack(idx)))

    @classmethod
    def empty(cls, delta: float, dims: int = 3) -> "VoxelSet":
        return cls(delta, dims, np.zeros(0, dtype=np.int64))

    @property
    def indices(self) -> np.ndarray:
        return unpack(self.keys, self.dims)

    @property
    def centers(self) -> np.ndarray:
        return (self.indices + 0.5) * self.delta

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def measure(self) -> float:
        return len(self.keys) * self.delta**self.dims

    def contains_keys(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        if len(self.keys) == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.clip(np.searchsorted(self.keys, keys), 0, len(self.keys) - 1)
        return self.keys[pos] == keys

    def __contains__(self, idx) -> bool:
        return bool(self.contains_keys(pack(np.asarray(idx).reshape(1, -1)))[0])

    def _compatible(self, other: "VoxelSet"):
        if other.dims != self.dims or other.delta != self.delta:
            raise ValueError("voxel sets live on different grids")

    def union(self, other: "VoxelSet") -> "VoxelSet":
        self._compatible(other)
        return VoxelSet(self.delta, self.dims, np.union1d(self.keys, other.keys))

    def intersection(self, other: "VoxelSet") -> "VoxelSet":
        self._compatible(other)
        return VoxelSet(self.delta, self.dims,
                        np.intersect1d(self.keys, other.keys, assume_unique=True))

    def issubset(self, other: "VoxelSet") -> bool:
        self._compatible(other)
        return bool(np.all(other.contains_keys(self.keys)))

    def subset(self, mask) -> "VoxelSet":
        return VoxelSet(self.delta, self.dims, self.keys[np.asarray(mask)])

    def __eq__(self, other) -> bool:
        return (isinstance(other, VoxelSet) and self.dims == other.dims
                and self.delta == other.delta and np.array_equal(self.keys, other.keys))

    def dump(self, path) -> None:
        body = "\n".join(" ".join(map(str, row)) for row in self.indices.tolist())
        Path(path).write_text(f"delta={self.delta!r} dims={self.dims}\n" + body + ("\n" if body else ""))

    @classmethod
    def load(cls, path) -> "VoxelSet":
        head, *rows = Path(path).read_text().splitlines()
        meta = dict(part.split("=") for part in head.split())
        dims = int(meta["dims"])
        idx = [list(map(int, r.split())) for r in rows if r.strip()]
        return cls.from_indices(float(meta["delta"]), np.array(idx, dtype=np.int64).reshape(-1, dims), dims)


def union_all(sets: Sequence[VoxelSet], delta: float, dims: int = 3) -> VoxelSet:
    if not sets:
        return VoxelSet.empty(delta, dims)
    return VoxelSet(delta, dims, np.unique(np.concatenate([s.keys for s in sets])))


# -- rasterising segments -------------------------------------------------------

def segment_cubes(p0, p1, delta: float) -> np.ndarray:
    """Indices of all half-open δ-cubes meeting the segment [p0, p1], sorted."""
    return np.unique(_segment_cells(p0, p1, delta), axis=0)


def _segment_cells(p0, p1, delta: float) -> np.ndarray:
    """Cell indices (with repeats) of the half-open δ-cubes meeting [p0, p1].

    Every parameter where the segment crosses a grid plane is collected; the
    cube of each crossing point, of each interval midpoint, and of both
    endpoints is taken. This is the same walk as a 3D DDA traversal, done in
    one vectorised pass.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    v = p1 - p0
    ts = [np.array([0.0, 1.0])]
    for ax in range(len(p0)):
        if v[ax] == 0.0:
            continue
        lo, hi = sorted((p0[ax], p1[ax]))
        ks = np.arange(math.ceil(lo / delta), math.floor(hi / delta) + 1)
        if ks.size:
            ts.append((ks * delta - p0[ax]) / v[ax])
    t = np.unique(np.clip(np.concatenate(ts), 0.0, 1.0))
    mids = 0.5 * (t[1:] + t[:-1])
    allt = np.concatenate([t, mids])
    pts = p0 + np.multiply.outer(allt, v)
    idx = np.floor(pts / delta).astype(np.int64)
    # a crossing point computed as p0 + t v can round to the wrong side
    exact = np.rint(pts / delta)
    on_plane = np.abs(pts / delta - exact) < 1e-9
    return np.where(on_plane, exact.astype(np.int64), idx)


def cube_segment_intersects(idx, delta: float, p0, p1, slack: float = 1e-12) -> np.ndarray:
    """Closed-cube vs segment test; vectorised over an (n, d) index array.

    A centre-distance prefilter rejects far cubes, then a slab test decides.
    """
    idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    dim = idx.shape[1]
    v = p1 - p0
    lo = idx * delta
    hi = lo + delta
    centers = lo + 0.5 * delta
    # distance from centres to the segment
    vv = float(v @ v)
    s = np.clip(((centers - p0) @ v) / vv, 0.0, 1.0) if vv > 0 else np.zeros(len(idx))
    dist = np.linalg.norm(centers - (p0 + np.multiply.outer(s, v)), axis=1)
    near = dist <= 0.5 * math.sqrt(dim) * delta * (1 + 1e-9) + slack
    tmin = np.zeros(len(idx))
    tmax = np.ones(len(idx))
    for ax in range(dim):
        if v[ax] == 0.0:
            inside = (p0[ax] >= lo[:, ax] - slack) & (p0[ax] <= hi[:, ax] + slack)
            tmax = np.where(inside, tmax, -1.0)
            continue
        a = (lo[:, ax] - slack - p0[ax]) / v[ax]
        b = (hi[:, ax] + slack - p0[ax]) / v[ax]
        tmin = np.maximum(tmin, np.minimum(a, b))
        tmax = np.minimum(tmax, np.maximum(a, b))
    return near & (tmin <= tmax)


# -- shadings ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Shading:
    line: LineLike
    cubes: VoxelSet

    @property
    def measure(self) -> float:
        return self.cubes.measure

    def density(self) -> float:
        """|Y| / δ^2."""
        return self.cubes.measure / self.cubes.delta**2

    def validate(self, R: float = DEFAULT_R) -> bool:
        """True iff every cube meets the segment of the line inside B(0, R)."""
        if len(self.cubes) == 0:
            return True
        span = clip_to_ball(self.line, R)
        if span is None:
            return False
        p0 = self.line.base + span[0] * self.line.direction
        p1 = self.line.base + span[1] * self.line.direction
        return bool(np.all(cube_segment_intersects(self.cubes.indices, self.cubes.delta, p0, p1,
                                                   slack=1e-9 * self.cubes.delta)))


def segment_in_ball(line: LineLike, R: float = DEFAULT_R):
    span = clip_to_ball(line, R)
    if span is None:
        raise EmptyIntersection("line misses B(0, R)")
    return line.base + span[0] * line.direction, line.base + span[1] * line.direction


def full_shading(line: LineLike, delta: float, R: float = DEFAULT_R) -> Shading:
    """All grid δ-cubes meeting line ∩ B(0, R)."""
    p0, p1 = segment_in_ball(line, R)
    keys = np.unique(pack(_segment_cells(p0, p1, delta)))
    return Shading(line, VoxelSet(delta, 3, keys))


# -- regularisation ------------------------------------------------------------------

class Regularized(NamedTuple):
    shading: Shading
    C: float
    kept_per_level: list


def _segment_params(line: LineLike, cubes: VoxelSet, R: float):
    """Normalised arc-length position in [0, 1) of each cube centre's foot."""
    p0, p1 = segment_in_ball(line, R)
    v = p1 - p0
    u = ((cubes.centers - p0) @ v) / float(v @ v)
    return np.clip(u, 0.0, np.nextafter(1.0, 0.0)), float(np.linalg.norm(v))


def regularize_shading(line: LineLike, Y: Shading, delta: float, R: float = DEFAULT_R) -> Regularized:
    """Dyadic pruning of sparse segments, keeping at least half the mass.

    With L = log2(R/δ) and M = ceil(L), pass i = 0..M-1 splits the segment
    into 2^(M-i) equal pieces J and keeps the cubes of a piece only when its
    mass is at least |Y| (|J|/|ℓ|) / (4L). Each cube belongs to the piece
    containing the foot of its centre, so pieces nest exactly across passes.

    The returned ``C`` is the constant the construction guarantees in
    |Y' ∩ B(x, r)| >= r |Y| / (C |log δ|) for cubes x of Y' and δ <= r <= R,
    where the ball mass counts cubes whose centres lie in B(x, r).
    """
    n = len(Y.cubes)
    if n == 0:
        return Regularized(Y, 0.0, [])
    L = max(math.log2(R / delta), 1.0)
    M = max(math.ceil(math.log2(R / delta)), 1)
    u, length = _segment_params(line, Y.cubes, R)
    mass = float(n)
    alive = np.ones(n, dtype=bool)
    kept = []
    for i in range(M):
        pieces = 2 ** (M - i)
        which = np.floor(u * pieces).astype(np.int64)
        counts = np.bincount(which[alive], minlength=pieces)
        threshold = mass / pieces / (4.0 * L)
        good = counts >= threshold
        alive &= good[which]
        kept.append(int(alive.sum()))
    out = Shading(line, Y.cubes.subset(alive))
    return Regularized(out, _construction_constant(n, delta, length, L, M, R), kept)


def _construction_constant(n: int, delta: float, length: float, L: float, M: int, R: float) -> float:
    # mass in counts of cubes; |Y| = n δ³ cancels against the δ³ in ball masses
    logd = abs(math.log(delta))
    slop = 2.0 * math.sqrt(3.0) * delta
    need = []
    # radii too small for any piece: the cube itself is in the ball
    s0 = length / 2**M
    need.append((s0 + slop) * n / logd)
    for i in range(M):
        s_i = length * 2.0 ** (i - M)
        piece_mass = n * 2.0 ** (i - M) / (4.0 * L)
        r_hi = (2.0 * s_i + slop) if i < M - 1 else R
        need.append(r_hi * n / (piece_mass * logd))
    # once the ball holds all of Y', which has at least n/2 cubes
    need.append(R * n / (0.5 * n * logd))
    return max(need)


def dyadic_radii(delta: float, R: float) -> np.ndarray:
    k = int(math.floor(math.log2(R / delta) + 1e-12))
    return np.append(delta * 2.0 ** np.arange(k + 1), R)


def regularity_ratio(Yp: Shading, total_count: int, delta: float, R: float = DEFAULT_R) -> float:
    """Smallest C for which Y' is regular, over cubes x in Y' and dyadic radii.

    Returns max over (x, r) of r |Y| / (|Y' ∩ B(x, r)| |log δ|), with masses
    counted in cubes.
    """
    if len(Yp.cubes) == 0:
        return 0.0
    c = Yp.cubes.centers
    d2 = ((c[:, None, :] - c[None, :, :]) ** 2).sum(-1)
    logd = abs(math.log(delta))
    worst = 0.0
    for r in dyadic_radii(delta, R):
        counts = (d2 <= r * r * (1 + 1e-12)).sum(1)
        worst = max(worst, float((r * total_count / (counts * logd)).max()))
    return worst


def is_regular(Yp: Shading, total_count: int, C: float, delta: float, R: float = DEFAULT_R) -> bool:
    return regularity_ratio(Yp, total_count, delta, R) <= C * (1 + 1e-12)


# -- arrangements ----------------------------------------------------------------------

def angle_between(u, v) -> float:
    """Unsigned angle in [0, pi/2] between two direction vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cosv = abs(float(u @ v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.acos(min(cosv, 1.0))


@dataclass(frozen=True, eq=False)
class Arrangement:
    delta: float
    R: float
    lines: tuple
    shadings: tuple

    @classmethod
    def full(cls, lines, delta: float, R: float = DEFAULT_R) -> "Arrangement":
        lines = tuple(lines)
        return cls(delta, R, lines, tuple(full_shading(l, delta, R) for l in lines))

    def densities(self) -> list[float]:
        return [s.density() for s in self.shadings]

    def union(self) -> VoxelSet:
        return union_all([s.cubes for s in self.shadings], self.delta, 3)

    @cached_property
    def _fibers(self):
        if not self.shadings:
            return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(1, np.int64)
        keys = np.concatenate([s.cubes.keys for s in self.shadings])
        owner = np.concatenate([np.full(len(s.cubes), i) for i, s in enumerate(self.shadings)])
        order = np.argsort(keys, kind="stable")
        keys, owner = keys[order], owner[order]
        starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
        return keys[starts], owner, np.r_[starts, len(keys)]

    def fiber(self, idx) -> list[int]:
        """Indices of lines whose shading contains cube ``idx``."""
        ukeys, owner, bounds = self._fibers
        key = pack(np.asarray(idx).reshape(1, -1))[0]
        pos = int(np.searchsorted(ukeys, key))
        if pos >= len(ukeys) or ukeys[pos] != key:
            return []
        return owner[bounds[pos]:bounds[pos + 1]].tolist()

    def _spread(self, members) -> float:
        dirs = [self.lines[i].direction for i in members]
        worst = 0.0
        for a in range(len(dirs)):
            for b in range(a + 1, len(dirs)):
                worst = max(worst, angle_between(dirs[a], dirs[b]))
        return self.delta + worst

    def spread_map(self, keys=None) -> tuple[np.ndarray, np.ndarray]:
        """(keys, r_L) for every cube of E_L, or for the given packed keys."""
        ukeys, owner, bounds = self._fibers
        units = np.array([l.direction / np.linalg.norm(l.direction) for l in self.lines]) \
            if self.lines else np.zeros((0, 3))
        if keys is None:
            pos = np.arange(len(ukeys))
        else:
            keys = np.asarray(keys, dtype=np.int64)
            pos = np.searchsorted(ukeys, keys)
            if np.any(pos >= len(ukeys)) or np.any(ukeys[np.minimum(pos, len(ukeys) - 1)] != keys):
                raise EmptyFiber("some requested cubes lie in no shading")
        r = np.full(len(pos), self.delta)
        sizes = bounds[pos + 1] - bounds[pos]
        for out, k in enumerate(pos):
            if sizes[out] < 2:
                continue
            U = units[owner[bounds[k]:bounds[k + 1]]]
            cos = np.clip(np.abs(U @ U.T), 0.0, 1.0)
            r[out] = self.delta + float(np.arccos(cos.min()))
        return ukeys[pos], r

    def summary(self) -> dict:
        return {"delta": self.delta, "R": self.R, "n_lines": len(self.lines),
                "densities": self.densities(), "volume": union_volume(self)}


def union_volume(arr: Arrangement) -> float:
    return arr.union().measure


def local_angle_spread(arr: Arrangement, x) -> float:
    members = arr.fiber(x)
    if not members:
        raise EmptyFiber(f"no shading contains cube {tuple(np.asarray(x).tolist())}")
    return arr._spread(members)


# -- plane curves ------------------------------------------------------------------------

def full_curve_shading(curve: Curve, delta: float, R: float | None = None) -> VoxelSet:
    """δ-squares over [-R, R] whose centres lie within vertical distance δ of the graph."""
    R = curve.R if R is None else R
    i = np.arange(math.floor(-R / delta), math.ceil(R / delta))
    xc = (i + 0.5) * delta
    keep = np.abs(xc) <= R
    i, xc = i[keep], xc[keep]
    y = curve(xc)
    jlo = np.ceil((y - delta) / delta - 0.5).astype(np.int64)
    jhi = np.floor((y + delta) / delta - 0.5).astype(np.int64)
    cols, rows = [], []
    for off in range(int((jhi - jlo).max()) + 1 if len(i) else 0):
        m = jlo + off <= jhi
        cols.append(i[m])
        rows.append(jlo[m] + off)
    if not cols:
        return VoxelSet.empty(delta, 2)
    return VoxelSet.from_indices(delta, np.column_stack([np.concatenate(cols), np.concatenate(rows)]), 2)


def check_curve_containment(curve: Curve, shading: VoxelSet, delta: float) -> bool:
    if len(shading) == 0:
        return True
    c = shading.centers
    vertical = np.abs(c[:, 1] - curve(np.clip(c[:, 0], -curve.R, curve.R)))
    inside_x = np.abs(c[:, 0]) <= curve.R
    ok = inside_x & (vertical <= delta * (1 + 1e-9))
    if np.all(ok):
        return True
    tol = delta * (1 + 1e-9)
    return bool(np.all(curve.distance(c[~ok]) <= tol))


def curve_union_area(curves: Sequence[Curve], shadings: Sequence[VoxelSet], delta: float) -> float:
    for k, (f, Y) in enumerate(zip(curves, shadings)):
        if not check_curve_containment(f, Y, delta):
            raise ShadingOutsideCurve(f"shading {k} leaves the δ-neighbourhood of its curve")
    return union_all(list(shadings), delta, 2).measure
