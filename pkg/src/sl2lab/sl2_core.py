"""Lines of the form (a, b, 0) + span(c, d, 1) with ad - bc = 1.

Also holds the plane map p -> Pi(p), the horizontal lines through a point,
and the regulus swept by the horizontal lines through the points of a line.
Points are plain length-3 numpy arrays (or anything ``np.asarray`` accepts).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateDirection, DeterminantViolation, ScaleOrderViolation

DEFAULT_R = 2.0
"""Radius of the working ball B(0, R)."""

DET_TOL = 1e-9


class LineLike(Protocol):
    """Anything with a base point and a (not necessarily unit) direction."""

    @property
    def base(self) -> np.ndarray: ...

    @property
    def direction(self) -> np.ndarray: ...


@dataclass(frozen=True)
class SL2Line:
    a: float
    b: float
    c: float
    d: float

    @property
    def params(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=float)

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    @property
    def base(self) -> np.ndarray:
        return np.array([self.a, self.b, 0.0])

    @property
    def direction(self) -> np.ndarray:
        return np.array([self.c, self.d, 1.0])

    @property
    def unit_direction(self) -> np.ndarray:
        v = self.direction
        return v / np.linalg.norm(v)

    def point_at(self, t):
        return point_at(self, t)


@dataclass(frozen=True, eq=False)
class GeneralLine:
    """A line given by a point and a direction, with no SL2 constraint.

    Used for control families that deliberately leave the variety.
    """

    point: tuple
    dir: tuple

    @property
    def base(self) -> np.ndarray:
        return np.asarray(self.point, dtype=float)

    @property
    def direction(self) -> np.ndarray:
        return np.asarray(self.dir, dtype=float)

    @property
    def unit_direction(self) -> np.ndarray:
        v = self.direction
        return v / np.linalg.norm(v)

    @property
    def params(self) -> np.ndarray:
        # raw (point, direction) pair; ball-condition counts use this chart
        return np.concatenate([self.base, self.direction])


@dataclass(frozen=True)
class Plane:
    base: np.ndarray
    normal: np.ndarray

    def signed_distance(self, q) -> float:
        return float(np.dot(np.asarray(q, dtype=float) - self.base, self.normal))


def make_line(a: float, b: float, c: float, d: float) -> SL2Line:
    det = a * d - b * c
    if not abs(det - 1.0) <= DET_TOL:
        raise DeterminantViolation(f"ad - bc = {det!r}, expected 1")
    return SL2Line(float(a), float(b), float(c), float(d))


def point_at(line: SL2Line, t):
    """Point of ``line`` at height ``t``; vectorised over array ``t``."""
    t = np.asarray(t, dtype=float)
    pts = np.stack(
        [line.a + line.c * t, line.b + line.d * t, t + 0.0 * line.a], axis=-1
    )
    return pts


def line_distance(l1: SL2Line, l2: SL2Line) -> float:
    return float(np.linalg.norm(l1.params - l2.params))


def plane_normal(p) -> np.ndarray:
    """Unnormalised normal (p_y, -p_x, 1); vectorised over leading axes."""
    p = np.asarray(p, dtype=float)
    return np.stack([p[..., 1], -p[..., 0], np.ones_like(p[..., 0])], axis=-1)


def plane_at(p) -> Plane:
    p = np.asarray(p, dtype=float)
    n = plane_normal(p)
    return Plane(base=p.copy(), normal=n / np.linalg.norm(n))


def horizontal_line(p) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    v = np.array([p[0], p[1], 0.0])
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DegenerateDirection("horizontal line undefined on the axis x = y = 0")
    return p.copy(), v / norm


# -- regulus -----------------------------------------------------------------

# monomial order for the quadric coefficients
QUADRIC_MONOMIALS = ("1", "x", "y", "z", "xx", "yy", "zz", "xy", "xz", "yz")


def regulus_quadric(line: SL2Line) -> np.ndarray:
    """Coefficients of the quadric {a y - b x + c y z - d x z = 0}.

    At height z the regulus is the horizontal line through the origin in
    direction (a + c z, b + d z); the quadric is that condition cleared of
    denominators. The (a + c z, b + d z) = 0 case cannot occur when ad - bc = 1.
    """
    coef = np.zeros(10)
    coef[1] = -line.b
    coef[2] = line.a
    coef[8] = -line.d
    coef[9] = line.c
    return coef


def eval_quadric(coef: np.ndarray, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    mons = (np.ones_like(x), x, y, z, x * x, y * y, z * z, x * y, x * z, y * z)
    return sum(c * m for c, m in zip(coef, mons) if c != 0.0) + 0.0 * x


def regulus_residual(line: SL2Line, q):
    """Signed residual vanishing exactly on R(line); vectorised over ``q``."""
    q = np.asarray(q, dtype=float)
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    return line.a * y - line.b * x + line.c * y * z - line.d * x * z


def _regulus_slice_dist2(line: SL2Line, q: np.ndarray, z: float) -> float:
    wx = line.a + line.c * z
    wy = line.b + line.d * z
    cross = q[0] * wy - q[1] * wx
    return (q[2] - z) ** 2 + cross * cross / (wx * wx + wy * wy)


def distance_to_regulus(line: SL2Line, q, n_seeds: int = 64) -> float:
    """Euclidean distance from ``q`` to the regulus of ``line``.

    Each horizontal slice of the regulus is a full line through the z-axis,
    so the footpoint problem reduces to one variable (the footpoint height).
    The slice at the height of q bounds the search window; 64 seeds pick the
    basin and a bounded Brent step polishes it.
    """
    q = np.asarray(q, dtype=float)
    f = lambda z: _regulus_slice_dist2(line, q, z)
    upper = math.sqrt(f(q[2]))
    if upper == 0.0:
        return 0.0
    zs = np.linspace(q[2] - upper, q[2] + upper, n_seeds)
    vals = np.array([f(z) for z in zs])
    k = int(np.argmin(vals))
    h = zs[1] - zs[0]
    lo, hi = zs[max(k - 1, 0)], zs[min(k + 1, n_seeds - 1)]
    if hi - lo < 1e-15:
        return math.sqrt(max(vals[k], 0.0))
    res = minimize_scalar(f, bounds=(lo - 1e-3 * h, hi + 1e-3 * h), method="bounded",
                          options={"xatol": 1e-13})
    best = min(vals[k], float(res.fun))
    return math.sqrt(max(best, 0.0))


def distance_to_line(line: LineLike, q) -> np.ndarray:
    """Distance from point(s) ``q`` to the full line; vectorised."""
    q = np.asarray(q, dtype=float)
    u = line.direction / np.linalg.norm(line.direction)
    v = q - line.base
    perp = v - np.multiply.outer(v @ u, u) if v.ndim > 1 else v - (v @ u) * u
    return np.linalg.norm(perp, axis=-1)


def check_strip_scales(delta: float, t: float) -> None:
    if not (0 < delta <= t <= math.sqrt(delta) * (1 + 1e-12)):
        raise ScaleOrderViolation(
            f"need 0 < delta <= t <= sqrt(delta); got delta={delta}, t={t}"
        )


def in_regulus_strip(line: SL2Line, q, delta: float, t: float) -> bool:
    check_strip_scales(delta, t)
    q = np.asarray(q, dtype=float)
    if float(distance_to_line(line, q)) > t:
        return False
    return distance_to_regulus(line, q) <= delta + 1e-9


def regulus_comparability(line: SL2Line, R: float = DEFAULT_R, n: int = 2000,
                          rng=None, shell: float = 0.05) -> tuple[float, float]:
    """Empirical (min, max) of |residual| / distance near R(line) inside B(0, R)."""
    rng = np.random.default_rng(rng)
    ratios = []
    while len(ratios) < n:
        t = rng.uniform(-R, R)
        p = point_at(line, t)
        s = rng.uniform(-2.0, 2.0)
        base = p + s * np.array([p[0], p[1], 0.0])
        q = base + rng.normal(size=3) * shell
        if np.linalg.norm(q) > R:
            continue
        dist = distance_to_regulus(line, q)
        if dist < 1e-12:
            continue
        ratios.append(abs(float(regulus_residual(line, q))) / dist)
    return float(min(ratios)), float(max(ratios))


# -- segments inside the working ball ----------------------------------------

def clip_to_ball(line: LineLike, R: float = DEFAULT_R):
    """Parameter interval [s0, s1] with |base + s * direction| <= R, or None."""
    p = line.base
    v = line.direction
    A = float(v @ v)
    B = 2.0 * float(p @ v)
    C = float(p @ p) - R * R
    disc = B * B - 4 * A * C
    if disc <= 0:
        return None
    r = math.sqrt(disc)
    return (-B - r) / (2 * A), (-B + r) / (2 * A)


def segment_length(line: LineLike, R: float = DEFAULT_R) -> float:
    span = clip_to_ball(line, R)
    if span is None:
        return 0.0
    return (span[1] - span[0]) * float(np.linalg.norm(line.direction))


# -- line-set files ------------------------------------------------------------

def load_lines(path) -> list[SL2Line]:
    """Read ``a b c d`` records; ``#`` starts a comment."""
    lines = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        fields = body.split()
        if len(fields) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
        try:
            lines.append(make_line(*map(float, fields)))
        except DeterminantViolation as exc:
            raise DeterminantViolation(f"{path}:{lineno}: {exc}") from None
    return lines


def save_lines(path, lines: Iterable[SL2Line], header: str | None = None) -> None:
    out = []
    if header:
        out.extend(f"# {h}" for h in header.splitlines())
    out.extend(f"{l.a!r} {l.b!r} {l.c!r} {l.d!r}" for l in lines)
    Path(path).write_text("\n".join(out) + "\n")
