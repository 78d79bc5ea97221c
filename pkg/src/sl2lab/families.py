"""Line families used by the experiments.

All generators are deterministic functions of their arguments; ``seed`` is
accepted for a uniform signature and is only used by kinds that sample.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .errors import UnknownKind
from .sl2_core import DEFAULT_R, GeneralLine, SL2Line, make_line
from .twist import restore_determinant

KINDS = ("sl2_net", "direction_separated", "focusing", "planar_L0", "tball")


def sl2_net(delta: float, b: float = 0.2, a_range=(0.8, 1.25), c_range=(-0.5, 0.5),
            spacing: float = 2.5, R: float = DEFAULT_R) -> list[SL2Line]:
    """Square lattice on the slice {b = const} of the variety, charted by (a, c).

    The chart (a, c) -> (a, b, c, (1 + bc)/a) only stretches distances, so a
    lattice of spacing s·δ has at most (2r/(sδ) + 1)^2 points in any
    parameter ball of radius r; s = 2.5 keeps that below (r/δ)^2 for r >= δ.
    """
    step = spacing * delta
    a_vals = np.arange(a_range[0], a_range[1] + 1e-12, step)
    c_vals = np.arange(c_range[0], c_range[1] + 1e-12, step)
    out = []
    for a in a_vals:
        for c in c_vals:
            d = (1.0 + b * c) / a
            if math.sqrt(a * a + b * b + c * c + d * d) <= R:
                out.append(SL2Line(float(a), float(b), float(c), float(d)))
    return out


def direction_separated(delta: float, c_range=(-0.5, 0.5), d_range=(0.8, 1.25)) -> list[SL2Line]:
    """Lines (1/d, 0, c, d): one per δ-cell of the direction chart (c, d)."""
    cs = np.arange(c_range[0], c_range[1] + 1e-12, delta)
    ds = np.arange(d_range[0], d_range[1] + 1e-12, delta)
    return [SL2Line(float(1.0 / d), 0.0, float(c), float(d)) for c in cs for d in ds]


def _pencil_through(p, u: float) -> SL2Line:
    """Line through p inside the plane of p, indexed by u along (p_x, p_y)."""
    px, py, pz = map(float, p)
    # base solution of c p_y - d p_x = -1, then move along (p_x, p_y)
    nrm = px * px + py * py
    c0, d0 = -py / nrm, px / nrm
    c, d = c0 + u * px, d0 + u * py
    return SL2Line(px - c * pz, py - d * pz, c, d)


def focusing(delta: float, point=(1.0, 0.0, 0.0), u_range=(-1.0, 1.0)) -> list[SL2Line]:
    """All lines of the plane pencil through one point, δ-spaced in parameter."""
    px, py, pz = map(float, point)
    speed = math.sqrt((px * px + py * py) * (1 + pz * pz))
    us = np.arange(u_range[0], u_range[1] + 1e-12, delta / speed)
    return [_pencil_through(point, float(u)) for u in us]


def planar_L0(delta: float) -> list[GeneralLine]:
    """Lines (nδ, 0, 0) + span(mδ, 1, 0), 1 <= n, m <= 1/δ, all in {z = 0}."""
    N = int(round(1.0 / delta))
    return [GeneralLine((n * delta, 0.0, 0.0), (m * delta, 1.0, 0.0))
            for n in range(1, N + 1) for m in range(1, N + 1)]


def tangent_basis(line: SL2Line) -> np.ndarray:
    """Orthonormal basis (3, 4) of the tangent space of the variety at ``line``."""
    grad = np.array([line.d, -line.c, -line.b, line.a])
    return np.linalg.svd(grad[None, :])[2][1:]


def tball(delta: float, t: float, core=(1.0, 0.0, 0.0, 1.0), dim: int = 3,
          spacing: float = 1.0) -> list[SL2Line]:
    """δ-separated lines within distance t of ``core``.

    A cubic grid of step spacing·δ in the first ``dim`` tangent directions is
    pushed onto the variety, clipped to the t-ball and thinned greedily to a
    δ-separated set.
    """
    l0 = make_line(*core)
    basis = tangent_basis(l0)[:dim]
    step = spacing * delta
    k = int(math.floor(t / step))
    axis = np.arange(-k, k + 1) * step
    grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), -1).reshape(-1, dim)
    grid = grid[np.linalg.norm(grid, axis=1) <= t]
    params = np.array([restore_determinant(l0.params + g @ basis) for g in grid])
    params = params[np.linalg.norm(params - l0.params, axis=1) <= t]
    keep = thin_separated(params, delta)
    return [SL2Line(*map(float, params[i])) for i in keep]


def thin_separated(pts: np.ndarray, sep: float) -> np.ndarray:
    """Indices of a greedy maximal subset with pairwise distances >= sep."""
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    tree = cKDTree(pts)
    blocked = np.zeros(len(pts), dtype=bool)
    keep = []
    for i in range(len(pts)):
        if blocked[i]:
            continue
        keep.append(i)
        blocked[tree.query_ball_point(pts[i], sep * (1 - 1e-12))] = True
    return np.asarray(keep, dtype=np.int64)


_GENERATORS = {
    "sl2_net": sl2_net,
    "direction_separated": direction_separated,
    "focusing": focusing,
    "planar_L0": planar_L0,
    "tball": tball,
}


def generate_family(kind: str, delta: float, params: dict | None = None, seed=None):
    """Dispatch to one of the generators in ``KINDS``."""
    try:
        gen = _GENERATORS[kind]
    except KeyError:
        raise UnknownKind(f"unknown family kind {kind!r}; expected one of {KINDS}") from None
    params = dict(params or {})
    if kind == "tball":
        params.setdefault("t", 8 * delta)
    return gen(delta, **params)
