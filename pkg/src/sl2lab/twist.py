"""Twisted projections and the quadratic-coefficient chart of nearby lines.

``twisted_project(l, q)`` sends the core line ``l`` onto the x-axis and every
other SL2 line onto the graph of a quadratic, whose coefficients are given by
``coeff_map``. The second half of the module holds the light-cone projection
maps and the point-to-line correspondence p -> l^p used to pass between
restricted projections and SL2 line arrangements.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import HeightTooSmall, InsufficientSamples, ThetaOutOfRange
from .sl2_core import DEFAULT_R, SL2Line, distance_to_line, distance_to_regulus, point_at


@dataclass(frozen=True)
class Curve:
    """Graph of x -> A x^2 + B x + C over [-R, R]."""

    A: float
    B: float
    C: float
    R: float = DEFAULT_R

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (self.A * x + self.B) * x + self.C

    def slope(self, x):
        return 2.0 * self.A * np.asarray(x, dtype=float) + self.B

    def distance(self, pts) -> np.ndarray:
        """Euclidean distance from 2D points to the graph over [-R, R]."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty(len(pts))
        for k, (x0, y0) in enumerate(pts):
            # critical points of (x - x0)^2 + (f(x) - y0)^2 solve a cubic
            A, B, C = self.A, self.B, self.C - y0
            poly = [2 * A * A, 3 * A * B, B * B + 2 * A * C + 1, B * C - x0]
            cands = [-self.R, self.R]
            if any(poly):
                for root in np.roots(np.trim_zeros(poly, "f")):
                    if abs(root.imag) < 1e-9 and -self.R <= root.real <= self.R:
                        cands.append(root.real)
            xs = np.array(cands)
            out[k] = np.sqrt(np.min((xs - x0) ** 2 + (self(xs) - y0) ** 2))
        return out


def load_curves(path, R: float = DEFAULT_R) -> list[Curve]:
    curves = []
    for raw in Path(path).read_text().splitlines():
        body = raw.split("#", 1)[0].strip()
        if body:
            A, B, C = map(float, body.split())
            curves.append(Curve(A, B, C, R))
    return curves


def save_curves(path, curves) -> None:
    Path(path).write_text("".join(f"{c.A!r} {c.B!r} {c.C!r}\n" for c in curves))


def twisted_project(line: SL2Line, q):
    """(z, a y - b x + c y z - d x z); vectorised over leading axes of ``q``."""
    q = np.asarray(q, dtype=float)
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    second = line.a * y - line.b * x + line.c * y * z - line.d * x * z
    return np.stack([z + 0.0 * x, second], axis=-1)


def coeff_matrix(line: SL2Line) -> np.ndarray:
    """Matrix M with F_l(l') = M @ (a', b', c', d'); F_l is linear in l'."""
    a, b, c, d = line.a, line.b, line.c, line.d
    return np.array(
        [
            [0.0, 0.0, -d, c],
            [-d, c, -b, a],
            [-b, a, 0.0, 0.0],
        ]
    )


def coeff_map(line: SL2Line, other: SL2Line, R: float = DEFAULT_R) -> Curve:
    a, b, c, d = line.a, line.b, line.c, line.d
    a2, b2, c2, d2 = other.a, other.b, other.c, other.d
    A = c * d2 - d * c2
    B = a * d2 - b * c2 + c * b2 - d * a2
    C = a * b2 - b * a2
    return Curve(A, B, C, R)


def coeff_points(core: SL2Line, lines) -> np.ndarray:
    """Stack F_core(l) for each l as rows of an (n, 3) array."""
    if not lines:
        return np.zeros((0, 3))
    P = np.array([l.params for l in lines])
    return P @ coeff_matrix(core).T


# -- sampling the SL2 variety --------------------------------------------------

def restore_determinant(p: np.ndarray) -> np.ndarray:
    """Solve ad - bc = 1 for d (|a| >= |b|) or c (otherwise), keeping the rest."""
    a, b, c, d = p
    if abs(a) >= abs(b):
        d = (1.0 + b * c) / a
    else:
        c = (a * d - 1.0) / b
    return np.array([a, b, c, d])


def sample_near(line: SL2Line, rho: float, n: int, rng=None) -> list[SL2Line]:
    """Up to ``n`` lines of the variety within parameter distance ``rho``.

    Draws a uniform vector in the rho-ball of the tangent space at ``line``,
    restores the determinant exactly, and drops draws that land outside the
    ball after the correction.
    """
    rng = np.random.default_rng(rng)
    p0 = line.params
    grad = np.array([line.d, -line.c, -line.b, line.a])
    grad /= np.linalg.norm(grad)
    out = []
    for _ in range(n):
        v = rng.normal(size=4)
        v -= (v @ grad) * grad
        v *= rho * rng.uniform() ** (1 / 3) / np.linalg.norm(v)
        p = restore_determinant(p0 + v)
        if np.all(np.isfinite(p)) and np.linalg.norm(p - p0) <= rho:
            out.append(SL2Line(*map(float, p)))
    return out


def bilipschitz_probe(line: SL2Line, rho0: float, n_samples: int, rng=None):
    """Empirical bilipschitz constants of F_line on the rho0-ball around it.

    Returns ``(K_lower, K_upper)``: min and max of
    |F(l') - F(l'')| / d(l', l'') over consecutive sampled pairs and over
    pairs (sample, line).
    """
    if n_samples < 2:
        raise InsufficientSamples("need at least 2 samples")
    pts = sample_near(line, rho0, n_samples, rng)
    pts.append(line)
    if len(pts) < 3:
        raise InsufficientSamples(f"only {len(pts) - 1} variety points generated")
    P = np.array([l.params for l in pts])
    F = P @ coeff_matrix(line).T
    i = np.arange(len(pts) - 1)
    pairs = [(i, i + 1), (i, np.full_like(i, len(pts) - 1))]
    ratios = []
    for u, v in pairs:
        dp = np.linalg.norm(P[u] - P[v], axis=1)
        keep = dp > 0
        ratios.append(np.linalg.norm(F[u] - F[v], axis=1)[keep] / dp[keep])
    ratios = np.concatenate(ratios)
    if ratios.size == 0:
        raise InsufficientSamples("all sampled pairs coincide")
    return float(ratios.min()), float(ratios.max())


def probe_report(line: SL2Line, rho0: float, n_samples: int, rng=None) -> dict:
    lo, hi = bilipschitz_probe(line, rho0, n_samples, rng)
    return {"line": [line.a, line.b, line.c, line.d], "rho0": rho0,
            "samples": n_samples, "K_lower": lo, "K_upper": hi}


# -- strip projection ------------------------------------------------------------

def sample_regulus_strip(line: SL2Line, delta: float, t: float, n: int,
                         R: float = DEFAULT_R, rng=None) -> np.ndarray:
    """Rejection samples of the truncated strip N_t(line) ∩ N_delta(R(line)).

    Candidates are drawn around ruling segments of the regulus and kept only
    when the exact distance tests pass.
    """
    from .sl2_core import clip_to_ball

    rng = np.random.default_rng(rng)
    span = clip_to_ball(line, R)
    if span is None:
        return np.zeros((0, 3))
    out = []
    tries = 0
    while len(out) < n and tries < 50 * n:
        tries += 1
        h = rng.uniform(*span)
        p = point_at(line, h)
        w = np.array([p[0], p[1], 0.0])
        s = rng.uniform(-t, t) / np.linalg.norm(w)
        q = p + s * w + rng.uniform(-delta, delta, size=3)
        if float(distance_to_line(line, q)) > t:
            continue
        if distance_to_regulus(line, q) > delta:
            continue
        out.append(q)
    return np.array(out)


def strip_projection_sandwich(core: SL2Line, other: SL2Line, delta: float, t: float,
                              n: int = 1000, R: float = DEFAULT_R, rng=None,
                              n_bins: int = 16) -> dict:
    """Measure the inner and outer constants of pi_core(S(other)) vs the graph.

    ``C`` is the largest vertical offset of a projected strip sample from the
    graph of ``coeff_map(core, other)``, in units of delta. ``c`` is the
    smallest, over height bins, two-sided vertical reach of the projected
    samples, also in units of delta.
    """
    pts = sample_regulus_strip(other, delta, t, n, R, rng)
    curve = coeff_map(core, other, R)
    proj = twisted_project(core, pts)
    off = proj[:, 1] - curve(proj[:, 0])
    C = float(np.max(np.abs(off)) / delta)
    edges = np.linspace(proj[:, 0].min(), proj[:, 0].max(), n_bins + 1)
    which = np.clip(np.searchsorted(edges, proj[:, 0]) - 1, 0, n_bins - 1)
    reach = []
    for k in range(n_bins):
        o = off[which == k]
        if o.size:
            reach.append(min(max(o.max(), 0.0), max(-o.min(), 0.0)))
    c = float(min(reach) / delta) if reach else 0.0
    return {"c": c, "C": C, "n": int(len(pts))}


# -- light-cone projections -------------------------------------------------------

def gamma(theta: float) -> np.ndarray:
    v = np.array([1.0, -theta, theta * theta / 2.0])
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class ConeFrame:
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ThetaOutOfRange(f"theta={self.theta} outside [0, 1]")

    @property
    def gamma(self) -> np.ndarray:
        return gamma(self.theta)

    @property
    def chart_rows(self) -> np.ndarray:
        th = self.theta
        return np.array([[th, 1.0, 0.0], [0.0, th / 2.0, 1.0]])

    def project(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        g = self.gamma
        return p - np.multiply.outer(p @ g, g) if p.ndim > 1 else p - (p @ g) * g

    def chart(self, q) -> np.ndarray:
        return np.asarray(q, dtype=float) @ self.chart_rows.T


def fo_line_of_point(p, R: float = DEFAULT_R) -> SL2Line:
    p1, p2, p3 = map(float, p)
    if abs(p3) < 1.0 / R:
        raise HeightTooSmall(f"|p3| = {abs(p3)} < 1/R = {1.0 / R}")
    return SL2Line(p3 - 2 * p1 * p2 / p3, -2 * p2 / p3, p1 / p3, 1 / p3)


def fo_project(theta: float, p):
    """Return (pi_theta(p), A_theta(pi_theta(p)))."""
    frame = ConeFrame(theta)
    q = frame.project(p)
    return q, frame.chart(q)


class ChartConvention(enum.Enum):
    DIRECT = "direct"
    SWAPPED = "swapped"
    AFFINE_FIT = "affine_fit"


def _slice_point(p, theta: float, R: float) -> np.ndarray:
    l = fo_line_of_point(p, R)
    return np.array([l.a + l.c * theta, l.b + l.d * theta])


@dataclass(frozen=True)
class AffineChartFit:
    """Least-squares affine map chart -> slice coordinates at a fixed theta."""

    theta: float
    matrix: np.ndarray  # shape (2, 3): [linear | offset]
    rms: float
    max_residual: float
    n: int

    def apply(self, chart) -> np.ndarray:
        chart = np.asarray(chart, dtype=float)
        return chart @ self.matrix[:, :2].T + self.matrix[:, 2]


def _sample_fo_domain(n: int, R: float, rng) -> np.ndarray:
    pts = []
    while len(pts) < n:
        p = rng.uniform(-R, R, size=3)
        if np.linalg.norm(p) <= R and abs(p[2]) >= 1.0 / R:
            pts.append(p)
    return np.array(pts)


def fit_fo_chart(theta: float, n: int = 1000, R: float = DEFAULT_R, rng=None) -> AffineChartFit:
    rng = np.random.default_rng(rng)
    frame = ConeFrame(theta)
    P = _sample_fo_domain(n, R, rng)
    X = frame.chart(frame.project(P))
    Y = np.array([_slice_point(p, theta, R) for p in P])
    design = np.column_stack([X, np.ones(len(X))])
    sol, *_ = np.linalg.lstsq(design, Y, rcond=None)
    resid = np.linalg.norm(design @ sol - Y, axis=1)
    return AffineChartFit(theta, sol.T.copy(), float(np.sqrt(np.mean(resid**2))),
                          float(resid.max()), n)


def fo_identity_residual(p, theta: float, convention=ChartConvention.DIRECT,
                         R: float = DEFAULT_R, fit: AffineChartFit | None = None) -> float:
    """Distance between l^p ∩ {z = theta} and (A_theta(pi_theta(p)), theta).

    The slice plane is identified with R^2 through ``convention``; for
    AFFINE_FIT the map is fitted at ``theta`` unless ``fit`` is supplied.
    """
    convention = ChartConvention(convention)
    target = _slice_point(p, theta, R)
    _, chart = fo_project(theta, p)
    if convention is ChartConvention.DIRECT:
        got = chart
    elif convention is ChartConvention.SWAPPED:
        got = chart[::-1]
    else:
        if fit is None or fit.theta != theta:
            fit = fit_fo_chart(theta, R=R, rng=0)
        got = fit.apply(chart)
    return float(np.linalg.norm(got - target))


def fo_lipschitz_probe(n: int = 2000, R: float = DEFAULT_R, h: float = 1e-6, rng=None) -> float:
    """Largest finite-difference ratio |l^p - l^q| / |p - q| on the domain."""
    rng = np.random.default_rng(rng)
    P = _sample_fo_domain(n, R, rng)
    worst = 0.0
    for p in P:
        step = rng.normal(size=3)
        step *= h / np.linalg.norm(step)
        q = p + step
        if abs(q[2]) < 1.0 / R:
            continue
        d = np.linalg.norm(fo_line_of_point(p, R).params - fo_line_of_point(q, R).params)
        worst = max(worst, d / h)
    return float(worst)
