import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sl2lab.decomp import (Prism, PrismSteps, audit_prisms, check_ball_condition_1d,
                           check_ball_condition_2d, check_separated, classify_dichotomy,
                           greedy_one_dim_decomposition, prism_decomposition,
                           prism_image_stats, prism_multiplicity, sample_tube,
                           segment_length_in, separated_refinement)
from sl2lab.errors import NotSeparated, PreconditionViolation, ScaleOrderViolation
from sl2lab.families import sl2_net, tball, thin_separated
from sl2lab.grid import Arrangement
from sl2lab.sl2_core import distance_to_line, make_line

# -- oracles ----------------------------------------------------------------------------


def brute_worst(pts, delta, power, scale):
    """max over data-centred dyadic balls of count / (scale (r/δ)^power), by pair counts."""
    D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    top = max(D.max(), delta) if len(pts) > 1 else delta
    worst, r = 0.0, delta
    while True:
        counts = (D <= r * (1 + 1e-12)).sum(1)
        worst = max(worst, counts.max() / (scale * (r / delta) ** power))
        if r >= top:
            return worst
        r *= 2


def square_net(side, delta):
    ax = np.arange(0, side + 1e-12, delta)
    return np.stack(np.meshgrid(ax, ax), -1).reshape(-1, 2)


# -- prisms -----------------------------------------------------------------------------


def test_prism_geometry():
    P = Prism(np.zeros(3), np.eye(3), (0.5, 0.2, 0.1))
    v = P.vertices()
    assert v.shape == (8, 3) and np.allclose(np.ptp(v, axis=0), [0.5, 0.2, 0.1])
    assert P.contains(np.zeros((1, 3)))[0] and not P.contains([[0.3, 0, 0]])[0]
    rng = np.random.default_rng(0)
    assert np.all(P.contains(P.sample(100, rng)))


def test_prism_frames_follow_the_definition():
    l = make_line(1, 0, 0, 1)
    t, delta = 0.1, 0.01
    prisms = prism_decomposition(l, t, delta, R=1.2)
    assert prisms
    for P in prisms[:: max(1, len(prisms) // 200)]:
        ang = P.frame_angles(l)
        assert ang["v1_dot_normal"] < 1e-12
        assert ang["v2_vs_horizontal"] < 1e-12
        assert ang["v3_vs_normal"] < 1e-12
        assert ang["v1_vs_line"] <= t
        assert P.dims == (delta / t, t, delta)


def test_prism_decomposition_errors_and_degenerate():
    l = make_line(1, 0, 0, 1)
    with pytest.raises(ScaleOrderViolation):
        prism_decomposition(l, 0.5, 0.01)
    prisms = prism_decomposition(l, 0.05, 0.05, R=1.5)
    assert prisms and all(P.dims == (1.0, 0.05, 0.05) for P in prisms[:1])
    assert all(np.allclose(P.dims, (1.0, 0.05, 0.05)) for P in prisms)


def test_prism_cover_small():
    l = make_line(1, 0.1, -0.2, 0.98)
    t, delta, R = 0.1, 0.01, 1.3
    prisms = prism_decomposition(l, t, delta, R)
    audit = audit_prisms(l, prisms, t, delta, n_samples=20_000, rng=1, R=R)
    assert audit.misses == 0
    assert audit.contained and audit.max_vertex_distance <= 2 * t
    assert audit.max_multiplicity <= 16
    # each prism has volume at most δ², so covering forces count >= |N_t| / δ²
    tube_volume = math.pi * t * t * segment_length_in(l, R)
    assert len(prisms) * delta**2 >= tube_volume


def test_prism_count_within_factor_8_of_nominal():
    # count against (length)·t²/δ², i.e. 100 per unit length here; the window
    # [12, 800] per unit length is the factor-8 band around it
    l = make_line(1, 0, 0, 1)
    t, delta = 0.1, 0.01
    prisms = prism_decomposition(l, t, delta)
    per_length = len(prisms) / segment_length_in(l, 2.0)
    assert 12 <= per_length <= 800, f"{per_length:.0f} prisms per unit length"


def test_prism_samples_stay_in_double_tube():
    l = make_line(1, 0, 0, 1)
    t, delta = 0.1, 0.01
    prisms = prism_decomposition(l, t, delta, R=1.2)
    rng = np.random.default_rng(2)
    pts = np.concatenate([P.sample(5, rng) for P in prisms])
    assert np.all(distance_to_line(l, pts) <= 2 * t)


def test_prism_multiplicity_matches_direct_count():
    l = make_line(1, 0, 0, 1)
    prisms = prism_decomposition(l, 0.2, 0.04, R=1.5)
    assert prisms
    rng = np.random.default_rng(3)
    pts = sample_tube(l, 0.2, 300, rng, R=1.5)
    direct = np.sum([P.contains(pts) for P in prisms], axis=0)
    assert np.array_equal(prism_multiplicity(prisms, pts), direct)


def test_prism_image_on_core_is_centered():
    l = make_line(1, 0, 0, 1)
    t, delta = 0.1, 0.01
    P = Prism(l.point_at(0.2), np.eye(3), (delta / t, t, delta))
    from sl2lab.decomp import prism_frame
    P = Prism(P.center, prism_frame(l, P.center), P.dims)
    img = prism_image_stats(l, P, delta, t, rng=0)
    assert img.max_abs_height <= 2 * delta
    assert img.distortion <= 4
    # t = δ: the image is comparable to a δ x δ square
    Q = Prism(P.center, prism_frame(l, P.center), (1.0, 0.01, 0.01))
    sq = prism_image_stats(l, Q, 0.01, 0.01, rng=0)
    assert sq.width > 0 and sq.short_side > 0


def test_sample_tube_inside(rng):
    l = make_line(1, 0, 0, 1)
    pts = sample_tube(l, 0.1, 1000, rng, R=2.0)
    assert len(pts) == 1000
    assert np.all(distance_to_line(l, pts) <= 0.1) and np.all(np.linalg.norm(pts, axis=1) <= 2)


# -- ball conditions --------------------------------------------------------------------


def test_ball_condition_2d_examples():
    delta = 2.0**-5
    assert check_ball_condition_2d([make_line(1, 0, 0, 1)], delta).ok
    net = sl2_net(delta)
    chk = check_ball_condition_2d(net, delta, slack=4)
    assert chk.ok
    # (r/δ)^3 points in an r-ball: a cubic net of step (4π/3)^(1/3)·δ
    r = 16 * delta
    step = (4 * math.pi / 3) ** (1 / 3) * delta
    ax = np.arange(-r, r + 1e-12, step)
    ax = ax - ax.mean()
    cube = np.stack(np.meshgrid(ax, ax, ax), -1).reshape(-1, 3)
    cube = cube[np.linalg.norm(cube, axis=1) <= r]
    bad = check_ball_condition_2d(cube, delta)
    assert not bad.ok
    assert 8 <= bad.worst.ratio <= 32  # ≈ r/δ = 16 up to the ball-volume constant


def test_ball_condition_1d_examples():
    delta = 0.01
    seg = np.column_stack([np.arange(0, 1, delta), np.zeros(100), np.zeros(100)])
    assert check_ball_condition_1d(seg, delta, 1.0, slack=3).ok
    sq = square_net(0.32, delta)
    bad = check_ball_condition_1d(sq, delta, 1.0)
    assert not bad.ok and bad.worst.r >= 0.08
    assert check_ball_condition_1d(np.zeros((0, 3)), delta, 1.0).ok


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 3]))
def test_ball_worst_matches_brute_force(n, seed, d):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 0.5, (n, d))
    delta = 0.01
    got = check_ball_condition_1d(pts, delta, 1.0).worst.ratio
    assert got == pytest.approx(brute_worst(pts, delta, 1.0, 1.0))
    got2 = check_ball_condition_2d(pts, delta).worst.ratio
    r_top = max(1.0, np.linalg.norm(np.ptp(pts, axis=0)))
    assert got2 == pytest.approx(brute_worst(np.vstack([pts]), delta, 2.0, 1.0)) or r_top >= 1


# -- greedy decomposition ------------------------------------------------------------------


def test_greedy_examples():
    delta = 0.01
    # a δ-spaced row has 2⌊r/δ⌋ + 1 points in a centred r-ball, which breaks
    # the K = 1 condition, so clusters are extracted; with spacing 3δ (or with
    # K = 3 at spacing δ) every centred count is within K·r/δ and nothing is removed
    line_pts = np.column_stack([np.arange(0, 1, delta), np.zeros(100)])
    assert greedy_one_dim_decomposition(line_pts, delta, 1.0, rng=0).clusters
    for spacing, K in ((3 * delta, 1.0), (delta, 3.0)):
        row = np.column_stack([np.arange(0, 1, spacing), np.zeros(len(np.arange(0, 1, spacing)))])
        dec = greedy_one_dim_decomposition(row, delta, K, rng=0)
        assert not dec.clusters and len(dec.kept) == len(row)
    single = greedy_one_dim_decomposition(np.zeros((1, 2)), delta, 1.0, rng=0)
    assert len(single.kept) == 1 and not single.clusters
    s = 0.64
    sq = square_net(s, s / 64)
    dec = greedy_one_dim_decomposition(sq, s / 64, 4.0, rng=0)
    assert dec.clusters
    assert brute_worst(dec.Y, s / 64, 1.0, 1.0) <= 4 * 4.0
    with pytest.raises(NotSeparated):
        greedy_one_dim_decomposition(np.zeros((2, 2)), delta, 1.0)


def _random_separated(rng, d, delta):
    kind = rng.integers(3)
    if kind == 0:
        pts = rng.uniform(0, 0.2, (400, d))
    elif kind == 1:
        centres = rng.uniform(0, 1, (3, d))
        pts = np.concatenate([c + rng.normal(0, 0.03, (150, d)) for c in centres])
    else:
        pts = np.column_stack([np.linspace(0, 1, 200)] + [rng.uniform(0, 0.1, 200)] * (d - 1))
    return pts[thin_separated(pts, delta)]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([2, 3, 4]), st.sampled_from([1.0, 2.0, 4.0]))
def test_greedy_postconditions(seed, d, K):
    rng = np.random.default_rng(seed)
    delta = 0.01
    X = _random_separated(rng, d, delta)
    dec = greedy_one_dim_decomposition(X, delta, K, rng=rng)
    parts = np.concatenate([dec.kept] + dec.clusters)
    assert np.array_equal(np.sort(parts), np.arange(len(X)))
    assert brute_worst(dec.Y, delta, 1.0, 1.0) <= 4 * K if len(dec.Y) else True
    for i, z in enumerate(dec.clusters):
        assert np.all(np.linalg.norm(X[z] - X[dec.centers[i]], axis=1) <= dec.radii[i] * (1 + 1e-9))
        assert dec.radii[i] >= delta * K ** (1 / d) / 8
        m = len(dec.subsamples[i])
        assert dec.radii[i] / (4 * delta) <= m <= 4 * dec.radii[i] / delta
        assert set(dec.subsamples[i].tolist()) <= set(z.tolist())
    assert len(dec.clusters) <= len(X)


def test_greedy_deterministic():
    rng = np.random.default_rng(5)
    X = _random_separated(rng, 2, 0.01)
    a = greedy_one_dim_decomposition(X, 0.01, 2.0, rng=7).report()
    b = greedy_one_dim_decomposition(X, 0.01, 2.0, rng=7).report()
    assert a == b
    assert set(a) == {"K", "kept_fraction", "clusters", "worst_ratios"}


def test_check_separated():
    check_separated(np.array([[0.0], [0.01]]), 0.01)
    with pytest.raises(NotSeparated):
        check_separated(np.array([[0.0], [0.005]]), 0.01)


# -- refinement and dichotomy -----------------------------------------------------------------


def test_separated_refinement_examples():
    delta = 2.0**-5
    net = sl2_net(delta)[:200]
    out = separated_refinement(net, delta, 0.5)
    if check_ball_condition_2d(net, delta).ok:
        assert out.lines == net
    assert separated_refinement([], delta, 1.0).lines == []
    rho, r = 0.01, 0.16
    seg = [make_line(1 + k * rho, 0.0, 0.0, 1 / (1 + k * rho)) for k in range(16)]
    out = separated_refinement(seg, rho, r)
    assert set(map(id, out.lines)) <= set(map(id, seg))
    assert check_ball_condition_2d(out.lines, rho).ok


def test_separated_refinement_on_3d_cluster():
    rho = 0.01
    L = tball(rho, 6 * rho, dim=3)
    assert not check_ball_condition_2d(L, rho).ok
    out = separated_refinement(L, rho, 6 * rho)
    assert out.projection is not None and len(out.lines) > 0
    assert check_ball_condition_2d(out.lines, rho).ok


def test_classify_dichotomy_type_a():
    delta = 0.01
    l0 = make_line(1, 0, 0, 1)
    L = tball(delta, 20 * delta, dim=1, spacing=2.5)
    arr = Arrangement.full(L, delta)
    rep = classify_dichotomy(arr, L, l0, 20 * delta, 4.0, delta**-0.1, rng=0)
    assert rep["type"] == "A" and rep["stats"]["kept_fraction"] == 1.0


def test_classify_dichotomy_type_b():
    delta, K = 0.01, 4.0
    tau0 = 10 * delta
    l0 = make_line(1, 0, 0, 1)
    L = tball(delta, tau0, dim=2)
    arr = Arrangement.full(L, delta)
    rep = classify_dichotomy(arr, L, l0, tau0, 1.0, K, rng=0)
    assert rep["type"] == "B"
    assert tau0 / 2 <= rep["tau"] <= 4 * tau0
    assert rep["clusters"] and 0 < rep["popular_mass_fraction"] <= 1


def test_classify_dichotomy_preconditions():
    delta = 0.01
    l0 = make_line(1, 0, 0, 1)
    arr = Arrangement.full([l0], delta)
    with pytest.raises(PreconditionViolation) as ei:
        classify_dichotomy(arr, [], l0, 0.05, 1.0, 1.0)
    assert ei.value.diagnostics["n_lines"] == 0
    far = make_line(1.5, 0, 0, 1 / 1.5)  # inside B(0, 2) but 0.6 from l0 in parameters
    with pytest.raises(PreconditionViolation):
        classify_dichotomy(Arrangement.full([far], delta), [far], l0, 0.05, 1.0, 1.0)
    with pytest.raises(PreconditionViolation):
        classify_dichotomy(arr, [l0], l0, 0.5, 0.01, 1.0)
