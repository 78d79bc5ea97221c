import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sl2lab.errors import EmptyFiber, EmptyIntersection, ShadingOutsideCurve
from sl2lab.grid import (Arrangement, Shading, VoxelSet, curve_union_area, full_curve_shading,
                         full_shading, is_regular, local_angle_spread, pack, regularity_ratio,
                         regularize_shading, segment_in_ball, union_all, union_volume, unpack)
from sl2lab.sl2_core import GeneralLine, clip_to_ball, make_line, segment_length
from sl2lab.twist import Curve

from conftest import sl2_lines

# -- oracles ----------------------------------------------------------------------------


def closed_cube_hits(idx, delta, p0, p1, eps=0.0):
    """Brute-force slab test: does the closed cube, grown by eps, meet the closed segment?"""
    lo = idx * delta - eps
    hi = idx * delta + delta + eps
    v = p1 - p0
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (lo - p0) / v
        b = (hi - p0) / v
    t0 = np.where(v == 0, np.where((p0 >= lo) & (p0 <= hi), -np.inf, np.inf), np.minimum(a, b))
    t1 = np.where(v == 0, np.where((p0 >= lo) & (p0 <= hi), np.inf, -np.inf), np.maximum(a, b))
    return np.maximum(t0.max(1), 0.0) <= np.minimum(t1.min(1), 1.0)


def half_open_hit(cube, delta, line, s0, s1):
    """Exact rational test: does the half-open cube meet {base + s dir : s0 <= s <= s1}?"""
    lowers, uppers = [(Fraction(s0), True)], [(Fraction(s1), True)]
    d = Fraction(delta)
    for i, x0, v in zip(cube, line.base, line.direction):
        x0, v = Fraction(float(x0)), Fraction(float(v))
        lo, hi = int(i) * d, (int(i) + 1) * d
        if v == 0:
            if not lo <= x0 < hi:
                return False
            continue
        if v > 0:
            lowers.append(((lo - x0) / v, True))
            uppers.append(((hi - x0) / v, False))
        else:
            lowers.append(((hi - x0) / v, False))
            uppers.append(((lo - x0) / v, True))
    L = max(s for s, _ in lowers)
    U = min(s for s, _ in uppers)
    if L < U:
        return True
    return L == U and all(c for s, c in lowers if s == L) and all(c for s, c in uppers if s == U)


def exact_cubes(line, delta, R):
    s0, s1 = clip_to_ball(line, R)
    p0, p1 = segment_in_ball(line, R)
    return {tuple(c) for c in near_candidates(p0, p1, delta).tolist()
            if half_open_hit(c, delta, line, s0, s1)}


def candidate_cubes(p0, p1, delta):
    lo = np.floor(np.minimum(p0, p1) / delta).astype(int) - 1
    hi = np.floor(np.maximum(p0, p1) / delta).astype(int) + 1
    ax = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*ax, indexing="ij"), -1).reshape(-1, 3)


def near_candidates(p0, p1, delta):
    idx = candidate_cubes(p0, p1, delta)
    c = (idx + 0.5) * delta
    v = p1 - p0
    s = np.clip(((c - p0) @ v) / (v @ v), 0, 1)
    d = np.linalg.norm(c - (p0 + np.outer(s, v)), axis=1)
    return idx[d <= math.sqrt(3) / 2 * delta * (1 + 1e-9)]


# -- VoxelSet -----------------------------------------------------------------------------

index_sets = st.lists(st.tuples(*[st.integers(-50, 50)] * 3), max_size=40)


@settings(max_examples=100, deadline=None)
@given(index_sets, index_sets)
def test_voxelset_set_algebra(a, b):
    A = VoxelSet.from_indices(0.1, np.array(a).reshape(-1, 3), 3)
    B = VoxelSet.from_indices(0.1, np.array(b).reshape(-1, 3), 3)
    sa, sb = set(a), set(b)
    assert {tuple(x) for x in A.union(B).indices} == sa | sb
    assert {tuple(x) for x in A.intersection(B).indices} == sa & sb
    assert A.issubset(A.union(B))
    assert len(A) == len(sa) and A.measure == pytest.approx(len(sa) * 1e-3)
    for x in a[:5]:
        assert x in A


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(*[st.integers(-(1 << 20) + 1, (1 << 20) - 1)] * 3), min_size=1, max_size=20))
def test_pack_roundtrip(idx):
    idx = np.array(idx)
    assert np.array_equal(unpack(pack(idx), 3), idx)


def test_pack_rejects_out_of_range():
    with pytest.raises(ValueError):
        pack(np.array([[1 << 20, 0, 0]]))


def test_voxelset_dump_roundtrip(tmp_path):
    V = VoxelSet.from_indices(0.125, np.array([[0, 1, 2], [-3, 4, 5]]), 3)
    p = tmp_path / "v.txt"
    V.dump(p)
    assert p.read_text().splitlines()[0] == "delta=0.125 dims=3"
    assert VoxelSet.load(p) == V
    W = VoxelSet.from_indices(0.5, np.array([[1, 2]]), 2)
    W.dump(p)
    assert VoxelSet.load(p) == W


# -- rasterization -------------------------------------------------------------------------


def test_full_shading_matches_half_open_oracle_identity_line():
    # (1,0,0,1) lies in the grid plane x = 1, where half-open semantics matter
    l = make_line(1, 0, 0, 1)
    delta = 2.0**-6
    Y = full_shading(l, delta, 2.0)
    assert {tuple(x) for x in Y.cubes.indices.tolist()} == exact_cubes(l, delta, 2.0)
    n, length = len(Y.cubes), segment_length(l, 2.0)
    assert length / (2 * delta) <= n <= 4 * length / delta


@pytest.mark.parametrize("seed", range(4))
def test_full_shading_matches_brute_force_on_64_cubed_grid(seed):
    # generic lines: every cube of a 64^3 grid tested against the segment
    rng = np.random.default_rng(seed)
    delta, R = 1.0 / 32, 1.0
    a, b, c = rng.uniform(-0.4, 0.4, 3) + np.array([0.6, 0, 0])
    l = make_line(a, b, c, (1 + b * c) / a)
    p0, p1 = segment_in_ball(l, R)
    ax = np.arange(-32, 32)
    grid = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    want = grid[closed_cube_hits(grid, delta, p0, p1)]
    got = full_shading(l, delta, R).cubes
    assert got == VoxelSet.from_indices(delta, want, 3)


@settings(max_examples=25, deadline=None)
@given(sl2_lines(bound=1.0), st.sampled_from([2.0**-3, 2.0**-4, 2.0**-5]))
def test_full_shading_half_open_property(line, delta):
    if clip_to_ball(line, 2.0) is None:
        return
    got = {tuple(x) for x in full_shading(line, delta, 2.0).cubes.indices.tolist()}
    want = exact_cubes(line, delta, 2.0)
    # crossings within 1e-9 δ of a grid plane are resolved as lying on it, so
    # disagreements may only involve cubes touched within that tolerance
    p0, p1 = segment_in_ball(line, 2.0)
    eps = 1e-8 * delta
    extra = np.array(sorted(got - want)).reshape(-1, 3)
    missing = np.array(sorted(want - got)).reshape(-1, 3)
    assert np.all(closed_cube_hits(extra, delta, p0, p1, eps))
    assert not np.any(closed_cube_hits(missing, delta, p0, p1, -eps))


@pytest.mark.parametrize("params", [(-1, 0, 1, -1), (1, 0, 0, 1), (0.5, 0.25, -1, 1.5), (2, 1, 1, 1)])
def test_full_shading_through_lattice_corners(params):
    # dyadic parameters make the line pass exactly through cube edges and corners
    line = make_line(*params)
    for delta in (0.125, 2.0**-5):
        got = {tuple(x) for x in full_shading(line, delta, 2.0).cubes.indices.tolist()}
        assert got == exact_cubes(line, delta, 2.0)


def test_full_shading_degenerate():
    with pytest.raises(EmptyIntersection):
        full_shading(make_line(3, 0, 0, 1 / 3), 0.1, 2.0)
    # δ much larger than the ball: a handful of cubes, all meeting the segment
    Y = full_shading(make_line(1, 0, 0, 1), 5.0, 2.0)
    assert 1 <= len(Y.cubes) <= 8 and Y.validate(2.0)


def test_shading_validate_and_density():
    l = make_line(1, 0, 0, 1)
    Y = full_shading(l, 2.0**-5, 2.0)
    assert Y.validate(2.0)
    assert Y.density() == pytest.approx(len(Y.cubes) * 2.0**-5)
    bad = Shading(l, Y.cubes.union(VoxelSet.from_indices(Y.cubes.delta, np.array([[0, 0, 40]]), 3)))
    assert not bad.validate(2.0)


def test_general_line_rasterizes():
    g = GeneralLine((0.25, 0.0, 0.0), (0.5, 1.0, 0.0))
    Y = full_shading(g, 2.0**-5, 1.0)
    assert Y.validate(1.0)
    assert set(Y.cubes.indices[:, 2].tolist()) <= {0, -1}


# -- regularization -------------------------------------------------------------------------


def _foot(line, cubes, R=2.0):
    p0, p1 = segment_in_ball(line, R)
    v = p1 - p0
    return ((cubes.centers - p0) @ v) / (v @ v)


def test_regularize_uniform_is_identity():
    l = make_line(1, 0.2, 0.1, 1.02)
    delta = 2.0**-6
    Y = full_shading(l, delta)
    out = regularize_shading(l, Y, delta)
    assert out.shading.cubes == Y.cubes
    assert is_regular(out.shading, len(Y.cubes), out.C, delta)


def test_regularize_half_support_is_identity():
    l = make_line(1, 0.2, 0.1, 1.02)
    delta = 2.0**-6
    full = full_shading(l, delta)
    Y = Shading(l, full.cubes.subset(_foot(l, full.cubes) < 0.5))
    out = regularize_shading(l, Y, delta)
    assert out.shading.cubes == Y.cubes
    assert is_regular(out.shading, len(Y.cubes), out.C, delta)


def test_regularize_bulk_plus_isolated():
    l = make_line(1, 0.2, 0.1, 1.02)
    delta = 2.0**-6
    full = full_shading(l, delta)
    u = _foot(l, full.cubes)
    bulk = u < 0.25
    rest = np.flatnonzero(~bulk)
    n_iso = int(round(0.1 / 0.9 * bulk.sum()))
    iso = rest[np.linspace(len(rest) // 8, len(rest) - 1, n_iso).astype(int)]
    mask = bulk.copy()
    mask[iso] = True
    Y = Shading(l, full.cubes.subset(mask))
    out = regularize_shading(l, Y, delta)
    Yp = out.shading.cubes
    assert Yp.issubset(Y.cubes)
    assert 2 * len(Yp) >= len(Y.cubes)
    assert is_regular(out.shading, len(Y.cubes), out.C, delta)
    assert full.cubes.subset(bulk).issubset(Yp)


def test_regularize_prunes_lonely_cubes():
    # one cube alone in each of the last three quarters of the segment; at four
    # pieces the threshold n / (4 · 4L) exceeds one cube, so all three go
    l = make_line(1, 0.2, 0.1, 1.02)
    delta = 2.0**-8
    full = full_shading(l, delta)
    u = _foot(l, full.cubes)
    bulk = u < 0.25
    iso = [int(np.argmin(np.abs(u - target))) for target in (0.4, 0.65, 0.9)]
    mask = bulk.copy()
    mask[iso] = True
    Y = Shading(l, full.cubes.subset(mask))
    out = regularize_shading(l, Y, delta)
    assert out.shading.cubes == full.cubes.subset(bulk)
    assert is_regular(out.shading, len(Y.cubes), out.C, delta)


def test_regularize_empty():
    l = make_line(1, 0, 0, 1)
    out = regularize_shading(l, Shading(l, VoxelSet.empty(0.1)), 0.1)
    assert len(out.shading.cubes) == 0


def test_regularity_ratio_single_cube():
    l = make_line(1, 0, 0, 1)
    Y = full_shading(l, 0.25, 2.0)
    single = Shading(l, Y.cubes.subset(np.arange(len(Y.cubes)) == 0))
    # one cube: the worst ball is the largest radius holding a single cube
    assert regularity_ratio(single, 1, 0.25, 2.0) == pytest.approx(2.0 / math.log(4))


# -- arrangements ---------------------------------------------------------------------------


def test_union_volume_examples():
    delta = 2.0**-5
    l1 = make_line(1, 0, 0, 1)
    l2 = make_line(-1, 0, 0, -1)
    one = Arrangement.full([l1], delta)
    assert union_volume(one) == one.shadings[0].measure
    two = Arrangement.full([l1, l2], delta)
    assert not two.shadings[0].cubes.intersection(two.shadings[1].cubes).keys.size
    assert union_volume(two) == pytest.approx(two.shadings[0].measure + two.shadings[1].measure)
    assert union_volume(Arrangement.full([l1, l1], delta)) == union_volume(one)
    s = two.summary()
    assert set(s) == {"delta", "R", "n_lines", "densities", "volume"}
    json.dumps(s)


@settings(max_examples=20, deadline=None)
@given(st.lists(sl2_lines(bound=1.0), min_size=1, max_size=5), sl2_lines(bound=1.0))
def test_union_volume_monotone(lines, extra):
    def vol(ls):
        ok = [l for l in ls if segment_length(l, 2.0) > 0]
        return union_volume(Arrangement.full(ok, 2.0**-4)) if ok else 0.0
    assert vol(lines + [extra]) >= vol(lines)


def test_local_angle_spread_examples():
    delta = 2.0**-6
    l1 = make_line(1, 0, 0, 1)
    l2 = make_line(1, 0, 0.2, 1)
    arr1 = Arrangement.full([l1], delta)
    x = np.array([64, 0, 0])  # the cube holding the common point (1, 0, 0)
    assert local_angle_spread(arr1, x) == delta
    arr = Arrangement.full([l1, l2], delta)
    want = delta + math.acos(2 / math.sqrt(2 * 2.04))
    assert local_angle_spread(arr, x) == pytest.approx(want, abs=1e-12)
    assert local_angle_spread(arr, x) == pytest.approx(delta + 0.1400, abs=1e-3)
    with pytest.raises(EmptyFiber):
        local_angle_spread(arr, np.array([0, 0, 100]))


def test_spread_map_is_a_function_of_the_cube(rng):
    delta = 2.0**-5
    lines = [make_line(1, b, c, (1 + b * c)) for b, c in rng.uniform(-0.1, 0.1, (12, 2))]
    arr = Arrangement.full(lines, delta)
    keys, r = arr.spread_map()
    assert np.all(np.diff(keys) > 0)
    pick = keys[rng.choice(len(keys), 50, replace=False)]
    k2, r2 = arr.spread_map(pick)
    assert np.array_equal(k2, pick)
    assert np.array_equal(r2, r[np.searchsorted(keys, pick)])
    for key, val in zip(k2[:20], r2[:20]):
        assert local_angle_spread(arr, unpack(np.array([key]), 3)[0]) == pytest.approx(val)
    with pytest.raises(EmptyFiber):
        arr.spread_map(np.array([pack(np.array([[0, 0, 500]]))[0]]))


# -- curves ------------------------------------------------------------------------------


def test_curve_union_area_examples():
    delta, R = 2.0**-6, 2.0
    curves = [Curve(0, 0, 3 * delta * k, R) for k in range(10)]
    sh = [full_curve_shading(c, delta) for c in curves]
    area = curve_union_area(curves, sh, delta)
    nominal = len(curves) * 2 * R * 2 * delta
    assert nominal / 2 <= area <= 2 * nominal
    one = curve_union_area(curves[:1], sh[:1], delta)
    assert 2 * R * 2 * delta / 2 <= one <= 2 * (2 * R * 2 * delta)
    assert curve_union_area(curves + curves, sh + sh, delta) == area


def test_curve_shading_contained_and_rejects_foreign():
    delta = 2.0**-5
    f, g = Curve(0.5, 0.1, 0.0), Curve(0.5, 0.1, 0.5)
    Yf = full_curve_shading(f, delta)
    assert len(Yf) > 0
    with pytest.raises(ShadingOutsideCurve):
        curve_union_area([g], [Yf], delta)
    # every square of the shading has its centre within δ of the graph
    assert np.all(f.distance(Yf.centers) <= delta)


def test_union_all_empty():
    assert len(union_all([], 0.1, 3)) == 0
