import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from morphwalk.errors import EmptyDomainError, InputError, UnsupportedError
from morphwalk.geometry import (
    Ball,
    Box,
    LShape,
    Partition,
    Polyline2D,
    StarShaped,
    contains,
    diameter_estimate,
    domain_from_config,
    domain_stats,
    iso_ratio_estimate,
    load_polyline_csv,
    midpoint_probe,
    sample_uniform,
    set_distance,
    volume_mc,
    winding_grid,
    winding_numbers,
)
from morphwalk.rng import stream

from oracles import brute_min_distance, max_vertex_distance, point_in_polygon_even_odd, shoelace

UNIT_SQUARE = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]


# ---- contains


def test_ball_contains_origin():
    assert contains(Ball([0.0, 0.0], 1.0), [0.0, 0.0])


def test_l_shape_excludes_removed_quadrant():
    assert not contains(LShape(), [0.75, 0.75])
    assert contains(LShape(), [0.25, 0.75])
    assert contains(LShape(), [0.5, 0.5])


def test_square_polyline_contains_center():
    assert contains(Polyline2D(UNIT_SQUARE), [0.5, 0.5])


@pytest.mark.parametrize("x", [[0.0], [0.0, 0.0, 0.0], [[0.0, 0.0]]])
def test_dimension_mismatch_is_input_error(x):
    with pytest.raises(InputError):
        contains(Ball([0.0, 0.0], 1.0), x)


def test_non_finite_point_rejected():
    with pytest.raises(InputError):
        contains(Box([0, 0], [1, 1]), [math.nan, 0.5])


def test_contains_many_shape_check():
    with pytest.raises(InputError):
        Box([0, 0], [1, 1]).contains_many(np.zeros((3, 3)))


def test_high_dimensional_ball():
    b = Ball(np.zeros(5), 2.0)
    assert contains(b, [1, 1, 1, 1, 0])
    assert not contains(b, [1, 1, 1, 1, 0.1])


def test_star_shaped_membership():
    s = StarShaped([0, 0], np.full(256, 0.5))
    assert contains(s, [0.3, 0.3])
    assert not contains(s, [0.4, 0.4])
    assert s.radius_at(0.123) == pytest.approx(0.5)


def test_star_shaped_requires_positive_radii():
    with pytest.raises(InputError):
        StarShaped([0, 0], [1.0, 0.0, 1.0])


def test_star_from_function_interpolates():
    s = StarShaped.from_function([0, 0], lambda a: 1 + 0.3 * math.cos(3 * a))
    assert s.radii.size == 256
    assert s.radius_at(0.0) == pytest.approx(1.3)


def test_polyline_must_be_closed_simple_and_non_degenerate():
    with pytest.raises(InputError, match="closed"):
        Polyline2D([[0, 0], [1, 0], [1, 1], [0, 1]])
    with pytest.raises(InputError, match="self-intersecting"):
        Polyline2D([[0, 0], [2, 0], [2, 2], [1, -1], [0, 2], [0, 0]])
    with pytest.raises(InputError, match="zero area"):
        Polyline2D([[0, 0], [1, 0], [2, 0], [0, 0]])


def test_polyline_orientation_normalized():
    cw = Polyline2D(UNIT_SQUARE[::-1])
    assert cw.area == pytest.approx(1.0)
    assert cw.convex
    assert not Polyline2D(LShape().vertices()).convex


def test_polyline_winding_agrees_with_analytic_membership(rng):
    pts = rng.uniform(-0.2, 1.2, size=(10_000, 2))
    square = Polyline2D(UNIT_SQUARE)
    lpoly = Polyline2D(LShape().vertices())
    assert np.array_equal(square.contains_many(pts), Box([0, 0], [1, 1]).contains_many(pts))
    assert np.array_equal(lpoly.contains_many(pts), LShape().contains_many(pts))


def test_winding_matches_even_odd_oracle(rng):
    a = np.linspace(0, 2 * np.pi, 41)
    r = 1 + 0.4 * np.sin(5 * a)
    poly = np.column_stack([r * np.cos(a), r * np.sin(a)])
    poly[-1] = poly[0]
    pts = rng.uniform(-1.5, 1.5, size=(500, 2))
    got = winding_numbers(poly, pts) != 0
    want = np.array([point_in_polygon_even_odd(poly.tolist(), p) for p in pts])
    assert np.array_equal(got, want)


def test_winding_grid_matches_pointwise():
    poly = LShape().vertices() * 0.9 + 0.05
    xs = np.linspace(-0.1, 1.1, 37)
    ys = np.linspace(-0.1, 1.1, 29)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    a = winding_grid(poly, xs, ys) != 0
    b = (winding_numbers(poly, pts) != 0).reshape(X.shape)
    assert np.array_equal(a, b)


def test_large_polygon_query_uses_index_consistently(rng):
    a = np.linspace(0, 2 * np.pi, 801)
    poly = np.column_stack([np.cos(a), np.sin(a)])
    poly[-1] = poly[0]
    dom = Polyline2D(poly)
    pts = rng.uniform(-1.1, 1.1, size=(5000, 2))
    fast = dom.contains_many(pts)
    slow = winding_numbers(dom.vertices, pts) != 0
    assert np.array_equal(fast, slow)


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=20))
def test_contains_is_deterministic(points):
    pts = np.array(points)
    for dom in (Ball([0, 0], 1), LShape(), Polyline2D(UNIT_SQUARE)):
        assert np.array_equal(dom.contains_many(pts), dom.contains_many(pts))


# ---- volume_mc


def test_unit_box_volume_is_exact():
    est, err = volume_mc(Box([0, 0], [1, 1]), 1_000_000, seed=1)
    assert est == 1.0
    assert err == 0.0


def test_disk_volume_within_three_stderr():
    est, err = volume_mc(Ball([0, 0], 1), 1_000_000, seed=2)
    assert abs(est - math.pi) <= 3 * err


def test_l_shape_volume_within_three_stderr():
    est, err = volume_mc(LShape(), 1_000_000, seed=3)
    assert abs(est - 0.75) <= 3 * err


def test_volume_mc_requires_enough_samples():
    with pytest.raises(InputError):
        volume_mc(LShape(), 999)


def test_volume_mc_degenerate_box():
    with pytest.raises(InputError):
        volume_mc(Box([0, 0], [1, 0]), 1000)


def test_volume_mc_deterministic():
    assert volume_mc(LShape(), 20_000, seed=9) == volume_mc(LShape(), 20_000, seed=9)


@given(st.floats(0.1, 3.0), st.integers(0, 50))
def test_volume_never_exceeds_box(radius, seed):
    dom = Ball([0.3, -0.2], radius)
    est, err = volume_mc(dom, 2000, seed)
    assert 0 <= est <= dom.box_volume
    assert err >= 0


# ---- diameter / iso ratio


def test_unit_box_diameter():
    assert diameter_estimate(Box([0, 0], [1, 1]), seed=0) == pytest.approx(math.sqrt(2), rel=0.01)


def test_ball_diameter():
    assert diameter_estimate(Ball([0, 0], 1), seed=0) == pytest.approx(2.0, rel=0.01)


def test_l_shape_diameter_matches_vertex_oracle():
    oracle = max_vertex_distance(LShape().vertices()[:-1])
    assert oracle == pytest.approx(math.sqrt(2))
    assert diameter_estimate(LShape(), seed=0) == pytest.approx(oracle, rel=0.01)


def test_diameter_capped_by_box_diagonal():
    for dom in (Box([0, 0], [2, 1]), Ball([0, 0, 0], 1), LShape()):
        assert diameter_estimate(dom, n=512, seed=4) <= dom.box_diagonal + 1e-12


def test_diameter_needs_two_samples():
    with pytest.raises(InputError):
        diameter_estimate(Box([0, 0], [1, 1]), n=1)


def test_diameter_empty_domain():
    class Nothing(Box):
        def _contains(self, pts):
            return np.zeros(len(pts), dtype=bool)

    with pytest.raises(EmptyDomainError):
        diameter_estimate(Nothing([0, 0], [1, 1]), n=10)


def test_iso_ratio_box_disk_l_shape():
    assert iso_ratio_estimate(Box([0, 0], [1, 1])) == 4.0
    assert iso_ratio_estimate(Ball([0, 0], 1), seed=1) == pytest.approx(2.0, rel=0.005)
    oracle = 4.0 / shoelace(LShape().vertices()[:-1])
    assert oracle == pytest.approx(16 / 3)
    assert iso_ratio_estimate(LShape(), seed=1) == pytest.approx(oracle, rel=0.005)


def test_iso_ratio_unsupported_kind():
    class Blob(Box):
        kind = "blob"

        def perimeter(self):
            raise UnsupportedError("no perimeter")

    with pytest.raises(UnsupportedError):
        iso_ratio_estimate(Blob([0, 0], [1, 1]), n=1000)


def test_domain_stats_fields():
    s = domain_stats(LShape(), n=20_000, seed=0)
    assert s.volume > 0 and s.volume_stderr >= 0 and s.diameter >= 0
    assert s.iso_ratio == pytest.approx(4 / s.volume)
    assert s.as_dict()["n_samples"] == 20_000


# ---- set_distance


def test_set_distance_single_points():
    assert set_distance([[0, 0]], [[3, 4]]) == 5.0


def test_set_distance_overlap_is_zero():
    pts = np.random.default_rng(0).uniform(size=(50, 2))
    assert set_distance(pts, pts[::-1]) == 0.0


def test_set_distance_strips_match_brute_force():
    r = stream(5, "strips")
    a = np.column_stack([r.uniform(0, 0.45, 10_000), r.uniform(0, 1, 10_000)])
    b = np.column_stack([r.uniform(0.55, 1, 10_000), r.uniform(0, 1, 10_000)])
    d = set_distance(a, b)
    assert d == pytest.approx(brute_min_distance(a, b), abs=1e-12)
    assert abs(d - 0.1) <= 0.01


def test_set_distance_empty_is_error():
    with pytest.raises(InputError):
        set_distance(np.empty((0, 2)), [[0, 0]])


# ---- sampling, convexity, partitions


def test_sample_uniform_stays_inside():
    pts = sample_uniform(LShape(), 5000, stream(0, "t"))
    assert pts.shape == (5000, 2)
    assert LShape().contains_many(pts).all()


def test_midpoint_probe_detects_convexity():
    assert midpoint_probe(Ball([0, 0], 1)) == 0
    assert midpoint_probe(Box([0, 0], [1, 2])) == 0
    assert midpoint_probe(LShape()) > 0


def test_slab_partition_labels_and_gap():
    p = Partition.slab([2.0, 0.0], 0.9, 1.1)
    assert p.gap == pytest.approx(0.1)
    lab = p.labels([[0.1, 0], [0.5, 0.3], [0.9, 0.2]])
    assert lab.tolist() == [1, 3, 2]


def test_partition_from_rules():
    p = Partition.from_rules(lambda q: q[:, 0] < 0.3, lambda q: q[:, 0] > 0.7)
    assert p.labels([[0.1, 0], [0.5, 0], [0.8, 0]]).tolist() == [1, 3, 2]


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 1))
def test_every_point_gets_one_label(nx, ny, lo, width):
    if math.hypot(nx, ny) < 1e-6:
        nx = 1.0
    p = Partition.slab([nx, ny], lo, lo + width)
    pts = np.random.default_rng(0).uniform(-2, 2, size=(200, 2))
    lab = p.labels(pts)
    assert set(np.unique(lab)) <= {1, 2, 3}
    assert lab.shape == (200,)


# ---- config literals


def test_domain_from_config_round_trip(tmp_path):
    doms = [
        Ball([0.5, 0], 2),
        Box([0, 0], [1, 2]),
        LShape(),
        StarShaped([0, 0], [1, 1.2, 0.9, 1.1]),
        Polyline2D(UNIT_SQUARE),
    ]
    pts = np.random.default_rng(1).uniform(-2, 2, size=(500, 2))
    for d in doms:
        again = domain_from_config(d.describe())
        assert np.array_equal(again.contains_many(pts), d.contains_many(pts))


def test_star_radius_expression():
    d = domain_from_config({"kind": "star", "radius_expr": "1 + 0.2*x"})
    assert d.radius_at(0.0) == pytest.approx(1.2)
    assert d.radius_at(math.pi) == pytest.approx(0.8)


def test_polyline_csv(tmp_path):
    f = tmp_path / "poly.csv"
    f.write_text("x,y\n0,0\n1,0\n1,1\n0,1\n")
    d = domain_from_config({"kind": "polyline", "file": "poly.csv"}, base_dir=tmp_path)
    assert d.area == pytest.approx(1.0)
    assert load_polyline_csv(f).contains([0.5, 0.5])


def test_domain_config_errors():
    with pytest.raises(InputError, match="unknown domain kind"):
        domain_from_config({"kind": "torus"})
    with pytest.raises(InputError, match="radiuss"):
        domain_from_config({"kind": "ball", "radiuss": 1})
    with pytest.raises(InputError):
        domain_from_config({"kind": "star"})
