import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LinearRing

from morphwalk.errors import BlowUpError, InputError, TopologyError
from morphwalk.geometry import Ball, Box, LShape, Polyline2D
from morphwalk.flow import (
    FlowConfig,
    bilipschitz_check,
    build_map,
    flux_residual,
    inverse_membership,
    jacobian_dets,
    resample_polyline,
    velocity,
)
from morphwalk.pde import INSIDE

from oracles import stagnation_map

DISK = Ball([0.0, 0.0], 1.0)
SQUARE = Box([0.0, 0.0], [1.0, 1.0])


@pytest.fixture(scope="module")
def stagnation():
    return build_map(FlowConfig(DISK, "(x^2 - y^2)/2", steps=100, h=0.01))


@pytest.fixture(scope="module")
def translation():
    return build_map(FlowConfig(DISK, "x", steps=10, h=0.02))


@pytest.fixture(scope="module")
def generic():
    return build_map(FlowConfig(DISK, "x^2*sin(y)*t", steps=50, h=0.02))


# ---- velocity


def test_velocity_of_linear_potential_is_constant():
    v = velocity(0.0, LShape(), "x", 0.02)
    ins = v.mask == INSIDE
    assert np.allclose(v.vx.values[ins], 1.0)
    assert np.allclose(v.vy.values[ins], 0.0)


def test_velocity_of_saddle():
    errs = []
    for h in (0.04, 0.02):
        v = velocity(0.0, DISK, "(x^2 - y^2)/2", h)
        X, Y = v.grid.mesh()
        ins = v.mask == INSIDE
        errs.append(max(np.max(np.abs(v.vx.values - X)[ins]), np.max(np.abs(v.vy.values + Y)[ins])))
    assert errs[1] <= 1e-9


def test_velocity_of_x_squared_is_divergence_free_inside():
    v = velocity(0.0, DISK, "x^2", 0.01)
    X, Y = v.grid.mesh()
    h = 0.01
    ins = v.mask == INSIDE
    assert np.max(np.abs(v.divergence_nodes()[ins])) <= 0.05
    wide = np.gradient(v.vx.values, h, axis=0) + np.gradient(v.vy.values, h, axis=1)
    assert np.max(np.abs(wide[ins & (np.hypot(X, Y) <= 0.9)])) <= 0.05


def test_velocity_dilation_keeps_domain_harmonic():
    v, info = velocity(0.0, DISK, "x^2", 0.02, dilation=3, full_output=True)
    member = info["member"]
    assert np.all(info["mask"].mask[member] == INSIDE)
    assert v.grid.same_as(info["w"].grid)


# ---- flux


def test_translation_flux_cancels():
    a = np.linspace(0, 2 * np.pi, 200)
    ring = np.column_stack([np.cos(a) + 0.3 * np.cos(3 * a), np.sin(a)])
    ring[-1] = ring[0]
    res = flux_residual(ring, lambda p: np.tile([1.0, 0.0], (len(p), 1)))
    assert abs(res.flux) <= 1e-6
    assert res.normalized <= 1e-6


def test_radial_field_flux_on_circle():
    a = np.linspace(0, 2 * np.pi, 4001)
    ring = np.column_stack([np.cos(a), np.sin(a)])
    ring[-1] = ring[0]
    res = flux_residual(ring, lambda p: p)
    # midpoint quadrature on the inscribed polygon: exact value is its doubled area
    poly_area = 0.5 * 4000 * math.sin(2 * math.pi / 4000)
    assert res.flux == pytest.approx(2 * poly_area, rel=1e-12)
    assert res.flux == pytest.approx(2 * math.pi, rel=1e-5)


def test_flux_orientation_independent():
    ring = SQUARE.boundary_polyline(0.1)
    f1 = flux_residual(ring, lambda p: p).flux
    f2 = flux_residual(ring[::-1], lambda p: p).flux
    assert f1 == pytest.approx(f2) == pytest.approx(2.0)


def test_flux_open_polyline_rejected():
    with pytest.raises(InputError):
        flux_residual([[0, 0], [1, 0], [1, 1], [0, 1]], lambda p: p)


def test_realized_flux_decreases_with_h():
    res = []
    for h in (0.04, 0.02):
        v = velocity(0.0, DISK, "(x^2 - y^2)/2 + x^2", h, dilation=3)
        res.append(flux_residual(DISK.boundary_polyline(h), v).normalized)
    assert res[1] < res[0]
    assert res[1] <= 0.02


# ---- build_map


def test_zero_potential_is_identity():
    m = build_map(FlowConfig(DISK, "0", steps=3, h=0.05))
    assert np.array_equal(m.images, m.seeds)
    assert np.array_equal(m.jacobians[-1], np.broadcast_to(np.eye(2), m.jacobians[-1].shape))


def test_translation_map(translation):
    assert np.max(np.abs(translation.images - (translation.seeds + [1.0, 0.0]))) <= 1e-6
    assert np.all(jacobian_dets(translation).variational == 1.0)
    assert np.array_equal(translation.jacobians[0][0], np.eye(2))


def test_stagnation_matches_closed_form(stagnation):
    assert np.max(np.abs(stagnation.images - stagnation_map(stagnation.seeds))) <= 1e-4
    dets = jacobian_dets(stagnation)
    assert np.all(np.abs(dets.variational - 1) <= 1e-3)
    assert np.nanmax(np.abs(dets.finite_difference - 1)) <= 1e-3


def test_stagnation_jacobian_is_diagonal_exponential(stagnation):
    J = stagnation.jacobians[-1]
    assert np.allclose(J, np.diag([math.e, 1 / math.e]), atol=1e-6)


def test_boundary_stays_closed_and_simple(generic):
    for b in generic.boundaries:
        assert np.allclose(b[0], b[-1])
        assert LinearRing(b).is_simple


def test_resampled_spacing():
    h = 0.05
    a = np.sort(np.random.default_rng(0).uniform(0, 2 * np.pi, 300))
    ring = np.column_stack([np.cos(a), np.sin(a)])
    ring = np.vstack([ring, ring[:1]])
    out = resample_polyline(ring, h)
    seg = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert seg.max() <= 2 * h + 1e-12
    assert seg[:-1].min() >= h / 2 - 1e-12


def test_generic_det_and_flux(generic):
    dets = jacobian_dets(generic)
    assert dets.max_deviation <= 1e-2
    fd = dets.finite_difference[np.isfinite(dets.finite_difference)]
    assert np.median(np.abs(fd - 1)) <= 2e-3
    assert max(f.normalized for f in generic.flux) <= 10 * 0.02


def test_generic_refinement_reduces_fd_drift(generic):
    fine = build_map(FlowConfig(DISK, "x^2*sin(y)*t", steps=100, h=0.01, seed_spacing=0.025))
    def med(m):
        fd = jacobian_dets(m).finite_difference
        return float(np.median(np.abs(fd[np.isfinite(fd)] - 1)))

    assert med(fine) * 1.5 <= med(generic)


def test_non_convex_base_rejected():
    with pytest.raises(InputError, match="convex"):
        build_map(FlowConfig(LShape(), "x", steps=1, h=0.05))


def test_blow_up_names_step():
    with pytest.raises(BlowUpError) as exc:
        build_map(FlowConfig(DISK, "x*exp(40*t)", steps=2, h=0.05))
    assert exc.value.step == 1


def test_non_simple_boundary_is_topology_error():
    bad = Polyline2D([[0, 0], [2, 0], [2, 2], [1, -1], [0, 2], [0, 0]], check_simple=False)
    with pytest.raises(TopologyError):
        build_map(FlowConfig(bad, "x", steps=1, h=0.05, check_convex=False))


def test_config_validation():
    with pytest.raises(InputError):
        FlowConfig(DISK, "x", steps=0)
    with pytest.raises(InputError):
        FlowConfig(Ball([0, 0, 0], 1), "x")
    with pytest.raises(InputError):
        FlowConfig(DISK, "x", h=-1)


# ---- inverse membership


def test_inverse_membership_identity():
    m = build_map(FlowConfig(DISK, "0", steps=2, h=0.05))
    pts = np.random.default_rng(3).uniform(-1.2, 1.2, size=(500, 2))
    assert np.array_equal(m.inverse_membership(pts), DISK.contains_many(pts))


def test_inverse_membership_shifted_square():
    m = build_map(FlowConfig(SQUARE, "x", steps=4, h=0.02))
    assert inverse_membership(m, [1.5, 0.5]) is True
    assert np.allclose(m.inverse([[1.5, 0.5]]), [[0.5, 0.5]], atol=1e-9)
    assert inverse_membership(m, [0.5, 0.5]) is False


def test_far_points_are_outside(stagnation):
    assert not inverse_membership(stagnation, [40.0, 40.0])


def test_round_trip(generic):
    rng = np.random.default_rng(11)
    pts = rng.uniform(-0.9, 0.9, size=(3000, 2))
    pts = pts[np.hypot(*pts.T) < 0.9][:1000]
    assert len(pts) == 1000
    back = generic.inverse(generic.forward(pts))
    assert np.max(np.linalg.norm(back - pts, axis=1)) <= 10 * generic.config.h


def test_forward_agrees_with_tracked_seeds(generic):
    fwd = generic.forward(generic.seeds)
    assert np.max(np.abs(fwd - generic.images)) <= 10 * generic.config.h


@settings(max_examples=25)
@given(st.floats(-0.95, 0.95), st.floats(-0.95, 0.95))
def test_inverse_membership_consistent_with_forward_image(x, y):
    m = _small_generic()
    if x * x + y * y >= 0.9:
        return
    img = m.forward([[x, y]])
    assert np.all(np.isfinite(img))
    assert m.inverse_membership(img)[0]


_CACHE = {}


def _small_generic():
    if "m" not in _CACHE:
        _CACHE["m"] = build_map(FlowConfig(DISK, "x^2*sin(y)*t", steps=20, h=0.04))
    return _CACHE["m"]


def test_maps_without_fields_refuse_inverse(translation):
    from dataclasses import replace

    bare = replace(translation, fields=[])
    with pytest.raises(InputError):
        bare.inverse([[0.0, 0.0]])


# ---- bilipschitz


def test_translation_bilipschitz(translation):
    rep = bilipschitz_check(translation, 2000, seed=0)
    assert rep.ratio_min == pytest.approx(1.0, abs=1e-9)
    assert rep.ratio_max == pytest.approx(1.0, abs=1e-9)
    assert rep.lipschitz == pytest.approx(0.0, abs=1e-9)


def test_stagnation_bilipschitz(stagnation):
    rep = bilipschitz_check(stagnation, 10_000, seed=1)
    assert abs(rep.lipschitz - 1.0) <= 0.1
    assert rep.satisfied
    assert math.exp(-1) * 0.95 <= rep.ratio_min and rep.ratio_max <= math.e * 1.05


def test_generic_bilipschitz(generic):
    rep = bilipschitz_check(generic, 10_000, seed=2)
    assert rep.satisfied


def test_bilipschitz_deterministic(generic):
    assert bilipschitz_check(generic, 500, 7).as_tuple() == bilipschitz_check(generic, 500, 7).as_tuple()
