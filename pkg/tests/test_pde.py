import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphwalk.errors import ConvergenceError, InputError, ResourceError
from morphwalk.geometry import Ball, Box, LShape
from morphwalk.pde import (
    BOUNDARY,
    INSIDE,
    OUTSIDE,
    GridField,
    discrete_laplacian,
    dump_field_csv,
    grad_field,
    harmonic_extension,
    max_principle_gap,
    rasterize,
    solve_dirichlet,
    solve_poisson,
)
from morphwalk.potential import PotentialSpec

from oracles import disk_poisson_center, sparse_poisson

DISK = Ball([0.0, 0.0], 1.0)
SUITE = ["x", "(x^2 - y^2)/2", "x*y", "x^2", "x^2*sin(y)", "exp(x)*cos(y)", "x^3 + y^2", "5"]


def center(w):
    return float(w.interpolate([[0.0, 0.0]])[0])


def test_rasterize_unit_box_interior_nodes():
    mg = rasterize(Box([0, 0], [1, 1]), 0.25, 0.25)
    X, Y = mg.grid.mesh()
    got = sorted(zip(X[mg.inside].round(12), Y[mg.inside].round(12)))
    want = [(a, b) for a in (0.25, 0.5, 0.75) for b in (0.25, 0.5, 0.75)]
    assert got == want


def test_rasterize_disk_coarse():
    mg = rasterize(DISK, 0.5)
    X, Y = mg.grid.mesh()
    got = sorted(zip(X[mg.inside], Y[mg.inside]))
    assert got == sorted([(0.0, 0.0), (0.5, 0.0), (-0.5, 0.0), (0.0, 0.5), (0.0, -0.5)])


def test_boundary_ring_touches_inside():
    mg = rasterize(LShape(), 0.05)
    pin = np.pad(mg.inside, 1)
    touch = pin[:-2, 1:-1] | pin[2:, 1:-1] | pin[1:-1, :-2] | pin[1:-1, 2:]
    assert np.array_equal(mg.boundary, ~mg.inside & touch)
    assert set(np.unique(mg.mask)) == {OUTSIDE, BOUNDARY, INSIDE}


def test_rasterize_errors():
    with pytest.raises(InputError):
        rasterize(DISK, 0.0)
    with pytest.raises(InputError):
        rasterize(DISK, 0.1, pad=0.05)
    with pytest.raises(ResourceError):
        rasterize(DISK, 0.001, node_budget=10_000)
    with pytest.raises(InputError):
        rasterize(Ball([0, 0], 0.01), 0.5)


def test_zero_rhs_gives_zero():
    mg = rasterize(DISK, 0.05)
    w = solve_poisson(mg, np.zeros(mg.grid.dims))
    assert np.all(w.values == 0)


def test_disk_center_value():
    mg = rasterize(DISK, 0.02)
    w = solve_poisson(mg, np.ones(mg.grid.dims))
    assert abs(center(w) - disk_poisson_center(1.0)) <= 0.01


def test_disk_center_value_scaled_rhs():
    mg = rasterize(DISK, 0.02)
    w = solve_poisson(mg, np.full(mg.grid.dims, 4.0))
    assert abs(center(w) - disk_poisson_center(4.0)) <= 0.04


def test_matches_direct_sparse_solve():
    mg = rasterize(LShape(), 0.04)
    X, Y = mg.grid.mesh()
    rhs = np.sin(3 * X) + Y**2
    w = solve_poisson(mg, rhs, tol=1e-12)
    ref = sparse_poisson(mg.inside, rhs, mg.grid.h)
    assert np.max(np.abs(w.values - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))


def test_residual_meets_tolerance():
    mg = rasterize(DISK, 0.02)
    X, Y = mg.grid.mesh()
    rhs = np.cos(X) * Y
    res = solve_poisson(mg, rhs, tol=1e-8, full_output=True)
    lap = discrete_laplacian(res.field.values, mg.grid.h)
    r = (lap - rhs)[mg.inside]
    assert np.linalg.norm(r) <= 1e-8 * np.linalg.norm(rhs[mg.inside]) * 1.0001
    assert res.residual <= 1e-8
    assert np.all(res.field.values[~mg.inside] == 0)


def test_preconditioner_does_not_change_answer():
    mg = rasterize(LShape(), 0.04)
    rhs = np.ones(mg.grid.dims)
    a = solve_poisson(mg, rhs, tol=1e-11)
    b = solve_poisson(mg, rhs, tol=1e-11, precondition=False)
    assert np.max(np.abs(a.values - b.values)) < 1e-9


def test_iteration_cap_raises_convergence_error():
    mg = rasterize(DISK, 0.02)
    with pytest.raises(ConvergenceError) as exc:
        solve_poisson(mg, np.ones(mg.grid.dims), tol=1e-12, max_iter=1, precondition=False)
    assert exc.value.residual > 0
    assert exc.value.iterations == 1


def test_bad_rhs():
    mg = rasterize(DISK, 0.1)
    with pytest.raises(InputError):
        solve_poisson(mg, np.ones((3, 3)))
    rhs = np.ones(mg.grid.dims)
    rhs[mg.inside.nonzero()[0][0], mg.inside.nonzero()[1][0]] = np.nan
    with pytest.raises(InputError):
        solve_poisson(mg, rhs)
    with pytest.raises(InputError):
        solve_poisson(mg, np.ones(mg.grid.dims), tol=0)


@settings(max_examples=20)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_linearity(a, b, seed):
    mg = rasterize(LShape(), 0.05)
    rng = np.random.default_rng(seed)
    r1 = rng.standard_normal(mg.grid.dims)
    r2 = rng.standard_normal(mg.grid.dims)
    tol = 1e-10
    w1 = solve_poisson(mg, r1, tol=tol).values
    w2 = solve_poisson(mg, r2, tol=tol).values
    w = solve_poisson(mg, a * r1 + b * r2, tol=tol).values
    scale = max(1.0, np.max(np.abs(w)))
    assert np.max(np.abs(w - (a * w1 + b * w2))) <= 1e-7 * scale


def test_refinement_halves_center_error():
    errs = []
    for h in (0.04, 0.02, 0.01):
        mg = rasterize(DISK, h)
        errs.append(abs(center(solve_poisson(mg, np.ones(mg.grid.dims))) + 0.25))
    assert errs[0] / errs[1] >= 1.5
    assert errs[1] / errs[2] >= 1.5


def test_harmonic_extension_of_linear():
    h = 0.02
    mg = rasterize(DISK, h)
    X, _ = mg.grid.mesh()
    he = harmonic_extension(mg, PotentialSpec("x"), 0.0)
    assert np.max(np.abs(he.values - X)[mg.inside]) <= 2 * h


def test_harmonic_extension_of_constant():
    mg = rasterize(DISK, 0.05)
    he = harmonic_extension(mg, PotentialSpec("5"), 0.0)
    assert np.all(he.values == 5.0)


def test_harmonic_extension_of_saddle():
    h = 0.02
    mg = rasterize(DISK, h)
    X, Y = mg.grid.mesh()
    he = harmonic_extension(mg, PotentialSpec("(x^2 - y^2)/2"), 0.0)
    assert np.max(np.abs(he.values - (X**2 - Y**2) / 2)[mg.inside]) <= 2 * h


@pytest.mark.parametrize("expr", SUITE)
@pytest.mark.parametrize("domain", [DISK, LShape(), Box([-1, 0], [1, 0.5])], ids=["disk", "l", "box"])
def test_max_principle(expr, domain):
    h = 0.02
    mg = rasterize(domain, h)
    hf, _, cf = solve_dirichlet(mg, PotentialSpec(expr), 0.3)
    gap, spread = max_principle_gap(hf, cf)
    assert gap <= h * max(spread, 1.0)


def test_boundary_values_are_dirichlet_data():
    mg = rasterize(DISK, 0.05)
    hf, w, cf = solve_dirichlet(mg, PotentialSpec("x^2*sin(y)"), 0.0)
    assert np.array_equal(hf.values[mg.boundary], cf.values[mg.boundary])
    assert np.all(w.values[~mg.inside] == 0)


def test_grad_of_linear_and_constant():
    mg = rasterize(DISK, 0.05)
    X, Y = mg.grid.mesh()
    v = grad_field(GridField(mg.grid, X.copy(), mg.mask))
    assert np.allclose(v.vx.values[mg.inside], 1.0)
    assert np.allclose(v.vy.values[mg.inside], 0.0)
    v = grad_field(GridField(mg.grid, np.full(X.shape, 2.0), mg.mask))
    assert np.all(v.vx.values == 0) and np.all(v.vy.values == 0)


def test_grad_of_saddle_is_second_order():
    errs = []
    for h in (0.04, 0.02):
        mg = rasterize(DISK, h)
        X, Y = mg.grid.mesh()
        v = grad_field(GridField(mg.grid, (X**3 - Y**3) / 3, mg.mask))
        e = np.max(np.abs(v.vx.values - X**2)[mg.inside])
        errs.append(e)
    # quadratic f differences exactly; a cubic shows the h^2 rate
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    mg = rasterize(DISK, 0.02)
    X, Y = mg.grid.mesh()
    v = grad_field(GridField(mg.grid, (X**2 - Y**2) / 2, mg.mask))
    assert np.allclose(v.vx.values[mg.inside], X[mg.inside])
    assert np.allclose(v.vy.values[mg.inside], -Y[mg.inside])


def test_ring_uses_one_sided_differences():
    mg = rasterize(Box([0, 0], [1, 1]), 0.1)
    X, Y = mg.grid.mesh()
    vals = np.where(mg.mask != OUTSIDE, X, 100.0)
    v = grad_field(GridField(mg.grid, vals, mg.mask))
    ring = mg.boundary & (Y > 0.05) & (Y < 0.95)
    assert np.allclose(v.vx.values[ring], 1.0)


def test_interpolation_off_grid_is_nan():
    mg = rasterize(DISK, 0.1)
    f = GridField(mg.grid, np.ones(mg.grid.dims))
    out = f.interpolate([[0.0, 0.0], [10.0, 0.0]])
    assert out[0] == 1.0 and math.isnan(out[1])


def test_divergence_of_realized_field():
    # compact-stencil divergence is the discrete Laplacian residual of h
    mg = rasterize(DISK, 0.01)
    hf = harmonic_extension(mg, PotentialSpec("x^2"), 0.0, tol=1e-10)
    lap = discrete_laplacian(hf.values, 0.01)
    assert np.max(np.abs(lap[mg.inside])) <= 1e-5
    # wide central differences of the gradient, at least 0.1 from the boundary
    divs = []
    for h in (0.02, 0.01):
        mg = rasterize(DISK, h)
        X, Y = mg.grid.mesh()
        v = grad_field(harmonic_extension(mg, PotentialSpec("x^2"), 0.0))
        d = np.gradient(v.vx.values, h, axis=0) + np.gradient(v.vy.values, h, axis=1)
        away = mg.inside & (np.hypot(X, Y) <= 0.9)
        divs.append(float(np.max(np.abs(d[away]))))
    assert divs[1] <= 0.05
    assert divs[1] < divs[0]


def test_field_dump(tmp_path):
    mg = rasterize(Box([0, 0], [1, 1]), 0.5)
    X, Y = mg.grid.mesh()
    f = GridField(mg.grid, X + 2 * Y, mg.mask)
    path = tmp_path / "f.csv"
    dump_field_csv(f, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,mask,value"
    assert len(lines) == 1 + X.size
    row = lines[1].split(",")
    assert float(row[0]) + 2 * float(row[1]) == float(row[3])
