"""Embedded-boundary finite differences on a uniform 2D grid.

Nodes are classified against a domain's membership oracle. A node is
*inside* when it and its four axis neighbours belong to the domain; the
ring of non-inside nodes touching an inside node is *boundary-adjacent* and
carries the Dirichlet data. The Poisson problem is the 5-point Laplacian on
inside nodes, solved by matrix-free conjugate gradients.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ConvergenceError, InputError, ResourceError
from .geometry import Polyline2D, winding_grid
from .parallel import get_threads

__all__ = [
    "OUTSIDE",
    "BOUNDARY",
    "INSIDE",
    "Grid",
    "MaskGrid",
    "GridField",
    "VelocityField",
    "PoissonResult",
    "rasterize",
    "rasterize_box",
    "solve_poisson",
    "discrete_laplacian",
    "solve_dirichlet",
    "harmonic_extension",
    "grad_field",
    "hessian_field",
    "max_principle_gap",
    "dump_field_csv",
]

OUTSIDE, BOUNDARY, INSIDE = 0, 1, 2
DEFAULT_NODE_BUDGET = 4_000_000


@dataclass(frozen=True)
class Grid:
    origin: np.ndarray
    h: float
    dims: tuple

    @property
    def xs(self):
        return self.origin[0] + self.h * np.arange(self.dims[0])

    @property
    def ys(self):
        return self.origin[1] + self.h * np.arange(self.dims[1])

    def mesh(self):
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @property
    def upper(self):
        return self.origin + self.h * (np.asarray(self.dims) - 1)

    def covers(self, points, margin=0.0):
        pts = np.asarray(points, dtype=float)
        return np.all((pts >= self.origin + margin) & (pts <= self.upper - margin), axis=1)

    def same_as(self, other):
        return (
            self.dims == other.dims
            and self.h == other.h
            and np.array_equal(self.origin, other.origin)
        )


@dataclass
class MaskGrid:
    grid: Grid
    mask: np.ndarray
    member: np.ndarray

    @property
    def inside(self):
        return self.mask == INSIDE

    @property
    def boundary(self):
        return self.mask == BOUNDARY

    @property
    def n_inside(self):
        return int(np.count_nonzero(self.inside))


@dataclass
class GridField:
    grid: Grid
    values: np.ndarray
    mask: np.ndarray = None

    def interpolate(self, points):
        """Bilinear interpolation; NaN for points off the grid."""
        return _bilinear(self.grid, self.values[None], points)[0]


def _bilinear(grid, stacked, points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    u = (pts - grid.origin) / grid.h
    nx, ny = grid.dims
    ok = np.all(np.isfinite(u), axis=1)
    u = np.where(ok[:, None], u, 0.0)
    i = np.floor(u[:, 0]).astype(np.int64)
    j = np.floor(u[:, 1]).astype(np.int64)
    ok &= (u[:, 0] >= 0) & (u[:, 1] >= 0) & (u[:, 0] <= nx - 1) & (u[:, 1] <= ny - 1)
    i = np.clip(i, 0, nx - 2)
    j = np.clip(j, 0, ny - 2)
    fx = u[:, 0] - i
    fy = u[:, 1] - j
    v00 = stacked[:, i, j]
    v10 = stacked[:, i + 1, j]
    v01 = stacked[:, i, j + 1]
    v11 = stacked[:, i + 1, j + 1]
    out = (1 - fx) * ((1 - fy) * v00 + fy * v01) + fx * ((1 - fy) * v10 + fy * v11)
    out[:, ~ok] = np.nan
    return out


@dataclass
class VelocityField:
    """Two grid components sharing one grid.

    ``jac`` optionally holds the nodal velocity gradient stacked as
    [dvx/dx, dvx/dy, dvy/dx, dvy/dy]; when absent it is taken from central
    differences of the components.
    """

    vx: GridField
    vy: GridField
    t: float = 0.0
    jac: np.ndarray = field(default=None, repr=False)
    _stack: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not self.vx.grid.same_as(self.vy.grid):
            raise InputError("velocity components must share one grid")

    @property
    def grid(self):
        return self.vx.grid

    @property
    def mask(self):
        return self.vx.mask

    def interpolate(self, points):
        """Velocity at arbitrary points, shape (N, 2); NaN off the grid."""
        if self._stack is None:
            self._stack = np.stack([self.vx.values, self.vy.values])
        return _bilinear(self.grid, self._stack, points).T

    def gradient_nodes(self):
        if self.jac is None:
            h = self.grid.h
            gxx, gxy = np.gradient(self.vx.values, h)
            gyx, gyy = np.gradient(self.vy.values, h)
            self.jac = np.stack([gxx, gxy, gyx, gyy])
        return self.jac

    def gradient(self, points):
        """Interpolated velocity gradient at points, shape (N, 2, 2)."""
        g = _bilinear(self.grid, self.gradient_nodes(), points)
        return g.T.reshape(-1, 2, 2)

    def divergence_nodes(self):
        g = self.gradient_nodes()
        return g[0] + g[3]


def _make_grid(lo, hi, h, pad, node_budget):
    if h <= 0:
        raise InputError("grid spacing must be positive")
    if pad < h:
        raise InputError("grid pad must be at least one spacing")
    # origins snap to integer multiples of h so grids of one spacing share nodes
    start = np.floor((np.asarray(lo, dtype=float) - pad) / h + 1e-9)
    stop = np.ceil((np.asarray(hi, dtype=float) + pad) / h - 1e-9)
    dims = tuple(int(stop[k] - start[k]) + 1 for k in range(2))
    lo = start * h
    if dims[0] * dims[1] > node_budget:
        raise ResourceError(
            f"grid of {dims[0]}x{dims[1]} nodes exceeds the node budget {node_budget}"
        )
    return Grid(lo, float(h), dims)


def _classify(member):
    padded = np.pad(member, 1, constant_values=False)
    nbrs = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    inside = member & nbrs
    pin = np.pad(inside, 1, constant_values=False)
    touch = pin[:-2, 1:-1] | pin[2:, 1:-1] | pin[1:-1, :-2] | pin[1:-1, 2:]
    mask = np.full(member.shape, OUTSIDE, dtype=np.int8)
    mask[~inside & touch] = BOUNDARY
    mask[inside] = INSIDE
    return mask


def _member_on_grid(domain, grid):
    if isinstance(domain, Polyline2D):
        return winding_grid(domain.vertices, grid.xs, grid.ys) != 0
    X, Y = grid.mesh()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return domain.contains_many(pts).reshape(grid.dims)


def rasterize(domain, h, pad=None, node_budget=DEFAULT_NODE_BUDGET):
    """Classify grid nodes covering the domain's bounding box inflated by ``pad``."""
    if domain.dim != 2:
        raise InputError("rasterize supports 2D domains only")
    pad = h if pad is None else pad
    grid = _make_grid(domain.lo, domain.hi, h, pad, node_budget)
    return rasterize_on(domain, grid)


def rasterize_box(domain, lo, hi, h, pad, node_budget=DEFAULT_NODE_BUDGET):
    """Like :func:`rasterize` but over an explicit box (e.g. a dilated domain's)."""
    grid = _make_grid(lo, hi, h, pad, node_budget)
    return rasterize_on(domain, grid)


def rasterize_on(domain, grid, member=None):
    if member is None:
        member = _member_on_grid(domain, grid)
    mask = _classify(member)
    if not np.any(mask == INSIDE):
        raise InputError("domain has no inside grid nodes at this resolution")
    return MaskGrid(grid, mask, member)


def discrete_laplacian(values, h):
    """5-point Laplacian at every node (edges treated as zero-padded)."""
    u = np.pad(values, 1)
    return (u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:] - 4 * values) / h**2


@dataclass
class PoissonResult:
    field: GridField
    residual: float
    iterations: int


def _crop(inside):
    ii = np.flatnonzero(inside.any(axis=1))
    jj = np.flatnonzero(inside.any(axis=0))
    return slice(max(ii[0] - 1, 0), ii[-1] + 2), slice(max(jj[0] - 1, 0), jj[-1] + 2)


def solve_poisson(mask_grid, rhs, tol=1e-8, max_iter=100_000, x0=None, full_output=False,
                  precondition=True):
    """Solve lap(w) = rhs on inside nodes with w = 0 on every other node.

    ``rhs`` is a GridField or an array on the grid. Conjugate gradients on
    the negated (SPD) operator, preconditioned by a fast sine-transform
    solve on the enclosing rectangle; convergence is measured by the
    relative discrete 2-norm residual over inside nodes.
    """
    if tol <= 0:
        raise InputError("tolerance must be positive")
    grid = mask_grid.grid
    h2 = grid.h**2
    values = rhs.values if isinstance(rhs, GridField) else np.asarray(rhs, dtype=float)
    inside = mask_grid.inside
    if values.shape != inside.shape:
        raise InputError("rhs does not match the grid")
    if not np.all(np.isfinite(values[inside])):
        raise InputError("rhs must be finite on inside nodes")
    win = _crop(inside)
    ins = inside[win]
    b = np.where(ins, -values[win], 0.0)
    bnorm = float(np.sqrt(np.sum(b * b)))
    w = np.zeros(inside.shape)
    if bnorm == 0.0:
        res = PoissonResult(GridField(grid, w, mask_grid.mask), 0.0, 0)
        return res if full_output else res.field

    def apply(u):
        # -lap(u) restricted to inside nodes; u vanishes elsewhere
        out = 4.0 * u
        out[1:, :] -= u[:-1, :]
        out[:-1, :] -= u[1:, :]
        out[:, 1:] -= u[:, :-1]
        out[:, :-1] -= u[:, 1:]
        out *= ins
        out /= h2
        return out

    if precondition:
        # embed the window in a rectangle whose transform lengths factor well
        nx, ny = (sfft.next_fast_len(n + 1, real=True) - 1 for n in ins.shape)
        lam = (4.0 / h2) * (
            np.sin(np.pi * np.arange(1, nx + 1) / (2 * (nx + 1)))[:, None] ** 2
            + np.sin(np.pi * np.arange(1, ny + 1) / (2 * (ny + 1)))[None, :] ** 2
        )
        buf = np.zeros((nx, ny))
        workers = get_threads()
        sx, sy = ins.shape

        def prec(r):
            # inverse of the rectangle's 5-point operator, restricted to inside nodes
            buf[:sx, :sy] = r
            z = sfft.idstn(sfft.dstn(buf, type=1, workers=workers) / lam, type=1, workers=workers)
            return z[:sx, :sy] * ins
    else:
        def prec(r):
            return r

    if x0 is None:
        x = np.zeros_like(b)
    else:
        x0v = x0.values if isinstance(x0, GridField) else np.asarray(x0, dtype=float)
        x = np.where(ins, x0v[win], 0.0)
    r = b - apply(x)
    z = prec(r)
    p = z.copy()
    rz = float(np.sum(r * z))
    rr = float(np.sum(r * r))
    target = (tol * bnorm) ** 2
    it = 0
    while rr > target:
        if it >= max_iter:
            raise ConvergenceError("Poisson solve did not converge", np.sqrt(rr) / bnorm, it)
        Ap = apply(p)
        alpha = rz / float(np.sum(p * Ap))
        x += alpha * p
        r -= alpha * Ap
        rr = float(np.sum(r * r))
        z = prec(r)
        rz_new = float(np.sum(r * z))
        p *= rz_new / rz
        p += z
        rz = rz_new
        it += 1
    # true residual, not the recursively updated one
    true_r = b - apply(x)
    resid = float(np.sqrt(np.sum(true_r * true_r))) / bnorm
    w[win] = x
    res = PoissonResult(GridField(grid, w, mask_grid.mask), resid, it)
    return res if full_output else res.field


def solve_dirichlet(mask_grid, spec, t, tol=1e-8, max_iter=100_000, x0=None):
    """Return ``(h, w, c)`` with w solving lap(w) = lap(c) and h = c - w."""
    X, Y = mask_grid.grid.mesh()
    c = spec.value(t, X, Y)
    m = np.zeros_like(c)
    inside = mask_grid.inside
    m[inside] = spec.laplacian(t, X[inside], Y[inside])
    w = solve_poisson(mask_grid, m, tol=tol, max_iter=max_iter, x0=x0)
    grid = mask_grid.grid
    h = GridField(grid, c - w.values, mask_grid.mask)
    return h, w, GridField(grid, c, mask_grid.mask)


def harmonic_extension(mask_grid, spec, t, tol=1e-8, max_iter=100_000):
    """Discrete harmonic function equal to c on the boundary-adjacent ring."""
    h, _, _ = solve_dirichlet(mask_grid, spec, t, tol=tol, max_iter=max_iter)
    return h


def grad_field(f, t=0.0):
    """Gradient of a grid field: central differences, one-sided on the boundary ring.

    A boundary-adjacent node with exactly one inside neighbour along an axis
    differences toward that neighbour, so the ring sees the interior solution
    rather than whatever lies outside.
    """
    h = f.grid.h
    gx, gy = np.gradient(f.values, h)
    if f.mask is not None:
        inside = f.mask == INSIDE
        ring = f.mask == BOUNDARY
        for axis, g in ((0, gx), (1, gy)):
            fwd_in = np.zeros_like(inside)
            bwd_in = np.zeros_like(inside)
            fwd_diff = np.zeros_like(f.values)
            bwd_diff = np.zeros_like(f.values)
            src = [slice(None), slice(None)]
            dst = [slice(None), slice(None)]
            src[axis], dst[axis] = slice(1, None), slice(None, -1)
            fwd_in[tuple(dst)] = inside[tuple(src)]
            fwd_diff[tuple(dst)] = (f.values[tuple(src)] - f.values[tuple(dst)]) / h
            bwd_in[tuple(src)] = inside[tuple(dst)]
            bwd_diff[tuple(src)] = (f.values[tuple(src)] - f.values[tuple(dst)]) / h
            only_fwd = ring & fwd_in & ~bwd_in
            only_bwd = ring & bwd_in & ~fwd_in
            g[only_fwd] = fwd_diff[only_fwd]
            g[only_bwd] = bwd_diff[only_bwd]
    return VelocityField(GridField(f.grid, gx, f.mask), GridField(f.grid, gy, f.mask), t)


def hessian_field(values, h):
    """Nodal Hessian (xx, xy, yy) by compact central differences.

    The xx and yy parts sum to the 5-point Laplacian, so the trace is
    exactly the discrete Laplacian. Edge nodes fall back to ``np.gradient``.
    """
    gx, gy = np.gradient(values, h)
    hxx = np.gradient(gx, h, axis=0)
    hyy = np.gradient(gy, h, axis=1)
    hxy = np.gradient(gx, h, axis=1)
    hxx[1:-1, :] = (values[2:, :] - 2 * values[1:-1, :] + values[:-2, :]) / h**2
    hyy[:, 1:-1] = (values[:, 2:] - 2 * values[:, 1:-1] + values[:, :-2]) / h**2
    return hxx, hxy, hyy


def max_principle_gap(h_field, c_field):
    """How far inside-node values of h exceed the range of c on the boundary ring (>= 0)."""
    inside = h_field.mask == INSIDE
    ring = h_field.mask == BOUNDARY
    cb = c_field.values[ring]
    hv = h_field.values[inside]
    above = float(hv.max() - cb.max())
    below = float(cb.min() - hv.min())
    return max(above, below, 0.0), float(cb.max() - cb.min())


def dump_field_csv(f, path):
    X, Y = f.grid.mesh()
    mask = f.mask if f.mask is not None else np.full(f.values.shape, INSIDE)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "mask", "value"])
        for x, y, m, v in zip(X.ravel(), Y.ravel(), mask.ravel(), f.values.ravel()):
            writer.writerow([repr(float(x)), repr(float(y)), int(m), repr(float(v))])
