"""Measure-preserving maps from incompressible potential flows.

At each time step the velocity is the gradient of the harmonic function
h_t = c_t - w_t, where w_t solves a zero-Dirichlet Poisson problem with
right-hand side lap(c_t) on the current domain. Seeds, boundary markers and
seed Jacobians are advanced by classical RK4 with the field frozen over the
step; the advected boundary defines the next domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from shapely.geometry import LinearRing

from .errors import BlowUpError, InputError, TopologyError
from .geometry import Domain, Polyline2D, midpoint_probe, winding_grid
from .pde import (
    DEFAULT_NODE_BUDGET,
    INSIDE,
    GridField,
    VelocityField,
    _make_grid,
    grad_field,
    hessian_field,
    rasterize_on,
    solve_poisson,
)
from .potential import PotentialSpec
from .rng import stream

__all__ = [
    "FlowConfig",
    "TransportMap",
    "FluxResult",
    "JacobianReport",
    "BiLipschitzReport",
    "velocity",
    "assemble_velocity",
    "flux_residual",
    "build_map",
    "jacobian_dets",
    "inverse_membership",
    "bilipschitz_check",
    "resample_polyline",
]


@dataclass
class FlowConfig:
    domain: Domain
    potential: PotentialSpec
    steps: int = 50
    h: float = 0.02
    pad: float | None = None
    tol: float = 1e-8
    max_iter: int = 100_000
    seed_spacing: float = 0.05
    dilation: int = 3
    node_budget: int = DEFAULT_NODE_BUDGET
    check_convex: bool = True

    def __post_init__(self):
        if not isinstance(self.potential, PotentialSpec):
            self.potential = PotentialSpec(self.potential)
        if self.steps < 1:
            raise InputError("flow needs at least one time step")
        if self.h <= 0 or self.seed_spacing <= 0:
            raise InputError("grid spacing and seed spacing must be positive")
        if self.domain.dim != 2:
            raise InputError("flow maps are built for 2D base domains only")
        if self.dilation < 0:
            raise InputError("dilation must be non-negative")

    @property
    def grid_pad(self):
        # tracked points must stay inside the grid for a whole step
        return max(self.pad or 0.0, (self.dilation + 5) * self.h)

    def echo(self):
        return {
            "domain": self.domain.describe(),
            "potential": self.potential.text,
            "steps": self.steps,
            "h": self.h,
            "pad": self.grid_pad,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "seed_spacing": self.seed_spacing,
            "dilation": self.dilation,
        }


def _warm_start(prev, grid):
    """Previous solution transferred onto ``grid`` (both grids share the lattice)."""
    if prev is None:
        return None
    if prev.grid.h != grid.h:
        X, Y = grid.mesh()
        vals = prev.interpolate(np.column_stack([X.ravel(), Y.ravel()])).reshape(grid.dims)
        return np.nan_to_num(vals, nan=0.0)
    off = np.rint((prev.grid.origin - grid.origin) / grid.h).astype(int)
    out = np.zeros(grid.dims)
    src = prev.values
    i0, j0 = max(off[0], 0), max(off[1], 0)
    i1 = min(off[0] + src.shape[0], grid.dims[0])
    j1 = min(off[1] + src.shape[1], grid.dims[1])
    if i1 > i0 and j1 > j0:
        out[i0:i1, j0:j1] = src[i0 - off[0]:i1 - off[0], j0 - off[1]:j1 - off[1]]
    return out


def assemble_velocity(t, spec, mask_grid, w_field):
    """v = grad(c_t) - grad_h(w) with its nodal gradient, from a solved w."""
    grid = mask_grid.grid
    h = grid.h
    X, Y = grid.mesh()
    gw = grad_field(w_field, t)
    gcx, gcy = spec.gradient(t, X, Y)
    # grad v = Hess(c) - Hess_h(w); its trace is m - lap_h(w) = 0 on inside nodes
    cxx, cxy, cyy = (spec._full(e.evaluate(t, X, Y), X, Y) for e in spec.hessian)
    wxx, wxy, wyy = hessian_field(w_field.values, h)
    jac = np.stack([cxx - wxx, cxy - wxy, cxy - wxy, cyy - wyy])
    return VelocityField(
        GridField(grid, gcx - gw.vx.values, mask_grid.mask),
        GridField(grid, gcy - gw.vy.values, mask_grid.mask),
        t,
        jac=jac,
    )


def velocity(t, domain, spec, h, pad=None, tol=1e-8, max_iter=100_000, dilation=0,
             node_budget=DEFAULT_NODE_BUDGET, x0=None, full_output=False):
    """Realized potential-flow velocity v = grad(c_t) - grad(w_t) on ``domain``.

    With ``dilation > 0`` the Poisson problem is posed on the domain grown by
    that many grid nodes, so every cell touching the domain lies where the
    discrete potential is harmonic.
    """
    if not isinstance(spec, PotentialSpec):
        spec = PotentialSpec(spec)
    pad = max(pad if pad is not None else h, (dilation + 2) * h)
    grid = _make_grid(domain.lo, domain.hi, h, pad, node_budget)
    if isinstance(domain, Polyline2D):
        member = winding_grid(domain.vertices, grid.xs, grid.ys) != 0
    else:
        X, Y = grid.mesh()
        member = domain.contains_many(np.column_stack([X.ravel(), Y.ravel()])).reshape(grid.dims)
    solve_region = member
    if dilation:
        solve_region = ndimage.binary_dilation(member, structure=np.ones((3, 3), bool),
                                               iterations=dilation)
    mg = rasterize_on(domain, grid, member=solve_region)
    X, Y = grid.mesh()
    m = np.zeros(grid.dims)
    ins = mg.inside
    m[ins] = spec.laplacian(t, X[ins], Y[ins])
    sol = solve_poisson(mg, m, tol=tol, max_iter=max_iter, x0=_warm_start(x0, grid), full_output=True)
    vf = assemble_velocity(t, spec, mg, sol.field)
    if full_output:
        return vf, {"mask": mg, "member": member, "w": sol.field, "iterations": sol.iterations,
                    "residual": sol.residual}
    return vf


@dataclass
class FluxResult:
    flux: float
    perimeter: float

    @property
    def normalized(self):
        return abs(self.flux) / self.perimeter


def _closed(boundary):
    b = np.asarray(boundary, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or len(b) < 4:
        raise InputError("boundary must be a closed polyline with at least 3 vertices")
    if not np.allclose(b[0], b[-1], rtol=0, atol=1e-12):
        raise InputError("boundary polyline is open")
    return b


def flux_residual(boundary, v):
    """Outward flux of ``v`` through a closed polyline by midpoint quadrature.

    ``v`` is a VelocityField or a callable mapping (N, 2) points to (N, 2)
    velocities. Returns the signed flux and the perimeter; ``normalized`` is
    |flux| / perimeter.
    """
    b = _closed(boundary)
    seg = np.diff(b, axis=0)
    area2 = float(np.sum(b[:-1, 0] * b[1:, 1] - b[1:, 0] * b[:-1, 1]))
    # (dy, -dx) points outward for a counter-clockwise loop
    normal_len = np.column_stack([seg[:, 1], -seg[:, 0]]) * (1.0 if area2 > 0 else -1.0)
    mid = 0.5 * (b[:-1] + b[1:])
    vel = v.interpolate(mid) if hasattr(v, "interpolate") else np.asarray(v(mid), dtype=float)
    if not np.all(np.isfinite(vel)):
        raise InputError("velocity is not defined along the whole boundary")
    flux = float(np.sum(vel * normal_len))
    return FluxResult(flux, float(np.sum(np.linalg.norm(seg, axis=1))))


def resample_polyline(boundary, h):
    """Merge vertices closer than h/2 and split segments longer than 2h."""
    b = _closed(boundary)[:-1]
    kept = [b[0]]
    lo2 = (0.5 * h) ** 2
    for p in b[1:]:
        d = p - kept[-1]
        if d[0] * d[0] + d[1] * d[1] >= lo2:
            kept.append(p)
    while len(kept) > 3:
        d = kept[-1] - kept[0]
        if d[0] * d[0] + d[1] * d[1] >= lo2:
            break
        kept.pop()
    v = np.array(kept + [kept[0]])
    seg = np.diff(v, axis=0)
    length = np.linalg.norm(seg, axis=1)
    pieces = np.where(length > 2 * h, np.ceil(length / h).astype(int), 1)
    start = np.repeat(v[:-1], pieces, axis=0)
    step = np.repeat(seg / pieces[:, None], pieces, axis=0)
    k = np.concatenate([np.arange(p) for p in pieces])
    return np.vstack([start + k[:, None] * step, v[:1]])


def _seed_lattice(domain, spacing):
    lo, hi = domain.bounding_box
    center = 0.5 * (lo + hi)
    kmin = np.floor((lo - center) / spacing).astype(int)
    kmax = np.ceil((hi - center) / spacing).astype(int)
    I, J = np.meshgrid(np.arange(kmin[0], kmax[0] + 1), np.arange(kmin[1], kmax[1] + 1), indexing="ij")
    idx = np.column_stack([I.ravel(), J.ravel()])
    pts = center + spacing * idx
    keep = domain.contains_many(pts)
    return pts[keep], idx[keep]


def _rk4_step(vf, pos, jac, dt):
    """One RK4 step of dx/dt = v(x), dJ/dt = grad v(x) J with a frozen field."""

    def rhs(p, J):
        vel = vf.interpolate(p)
        if J is None:
            return vel, None
        G = vf.gradient(p[: len(J)])
        return vel, G @ J

    k1, K1 = rhs(pos, jac)
    k2, K2 = rhs(pos + 0.5 * dt * k1, None if jac is None else jac + 0.5 * dt * K1)
    k3, K3 = rhs(pos + 0.5 * dt * k2, None if jac is None else jac + 0.5 * dt * K2)
    k4, K4 = rhs(pos + dt * k3, None if jac is None else jac + dt * K3)
    new_pos = pos + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    new_jac = None if jac is None else jac + dt / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4)
    return new_pos, new_jac


@dataclass
class TransportMap:
    config: FlowConfig
    times: np.ndarray
    seeds: np.ndarray
    seed_index: np.ndarray
    trajectories: np.ndarray
    jacobians: np.ndarray
    boundaries: list
    fields: list
    flux: list = field(default_factory=list)
    solver_iterations: list = field(default_factory=list)
    lipschitz: float = 0.0
    potentials: list = field(default_factory=list, repr=False)

    @property
    def steps(self):
        return len(self.times) - 1

    @property
    def images(self):
        return self.trajectories[-1]

    def _integrate(self, points, backward):
        if len(self.fields) != self.steps:
            raise InputError("this map has no cached velocity fields")
        pts = np.array(points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[None, :]
        dt = 1.0 / self.steps
        order = range(self.steps - 1, -1, -1) if backward else range(self.steps)
        alive = np.all(np.isfinite(pts), axis=1)
        for k in order:
            vf = self.fields[k]
            nxt, _ = _rk4_step(vf, pts[alive], None, -dt if backward else dt)
            pts[alive] = nxt
            alive &= np.all(np.isfinite(pts), axis=1)
        pts[~alive] = np.nan
        return pts

    def forward(self, points):
        """Phi(1, x); NaN for points whose trajectory leaves a cached grid."""
        return self._integrate(points, backward=False)

    def inverse(self, points):
        return self._integrate(points, backward=True)

    def inverse_membership(self, points):
        pre = self.inverse(points)
        ok = np.all(np.isfinite(pre), axis=1)
        out = np.zeros(len(pre), dtype=bool)
        if np.any(ok):
            out[ok] = self.config.domain.contains_many(pre[ok])
        return out


def _spectral_norm_2x2(a, b, c, d):
    """Largest singular value of [[a, b], [c, d]] (closed form, no cancellation)."""
    return 0.5 * (np.hypot(a + d, c - b) + np.hypot(a - d, b + c))


def _lipschitz_of_field(vf, member):
    g = vf.gradient_nodes()[:, member]
    if g.size == 0:
        return 0.0
    return float(np.max(_spectral_norm_2x2(*g)))


def build_map(cfg, progress=None):
    """Integrate the flow from t=0 to t=1 in ``cfg.steps`` RK4 steps."""
    domain = cfg.domain
    if cfg.check_convex and not domain.convex:
        if midpoint_probe(domain, 10_000, 0) > 0:
            raise InputError("base domain failed the convexity probe")
    spec = cfg.potential
    seeds, seed_index = _seed_lattice(domain, cfg.seed_spacing)
    if len(seeds) == 0:
        raise InputError("no seed lattice points inside the base domain")
    boundary = resample_polyline(domain.boundary_polyline(cfg.h), cfg.h)
    if not LinearRing(boundary).is_simple:
        raise TopologyError("initial boundary polyline is not simple", 0)
    T = cfg.steps
    dt = 1.0 / T
    n_seed = len(seeds)
    pos = seeds.copy()
    jac = np.broadcast_to(np.eye(2), (n_seed, 2, 2)).copy()
    trajectories = [pos.copy()]
    jacobians = [jac.copy()]
    boundaries = [boundary.copy()]
    fields, fluxes, iters, potentials = [], [], [], []
    lip = 0.0
    prev_w = None
    speed = float(np.max(np.hypot(*spec.gradient(0.0, boundary[:, 0], boundary[:, 1]))))
    for k in range(T):
        t = k * dt
        omega_t = Polyline2D(boundary, check_simple=False)
        tracked = np.vstack([pos, boundary[:-1]])
        pad = max(cfg.grid_pad, 2.0 * dt * speed + 2 * cfg.h)
        for attempt in range(4):
            vf, info = velocity(t, omega_t, spec, cfg.h, pad=pad, tol=cfg.tol,
                                max_iter=cfg.max_iter, dilation=cfg.dilation,
                                node_budget=cfg.node_budget, x0=prev_w, full_output=True)
            new, new_jac = _rk4_step(vf, tracked, jac, dt)
            if np.all(np.isfinite(new)) and np.all(np.isfinite(new_jac)):
                break
            pad *= 2
        else:
            bad = ~np.all(np.isfinite(new), axis=1)
            who = "seed" if np.any(bad[:n_seed]) else "boundary vertex"
            raise BlowUpError(f"a {who} left the padded grid", k)
        jac = new_jac
        speed = float(np.max(np.linalg.norm(new - tracked, axis=1))) / dt
        prev_w = info["w"]
        iters.append(info["iterations"])
        fluxes.append(flux_residual(boundary, vf))
        lip = max(lip, _lipschitz_of_field(vf, info["member"] & (info["mask"].mask == INSIDE)))
        pos = new[:n_seed]
        moved = np.vstack([new[n_seed:], new[n_seed:n_seed + 1]])
        boundary = resample_polyline(moved, cfg.h)
        if not LinearRing(boundary).is_simple:
            raise TopologyError("advected boundary polyline self-intersects", k)
        fields.append(vf)
        potentials.append(info["w"])
        trajectories.append(pos.copy())
        jacobians.append(jac.copy())
        boundaries.append(boundary.copy())
        if progress is not None:
            progress(k + 1, T)
    return TransportMap(
        config=cfg,
        times=np.arange(T + 1) * dt,
        seeds=seeds,
        seed_index=seed_index,
        trajectories=np.array(trajectories),
        jacobians=np.array(jacobians),
        boundaries=boundaries,
        fields=fields,
        flux=fluxes,
        solver_iterations=iters,
        lipschitz=lip,
        potentials=potentials,
    )


@dataclass
class JacobianReport:
    variational: np.ndarray
    finite_difference: np.ndarray

    @property
    def max_deviation(self):
        return float(np.max(np.abs(self.variational - 1.0)))

    @property
    def max_deviation_fd(self):
        fd = self.finite_difference[np.isfinite(self.finite_difference)]
        return float(np.max(np.abs(fd - 1.0))) if fd.size else float("nan")


def _fd_jacobians(tmap):
    """Jacobians of Phi(1, .) from differences of neighbouring lattice seeds."""
    idx = {tuple(k): i for i, k in enumerate(tmap.seed_index.tolist())}
    s = tmap.config.seed_spacing
    img = tmap.images
    out = np.full((len(img), 2, 2), np.nan)
    for i, key in enumerate(tmap.seed_index.tolist()):
        cols = []
        for axis in (0, 1):
            fwd = list(key)
            bwd = list(key)
            fwd[axis] += 1
            bwd[axis] -= 1
            jf, jb = idx.get(tuple(fwd)), idx.get(tuple(bwd))
            if jf is not None and jb is not None:
                cols.append((img[jf] - img[jb]) / (2 * s))
            elif jf is not None:
                cols.append((img[jf] - img[i]) / s)
            elif jb is not None:
                cols.append((img[i] - img[jb]) / s)
            else:
                break
        if len(cols) == 2:
            out[i] = np.column_stack(cols)
    return out


def jacobian_dets(tmap):
    var = np.linalg.det(tmap.jacobians[-1])
    fd_j = _fd_jacobians(tmap)
    fd = np.full(len(var), np.nan)
    ok = np.all(np.isfinite(fd_j), axis=(1, 2))
    fd[ok] = np.linalg.det(fd_j[ok])
    return JacobianReport(var, fd)


def inverse_membership(tmap, y):
    pts = np.asarray(y, dtype=float)
    if pts.ndim == 1:
        return bool(tmap.inverse_membership(pts[None, :])[0])
    return tmap.inverse_membership(pts)


@dataclass
class BiLipschitzReport:
    ratio_min: float
    ratio_max: float
    lipschitz: float
    slack: float
    n_pairs: int

    @property
    def lower(self):
        return math.exp(-self.lipschitz) * (1 - self.slack)

    @property
    def upper(self):
        return math.exp(self.lipschitz) * (1 + self.slack)

    @property
    def satisfied(self):
        return self.lower <= self.ratio_min and self.ratio_max <= self.upper

    def as_tuple(self):
        return self.ratio_min, self.ratio_max, self.lipschitz


def bilipschitz_check(tmap, n_pairs=10_000, seed=0, slack=0.05):
    """Distance distortion of Phi(1, .) over random seed pairs against exp(+-L)."""
    rng = stream(seed, "bilipschitz")
    n = len(tmap.seeds)
    if n < 2:
        raise InputError("need at least two seeds")
    i = rng.integers(0, n, size=n_pairs)
    j = (i + rng.integers(1, n, size=n_pairs)) % n
    src = np.linalg.norm(tmap.seeds[i] - tmap.seeds[j], axis=1)
    dst = np.linalg.norm(tmap.images[i] - tmap.images[j], axis=1)
    ratio = dst / src
    return BiLipschitzReport(float(ratio.min()), float(ratio.max()), tmap.lipschitz, slack, n_pairs)
