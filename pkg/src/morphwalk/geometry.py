"""Domains in R^n: membership oracles, bounding boxes and Monte-Carlo measures.

Every domain exposes ``contains_many(points)`` taking an ``(N, dim)`` array and
returning a boolean mask; :func:`contains` is the single-point convenience.
Analytic shapes are closed sets (boundary points count as inside).
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from shapely.geometry import LinearRing

from .errors import EmptyDomainError, InputError, UnsupportedError
from .rng import stream

__all__ = [
    "Domain",
    "Ball",
    "Box",
    "LShape",
    "StarShaped",
    "Polyline2D",
    "FlowImage",
    "Partition",
    "DomainStats",
    "contains",
    "sample_uniform",
    "volume_mc",
    "diameter_estimate",
    "iso_ratio_estimate",
    "set_distance",
    "midpoint_probe",
    "domain_stats",
    "winding_numbers",
    "winding_grid",
    "subdivide_polyline",
    "load_polyline_csv",
    "domain_from_config",
]

_CHUNK = 1 << 16


def _as_points(x, dim):
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise InputError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return pts


class Domain:
    """Base class. Subclasses set ``kind``, ``dim``, ``lo``, ``hi``."""

    kind = "abstract"
    convex = False

    def __init__(self, dim, lo, hi):
        self.dim = int(dim)
        self.lo = np.asarray(lo, dtype=float).reshape(self.dim)
        self.hi = np.asarray(hi, dtype=float).reshape(self.dim)

    @property
    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    @property
    def box_volume(self):
        return float(np.prod(self.hi - self.lo))

    @property
    def box_diagonal(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def contains_many(self, points):
        pts = _as_points(points, self.dim)
        return self._contains(pts)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InputError(f"point has shape {x.shape}, domain has dim {self.dim}")
        if not np.all(np.isfinite(x)):
            raise InputError("point must be finite")
        return bool(self._contains(x[None, :])[0])

    def _contains(self, pts):
        raise NotImplementedError

    def boundary_polyline(self, spacing):
        """Closed counter-clockwise 2D boundary polyline with segments no longer than ``spacing``."""
        raise UnsupportedError(f"no boundary polyline for domain kind {self.kind!r}")

    def perimeter(self):
        """(n-1)-dimensional boundary measure, where a closed form exists."""
        raise UnsupportedError(f"no perimeter formula for domain kind {self.kind!r}")

    def describe(self):
        """Config literal that :func:`domain_from_config` turns back into this domain."""
        return {"kind": self.kind}


class Ball(Domain):
    kind = "ball"
    convex = True

    def __init__(self, center, radius):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if radius <= 0:
            raise InputError("ball radius must be positive")
        super().__init__(center.size, center - radius, center + radius)
        self.center = center
        self.radius = float(radius)

    def _contains(self, pts):
        d2 = np.sum((pts - self.center) ** 2, axis=1)
        return d2 <= self.radius**2

    def boundary_polyline(self, spacing):
        if self.dim != 2:
            raise UnsupportedError("boundary polylines exist for 2D balls only")
        n = max(16, int(np.ceil(2 * np.pi * self.radius / spacing)))
        a = 2 * np.pi * np.arange(n + 1) / n
        a[-1] = 0.0
        return self.center + self.radius * np.column_stack([np.cos(a), np.sin(a)])

    def perimeter(self):
        n = self.dim
        return 2 * math.pi ** (n / 2) / math.gamma(n / 2) * self.radius ** (n - 1)

    def describe(self):
        return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}


class Box(Domain):
    kind = "box"
    convex = True

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape:
            raise InputError("box corners must have the same dimension")
        super().__init__(lo.size, lo, hi)

    def _contains(self, pts):
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def boundary_polyline(self, spacing):
        if self.dim != 2:
            raise UnsupportedError("boundary polylines exist for 2D boxes only")
        (x0, y0), (x1, y1) = self.lo, self.hi
        corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]])
        return subdivide_polyline(corners, spacing)

    def perimeter(self):
        sides = self.hi - self.lo
        if self.dim == 1:
            return 2.0
        total = 0.0
        for i in range(self.dim):
            total += 2 * float(np.prod(np.delete(sides, i)))
        return total

    def describe(self):
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class LShape(Domain):
    """The unit square with the quadrant (0.5, 1] x (0.5, 1] removed."""

    kind = "l_shape"

    def __init__(self):
        super().__init__(2, [0.0, 0.0], [1.0, 1.0])

    def _contains(self, pts):
        x, y = pts[:, 0], pts[:, 1]
        in_square = (x >= 0) & (x <= 1) & (y >= 0) & (y <= 1)
        return in_square & ~((x > 0.5) & (y > 0.5))

    def perimeter(self):
        return 4.0

    def boundary_polyline(self, spacing):
        return subdivide_polyline(self.vertices(), spacing)

    def vertices(self):
        return np.array([[0, 0], [1, 0], [1, 0.5], [0.5, 0.5], [0.5, 1], [0, 1], [0, 0]], float)


class StarShaped(Domain):
    """2D body {c + rho (cos a, sin a) : rho <= R(a)} with R sampled at uniform angles."""

    kind = "star"

    def __init__(self, center, radii):
        radii = np.asarray(radii, dtype=float).ravel()
        if radii.size < 3:
            raise InputError("need at least 3 radial samples")
        if np.any(radii <= 0) or not np.all(np.isfinite(radii)):
            raise InputError("radial function must be strictly positive and finite")
        center = np.asarray(center, dtype=float).reshape(2)
        rmax = float(radii.max())
        super().__init__(2, center - rmax, center + rmax)
        self.center = center
        self.radii = radii

    @classmethod
    def from_function(cls, center, func, n_samples=256):
        angles = 2 * np.pi * np.arange(n_samples) / n_samples
        return cls(center, [float(func(a)) for a in angles])

    def radius_at(self, angle):
        m = self.radii.size
        u = np.mod(np.asarray(angle, dtype=float), 2 * np.pi) * m / (2 * np.pi)
        i0 = np.floor(u).astype(int) % m
        frac = u - np.floor(u)
        return (1 - frac) * self.radii[i0] + frac * self.radii[(i0 + 1) % m]

    def _contains(self, pts):
        rel = pts - self.center
        rho = np.hypot(rel[:, 0], rel[:, 1])
        return rho <= self.radius_at(np.arctan2(rel[:, 1], rel[:, 0]))

    def boundary(self, n=4096):
        a = 2 * np.pi * np.arange(n + 1) / n
        r = self.radius_at(a)
        return self.center + np.column_stack([r * np.cos(a), r * np.sin(a)])

    def boundary_polyline(self, spacing):
        n = max(self.radii.size, int(np.ceil(self.perimeter() / spacing)))
        pts = self.boundary(n)
        pts[-1] = pts[0]
        return pts

    def perimeter(self):
        pts = self.boundary()
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))

    def describe(self):
        return {"kind": self.kind, "center": self.center.tolist(), "radii": self.radii.tolist()}


def winding_numbers(vertices, points):
    """Winding number of a closed polyline around each point (ray-crossing form)."""
    v = np.asarray(vertices, dtype=float)
    pts = np.asarray(points, dtype=float)
    a, b = v[:-1], v[1:]
    out = np.zeros(len(pts), dtype=np.int64)
    step = max(1, _CHUNK * 8 // max(len(a), 1))
    for start in range(0, len(pts), step):
        p = pts[start : start + step]
        px, py = p[:, 0:1], p[:, 1:2]
        ay, by = a[:, 1], b[:, 1]
        cross = (b[:, 0] - a[:, 0]) * (py - ay) - (px - a[:, 0]) * (by - ay)
        up = (ay <= py) & (by > py) & (cross > 0)
        down = (by <= py) & (ay > py) & (cross < 0)
        out[start : start + step] = up.sum(axis=1) - down.sum(axis=1)
    return out


def winding_grid(vertices, xs, ys):
    """Winding numbers at every node of the tensor grid ``xs x ys``; shape (len(xs), len(ys))."""
    v = np.asarray(vertices, dtype=float)
    xs = np.asarray(xs, dtype=float)
    a, b = v[:-1], v[1:]
    out = np.zeros((len(xs), len(ys)), dtype=np.int64)
    for j, y in enumerate(np.asarray(ys, dtype=float)):
        up = (a[:, 1] <= y) & (b[:, 1] > y)
        down = (b[:, 1] <= y) & (a[:, 1] > y)
        sel = up | down
        if not np.any(sel):
            continue
        aa, bb = a[sel], b[sel]
        xc = aa[:, 0] + (y - aa[:, 1]) * (bb[:, 0] - aa[:, 0]) / (bb[:, 1] - aa[:, 1])
        sign = np.where(up[sel], 1, -1)
        order = np.argsort(xc, kind="stable")
        xc, sign = xc[order], sign[order]
        # crossings strictly right of the node contribute
        suffix = np.concatenate([np.cumsum(sign[::-1])[::-1], [0]])
        out[:, j] = suffix[np.searchsorted(xc, xs, side="right")]
    return out


class _CellIndex:
    """Uniform cell grid over a polygon: cells away from the boundary are pre-classified."""

    def __init__(self, vertices, lo, hi):
        seg = np.diff(vertices, axis=0)
        size = max(float(np.max(np.abs(seg))), float(np.max(hi - lo)) / 1024, 1e-12)
        self.size = size
        self.origin = lo - size
        dims = np.ceil((hi - lo) / size).astype(int) + 3
        self.dims = dims
        boundary = np.zeros(dims, dtype=bool)
        a, b = vertices[:-1], vertices[1:]
        i0 = np.floor((np.minimum(a, b) - self.origin) / size).astype(int)
        i1 = np.floor((np.maximum(a, b) - self.origin) / size).astype(int)
        span = int(np.max(i1 - i0)) if len(a) else 0
        for di in range(span + 1):
            for dj in range(span + 1):
                ii, jj = i0[:, 0] + di, i0[:, 1] + dj
                ok = (ii <= i1[:, 0]) & (jj <= i1[:, 1])
                boundary[ii[ok], jj[ok]] = True
        centers_x = self.origin[0] + (np.arange(dims[0]) + 0.5) * size
        centers_y = self.origin[1] + (np.arange(dims[1]) + 0.5) * size
        inside = winding_grid(vertices, centers_x, centers_y) != 0
        self.boundary = boundary
        self.inside = inside
        self.vertices = vertices

    def query(self, pts):
        idx = np.floor((pts - self.origin) / self.size).astype(int)
        valid = np.all((idx >= 0) & (idx < self.dims), axis=1)
        out = np.zeros(len(pts), dtype=bool)
        iv = idx[valid]
        res = self.inside[iv[:, 0], iv[:, 1]].copy()
        near = self.boundary[iv[:, 0], iv[:, 1]]
        if np.any(near):
            res[near] = winding_numbers(self.vertices, pts[valid][near]) != 0
        out[valid] = res
        return out


def subdivide_polyline(vertices, spacing):
    """Insert equally spaced points so that no segment exceeds ``spacing``."""
    v = np.asarray(vertices, dtype=float)
    seg = np.diff(v, axis=0)
    length = np.linalg.norm(seg, axis=1)
    pieces = np.maximum(1, np.ceil(length / spacing - 1e-9).astype(int))
    start = np.repeat(v[:-1], pieces, axis=0)
    step = np.repeat(seg / pieces[:, None], pieces, axis=0)
    k = np.concatenate([np.arange(p) for p in pieces])
    return np.vstack([start + k[:, None] * step, v[-1:]])


def _signed_area(v):
    return 0.5 * float(np.sum(v[:-1, 0] * v[1:, 1] - v[1:, 0] * v[:-1, 1]))


class Polyline2D(Domain):
    """Region enclosed by a closed, simple polyline (stored counter-clockwise)."""

    kind = "polyline"

    def __init__(self, vertices, check_simple=True):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 4:
            raise InputError("polyline needs at least 3 distinct vertices plus the closing vertex")
        if not np.all(np.isfinite(v)):
            raise InputError("polyline vertices must be finite")
        if not np.allclose(v[0], v[-1], rtol=0, atol=1e-12):
            raise InputError("polyline must be closed (first vertex equal to last)")
        v[-1] = v[0]
        area = _signed_area(v)
        if abs(area) <= 0:
            raise InputError("polyline encloses zero area")
        if area < 0:
            v = v[::-1].copy()
        if check_simple and not LinearRing(v).is_simple:
            raise InputError("polyline is self-intersecting")
        super().__init__(2, v.min(axis=0), v.max(axis=0))
        self.vertices = v
        self.area = abs(area)
        self._index = None
        self.convex = _is_convex_polygon(v)

    @classmethod
    def from_points(cls, points, **kw):
        p = np.asarray(points, dtype=float)
        if not np.allclose(p[0], p[-1]):
            p = np.vstack([p, p[:1]])
        return cls(p, **kw)

    def _contains(self, pts):
        n_edges = len(self.vertices) - 1
        if len(pts) * n_edges <= 200_000:
            return winding_numbers(self.vertices, pts) != 0
        if self._index is None:
            self._index = _CellIndex(self.vertices, self.lo, self.hi)
        return self._index.query(pts)

    def perimeter(self):
        return float(np.sum(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)))

    def boundary_polyline(self, spacing):
        return subdivide_polyline(self.vertices, spacing)

    def describe(self):
        return {"kind": self.kind, "vertices": self.vertices.tolist()}


def _is_convex_polygon(v):
    e = np.diff(v, axis=0)
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool(np.all(cross >= -1e-12))


class FlowImage(Domain):
    """Image of a base domain under a built transport map.

    ``membership="inverse"`` integrates each query backward to t=0 and tests
    the base domain; ``membership="boundary"`` tests the advected boundary
    polyline instead (much faster, used for long chain runs).
    """

    kind = "flow_image"

    def __init__(self, transport_map, membership="inverse"):
        if membership not in ("inverse", "boundary"):
            raise InputError(f"unknown flow_image membership mode {membership!r}")
        boundary = transport_map.boundaries[-1]
        pad = 2 * transport_map.config.h
        super().__init__(2, boundary.min(axis=0) - pad, boundary.max(axis=0) + pad)
        self.map = transport_map
        self.membership = membership
        self.archive = None
        self._poly = None

    @property
    def boundary_domain(self):
        if self._poly is None:
            self._poly = Polyline2D(self.map.boundaries[-1], check_simple=False)
        return self._poly

    def _contains(self, pts):
        if self.membership == "boundary":
            return self.boundary_domain.contains_many(pts)
        return self.map.inverse_membership(pts)

    def perimeter(self):
        return self.boundary_domain.perimeter()

    def describe(self):
        out = {"kind": self.kind, "membership": self.membership}
        if self.archive is not None:
            out["archive"] = str(self.archive)
        return out


def contains(domain, x):
    return domain.contains(x)


def _uniform_box(rng, lo, hi, n):
    return lo + (hi - lo) * rng.random((n, lo.size))


def sample_uniform(domain, n, rng, max_factor=100):
    """Exact uniform samples by rejection from the bounding box."""
    if n <= 0:
        return np.empty((0, domain.dim))
    lo, hi = domain.bounding_box
    chunks, got, proposed = [], 0, 0
    batch = max(1024, 2 * n)
    limit = max(max_factor * n, 100_000)
    while got < n:
        if proposed >= limit:
            raise EmptyDomainError(
                f"only {got} of {n} samples accepted after {proposed} proposals in {domain.kind}"
            )
        cand = _uniform_box(rng, lo, hi, batch)
        proposed += batch
        acc = cand[domain.contains_many(cand)]
        chunks.append(acc)
        got += len(acc)
    return np.concatenate(chunks)[:n]


def _check_box(domain):
    if not np.all(domain.hi > domain.lo):
        raise InputError("degenerate bounding box")


def volume_mc(domain, n=1_000_000, seed=0):
    """Hit-or-miss volume estimate; returns ``(estimate, stderr)``."""
    if n < 1000:
        raise InputError("volume_mc needs n >= 1000")
    _check_box(domain)
    rng = stream(seed, "volume")
    lo, hi = domain.bounding_box
    hits = 0
    for start in range(0, n, _CHUNK * 4):
        m = min(_CHUNK * 4, n - start)
        hits += int(np.count_nonzero(domain.contains_many(_uniform_box(rng, lo, hi, m))))
    p = hits / n
    vol = domain.box_volume
    return vol * p, vol * math.sqrt(p * (1 - p) / n)


def _ray_exits(domain, start, dirs, max_len, n_march=64, n_bisect=40):
    """Largest s with start + s*dir inside, up to the first exit along each ray."""
    k = len(dirs)
    step = max_len / n_march
    s_in = np.zeros(k)
    s_out = np.full(k, np.nan)
    live = np.ones(k, dtype=bool)
    for j in range(1, n_march + 1):
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        inside = domain.contains_many(start + j * step * dirs[idx])
        s_in[idx[inside]] = j * step
        s_out[idx[~inside]] = j * step
        live[idx[~inside]] = False
    hit = np.flatnonzero(~np.isnan(s_out))
    lo, hi = s_in[hit], s_out[hit]
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        inside = domain.contains_many(start + mid[:, None] * dirs[hit])
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    s_in[hit] = lo
    return s_in


def _refine_pair(domain, p, q, cap, rng, rounds=8, fan=24):
    # alternately move each endpoint to the farthest exit point seen from the other
    best = float(np.linalg.norm(q - p))
    spread = 0.5
    for _ in range(rounds):
        for _side in range(2):
            u = (q - p) / max(np.linalg.norm(q - p), 1e-300)
            dirs = u + spread * rng.standard_normal((fan, len(u)))
            dirs = np.vstack([u, dirs])
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            s = _ray_exits(domain, p, dirs, cap)
            j = int(np.argmax(s))
            if s[j] > best:
                best = float(s[j])
                q = p + s[j] * dirs[j]
            p, q = q, p
        spread *= 0.5
    return best


def diameter_estimate(domain, n=4096, seed=0, n_pairs=8):
    """Sampled lower bound on the diameter, refined by pushing the farthest pairs outward.

    Each of the ``n_pairs`` farthest sample pairs is improved by alternately
    moving one endpoint to the farthest exit point along a fan of rays cast
    from the other. All endpoints stay inside, so the result is still a lower
    bound. It is capped at the bounding-box diagonal.
    """
    if n < 2:
        raise InputError("diameter_estimate needs n >= 2")
    rng = stream(seed, "diameter")
    try:
        pts = sample_uniform(domain, n, rng)
    except EmptyDomainError as exc:
        raise EmptyDomainError(f"no usable samples for diameter: {exc}") from exc
    cand = pts
    if domain.dim >= 2 and len(pts) > domain.dim + 1:
        try:
            cand = pts[ConvexHull(pts).vertices]
        except QhullError:
            cand = pts
    if len(cand) > 2000:
        cand = cand[:2000]
    d = np.linalg.norm(cand[:, None, :] - cand[None, :, :], axis=-1)
    iu = np.triu_indices(len(cand), k=1)
    order = np.argsort(d[iu])[::-1][:n_pairs]
    best = float(d[iu][order[0]]) if len(order) else 0.0
    cap = domain.box_diagonal
    for k in order:
        p, q = cand[iu[0][k]], cand[iu[1][k]]
        if np.linalg.norm(q - p) == 0:
            continue
        best = max(best, _refine_pair(domain, p, q, cap, rng))
    return min(best, cap)


def iso_ratio_estimate(domain, n=1_000_000, seed=0):
    """Boundary measure over Monte-Carlo volume."""
    if isinstance(domain, FlowImage) and domain.map.boundaries is None:
        raise UnsupportedError("flow_image without an advected boundary has no perimeter")
    perimeter = domain.perimeter()
    if isinstance(domain, Box):
        vol = domain.box_volume
    else:
        vol, _ = volume_mc(domain, n, seed)
    return perimeter / vol


def set_distance(samples_a, samples_b):
    """Minimum pairwise Euclidean distance between two point sets."""
    a = np.atleast_2d(np.asarray(samples_a, dtype=float))
    b = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise InputError("set_distance needs two non-empty sample lists")
    if a.shape[1] != b.shape[1]:
        raise InputError("sample lists have different dimensions")
    dist, _ = cKDTree(b).query(a, k=1)
    return float(np.min(dist))


def midpoint_probe(domain, trials=10_000, seed=0):
    """Number of sampled pairs whose midpoint falls outside the domain."""
    rng = stream(seed, "midpoint")
    a = sample_uniform(domain, trials, rng)
    b = sample_uniform(domain, trials, rng)
    return int(np.count_nonzero(~domain.contains_many(0.5 * (a + b))))


class DomainStats:
    def __init__(self, volume, volume_stderr, diameter, iso_ratio, n_samples, seed):
        self.volume = volume
        self.volume_stderr = volume_stderr
        self.diameter = diameter
        self.iso_ratio = iso_ratio
        self.n_samples = n_samples
        self.seed = seed

    def as_dict(self):
        return dict(vars(self))


def domain_stats(domain, n=1_000_000, seed=0):
    vol, err = volume_mc(domain, n, seed)
    diam = diameter_estimate(domain, seed=seed)
    try:
        iso = domain.perimeter() / vol
    except UnsupportedError:
        iso = None
    return DomainStats(vol, err, diam, iso, n, seed)


class Partition:
    """Three-way labelling of points into parts 1, 2, 3.

    Either a slab ``offset_lo <= normal.x <= offset_hi`` (part 3) between two
    half-spaces (part 1 below, part 2 above), or two membership rules with
    part 3 taking everything else.
    """

    def __init__(self, labeler, gap=None, description=None):
        self._labeler = labeler
        self.gap = gap
        self.description = description or {"kind": "rules"}

    @classmethod
    def slab(cls, normal, offset_lo, offset_hi):
        normal = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(normal)
        if norm == 0:
            raise InputError("slab normal must be non-zero")
        if offset_hi < offset_lo:
            raise InputError("slab offsets must satisfy offset_lo <= offset_hi")
        u = normal / norm
        lo, hi = offset_lo / norm, offset_hi / norm

        def label(pts):
            s = pts @ u
            return np.where(s < lo, 1, np.where(s > hi, 2, 3))

        desc = {"kind": "slab", "normal": u.tolist(), "offsets": [lo, hi]}
        return cls(label, gap=hi - lo, description=desc)

    @classmethod
    def from_rules(cls, part1, part2):
        def label(pts):
            in1 = np.asarray(part1(pts), dtype=bool)
            in2 = np.asarray(part2(pts), dtype=bool) & ~in1
            return np.where(in1, 1, np.where(in2, 2, 3))

        return cls(label)

    def labels(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self._labeler(pts), dtype=np.int64)


def load_polyline_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(row[0]), float(row[1])])
            except (ValueError, IndexError):
                if rows:
                    raise InputError(f"bad polyline row {row!r} in {path}")
    return Polyline2D.from_points(np.array(rows))


def domain_from_config(spec, base_dir=None):
    """Build a domain from a config table such as ``{"kind": "ball", "radius": 1}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    allowed = {
        "ball": {"center", "radius", "dim"},
        "box": {"lo", "hi"},
        "l_shape": set(),
        "star": {"center", "radii", "radius_expr", "n_samples"},
        "polyline": {"vertices", "file"},
        "flow_image": {"archive", "membership"},
    }
    if kind not in allowed:
        raise InputError(f"unknown domain kind {kind!r}")
    unknown = set(spec) - allowed[kind]
    if unknown:
        raise InputError(f"unknown key(s) for domain {kind!r}: {', '.join(sorted(unknown))}")
    if kind == "ball":
        dim = int(spec.get("dim", 2))
        center = spec.get("center", [0.0] * dim)
        return Ball(center, float(spec.get("radius", 1.0)))
    if kind == "box":
        return Box(spec.get("lo", [0.0, 0.0]), spec.get("hi", [1.0, 1.0]))
    if kind == "l_shape":
        return LShape()
    if kind == "star":
        center = spec.get("center", [0.0, 0.0])
        if "radii" in spec:
            return StarShaped(center, spec["radii"])
        if "radius_expr" in spec:
            from .potential import parse_expr

            expr = parse_expr(spec["radius_expr"])
            n = int(spec.get("n_samples", 256))
            a = 2 * np.pi * np.arange(n) / n
            vals = expr.evaluate(t=0.0, x=np.cos(a), y=np.sin(a))
            return StarShaped(center, np.broadcast_to(vals, a.shape))
        raise InputError("star domain needs 'radii' or 'radius_expr'")
    if kind == "polyline":
        if "file" in spec:
            path = Path(spec["file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return load_polyline_csv(path)
        if "vertices" in spec:
            return Polyline2D.from_points(spec["vertices"])
        raise InputError("polyline domain needs 'vertices' or 'file'")
    from .archive import load_map

    path = Path(spec["archive"])
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    if "archive" not in spec:
        raise InputError("flow_image domain needs 'archive'")
    image = FlowImage(load_map(path), membership=spec.get("membership", "inverse"))
    image.archive = spec["archive"]
    return image
