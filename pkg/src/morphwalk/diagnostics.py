"""Chain-level diagnostics: TV mixing curves, ergodic flow, s-conductance,
the s-conductance mixing bound, isoperimetry checks and an exact small-chain oracle.

All measures are normalized (the stationary law sigma has total mass 1).
Monte-Carlo estimates carry a standard error; verdicts use a 3-sigma slack.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ballwalk import run_ensemble, uniform_in_ball
from .errors import InputError, ResourceError
from .geometry import Ball, Box, Domain, FlowImage, diameter_estimate, sample_uniform, set_distance
from .rng import stream

__all__ = [
    "Histogram",
    "histogram",
    "tv_distance",
    "default_bins",
    "MixReport",
    "mixing_curve",
    "FlowEstimate",
    "ergodic_flow_estimate",
    "ScanResult",
    "s_conductance_scan",
    "halfspace_family",
    "ls_bound",
    "warm_start_Hs",
    "IsoResult",
    "iso_check",
    "random_slab",
    "ImageSample",
    "image_sample",
    "TransferResult",
    "embedding_iso_transfer",
    "ExactChain",
    "exact_chain",
    "LSReport",
    "MAX_EXACT_STATES",
]

MAX_EXACT_STATES = 16
BOOTSTRAP = 200


# ---------------------------------------------------------------- histograms


@dataclass
class Histogram:
    lo: np.ndarray
    hi: np.ndarray
    bins: tuple
    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    def same_binning(self, other):
        return (
            self.bins == other.bins
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    def normalized(self):
        if self.total == 0:
            raise InputError("histogram is empty")
        return self.counts / self.total


def _bin_index(points, lo, hi, bins):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    b = np.asarray(bins)
    idx = np.floor((pts - lo) / (hi - lo) * b).astype(np.int64)
    # points on the upper face (closed domains) go to the last bin
    idx = np.clip(idx, 0, b - 1)
    return np.ravel_multi_index(tuple(idx.T), tuple(bins))


def histogram(points, lo, hi, bins):
    """Counts of ``points`` on a regular grid of ``bins`` cells per axis over [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.isscalar(bins):
        bins = (int(bins),) * lo.size
    bins = tuple(int(b) for b in bins)
    if len(bins) != lo.size or min(bins) < 1:
        raise InputError(f"bad bin specification {bins} for dimension {lo.size}")
    if not np.all(hi > lo):
        raise InputError("histogram box is degenerate")
    flat = _bin_index(points, lo, hi, bins) if len(points) else np.empty(0, np.int64)
    counts = np.bincount(flat, minlength=int(np.prod(bins))).reshape(bins)
    return Histogram(lo, hi, bins, counts)


def tv_distance(h1, h2):
    """Half the L1 distance between the normalized counts of two histograms."""
    if not h1.same_binning(h2):
        raise InputError("histograms have different binning")
    d = 0.5 * float(np.abs(h1.normalized() - h2.normalized()).sum())
    return min(max(d, 0.0), 1.0)


def default_bins(n_samples, dim, max_bins=16, per_bin=50):
    """Bins per axis: at most ``max_bins``, with about ``per_bin`` samples per cell."""
    return int(max(1, min(max_bins, math.floor((n_samples / per_bin) ** (1.0 / dim) + 1e-9))))


# ---------------------------------------------------------------- mixing curves


@dataclass
class MixReport:
    checkpoints: list
    tv: list
    ci_low: list
    ci_high: list
    acceptance: list
    noise_floor: float
    bins: int
    n_chains: int
    lazy: bool
    config: dict = field(default_factory=dict)

    def first_below(self, threshold):
        """Earliest checkpoint whose TV estimate is below ``threshold`` (None if never)."""
        for t, d in zip(self.checkpoints, self.tv):
            if d < threshold:
                return t
        return None

    def as_dict(self):
        return {
            "checkpoints": list(self.checkpoints),
            "tv": list(self.tv),
            "ci_low": list(self.ci_low),
            "ci_high": list(self.ci_high),
            "acceptance": list(self.acceptance),
            "noise_floor": self.noise_floor,
            "bins": self.bins,
            "n_chains": self.n_chains,
            "lazy": self.lazy,
            "config": self.config,
        }

    def csv_rows(self):
        yield ["t", "tv", "ci_low", "ci_high", "acceptance", "noise_floor"]
        for row in zip(self.checkpoints, self.tv, self.ci_low, self.ci_high, self.acceptance):
            yield [*row, self.noise_floor]


def mixing_curve(domain, cfg, n_chains, bins=None, checkpoints=None, bootstrap=BOOTSTRAP):
    """TV distance between chain states and a rejection-sampled uniform reference.

    The reference has as many points as there are chains; the noise floor is
    the TV between two independent reference draws of that size.
    """
    if n_chains < 100:
        raise InputError(f"mixing_curve needs at least 100 chains, got {n_chains}")
    if checkpoints is None:
        checkpoints = sorted({0, *np.unique(np.geomspace(1, max(cfg.steps, 1), 20).astype(int)), cfg.steps})
    if bins is None:
        bins = default_bins(n_chains, domain.dim)
    lo, hi = domain.bounding_box
    ref = histogram(sample_uniform(domain, n_chains, stream(cfg.seed, "reference")), lo, hi, bins)
    floor_h = histogram(sample_uniform(domain, n_chains, stream(cfg.seed, "floor")), lo, hi, bins)
    noise_floor = tv_distance(ref, floor_h)
    res = run_ensemble(domain, cfg, n_chains, checkpoints=checkpoints)
    boot = stream(cfg.seed, "bootstrap")
    tv, ci_lo, ci_hi, acc = [], [], [], []
    ref_p = ref.normalized().ravel()
    n_cells = ref_p.size
    for k, t in enumerate(res.checkpoints):
        flat = _bin_index(res.states[k], lo, hi, ref.bins)
        d = 0.5 * float(np.abs(np.bincount(flat, minlength=n_cells) / n_chains - ref_p).sum())
        idx = boot.integers(0, n_chains, size=(bootstrap, n_chains))
        counts = np.zeros((bootstrap, n_cells))
        np.add.at(counts, (np.arange(bootstrap)[:, None], flat[idx]), 1.0)
        ds = 0.5 * np.abs(counts / n_chains - ref_p).sum(axis=1)
        lo_q, hi_q = np.percentile(ds, [2.5, 97.5])
        tv.append(d)
        # percentile intervals of a biased statistic can miss the estimate; widen to cover it
        ci_lo.append(float(min(lo_q, d)))
        ci_hi.append(float(max(hi_q, d)))
        acc.append(float(res.accepted[k].sum() / (n_chains * t)) if t else 0.0)
    return MixReport(
        [int(t) for t in res.checkpoints], tv, ci_lo, ci_hi, acc, noise_floor, int(bins),
        int(n_chains), bool(cfg.lazy), cfg.echo(),
    )


# ---------------------------------------------------------------- ergodic flow


def _as_rule(A):
    if isinstance(A, Domain):
        return A.contains_many
    if callable(A):
        return A
    raise InputError("set A must be a Domain or a membership callable")


class _ContinuumWalk:
    def __init__(self, domain, r, lazy):
        if r is None or not r > 0:
            raise InputError(f"radius r must be positive, got {r}")
        self.domain, self.r, self.lazy = domain, float(r), lazy

    def sample(self, n, rng):
        return sample_uniform(self.domain, n, rng)

    def move(self, x, rng):
        y = x + uniform_in_ball(np.zeros(x.shape[1]), self.r, rng, size=len(x))
        ok = self.domain.contains_many(y)
        if self.lazy:
            ok &= rng.random(len(x)) >= 0.5
        return np.where(ok[:, None], y, x)


def _walk_for(domain, r, lazy):
    if isinstance(domain, ExactChain):
        return domain
    return _ContinuumWalk(domain, r, lazy)


@dataclass
class FlowEstimate:
    value: float
    stderr: float
    measure: float
    measure_stderr: float
    n: int


def ergodic_flow_estimate(domain, A, r=None, n=10_000, seed=0, lazy=False):
    """Phi(A) = sigma-mass of one-step moves from A to its complement.

    ``domain`` may be an :class:`ExactChain`, in which case its own
    transition rule is used and ``r`` is ignored.
    """
    if n < 10_000:
        raise InputError(f"ergodic_flow_estimate needs n >= 10^4, got {n}")
    rule = _as_rule(A)
    walk = _walk_for(domain, r, lazy)
    x = walk.sample(n, stream(seed, "flow", "start"))
    in_a = np.asarray(rule(x), dtype=bool)
    if not in_a.any():
        raise InputError("set A received no samples")
    y = walk.move(x, stream(seed, "flow", "move"))
    esc = in_a & ~np.asarray(rule(y), dtype=bool)
    p = float(esc.mean())
    q = float(in_a.mean())
    return FlowEstimate(p, math.sqrt(p * (1 - p) / n), q, math.sqrt(q * (1 - q) / n), n)


@dataclass
class ScanResult:
    """Minimum of Phi(A)/sigma(A) over a finite family: an upper bound on Phi_s."""

    upper_bound: float
    upper_bound_stderr: float
    argmin: int
    entries: list
    skipped: list
    s: float

    def as_dict(self):
        return {
            "phi_s_upper_bound": self.upper_bound,
            "stderr": self.upper_bound_stderr,
            "argmin": self.argmin,
            "s": self.s,
            "entries": self.entries,
            "skipped": self.skipped,
            "note": "minimum over a finite family; an upper bound on the s-conductance, not a certificate",
        }


def s_conductance_scan(domain, r, family, s, n=10_000, seed=0, lazy=False):
    """Scan ``family`` (membership rules) for the smallest conductance ratio.

    Members whose estimated measure falls outside (s, 1/2] are skipped with a
    warning; all members share the same samples and proposals.
    """
    family = list(family)
    if not family:
        raise InputError("conductance family is empty")
    if not 0 <= s <= 1:
        raise InputError(f"s must lie in [0, 1], got {s}")
    walk = _walk_for(domain, r, lazy)
    x = walk.sample(n, stream(seed, "scan", "start"))
    y = walk.move(x, stream(seed, "scan", "move"))
    entries, skipped = [], []
    for i, A in enumerate(family):
        rule = _as_rule(A)
        in_x = np.asarray(rule(x), dtype=bool)
        q = float(in_x.mean())
        if not s < q <= 0.5:
            msg = f"family member {i} has estimated measure {q:.4f} outside ({s}, 1/2]; skipped"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            skipped.append({"index": i, "measure": q})
            continue
        esc = in_x & ~np.asarray(rule(y), dtype=bool)
        p = float(esc.mean())
        ratio = p / q
        # delta method for a ratio of two means over the same samples
        z = (esc - ratio * in_x) / q
        err = float(np.std(z) / math.sqrt(n))
        entries.append({"index": i, "measure": q, "flow": p, "ratio": ratio, "stderr": err})
    if not entries:
        raise InputError(f"no family member has measure in ({s}, 1/2]; the scan is empty")
    best = min(entries, key=lambda e: e["ratio"])
    return ScanResult(best["ratio"], best["stderr"], best["index"], entries, skipped, s)


def halfspace_family(domain, normal, offsets):
    """Membership rules {x : normal.x <= c} for each offset c."""
    u = np.asarray(normal, dtype=float)
    return [(lambda pts, c=c: pts @ u <= c) for c in offsets]


# ---------------------------------------------------------------- bounds


def ls_bound(H_s, s, phi_s, t):
    """H_s + (H_s/s) (1 - phi_s^2/2)^t."""
    if not 0 < s <= 0.5:
        raise InputError(f"s must lie in (0, 1/2], got {s}")
    if H_s < 0 or phi_s < 0:
        raise InputError("H_s and phi_s must be non-negative")
    if t < 0:
        raise InputError("t must be non-negative")
    return H_s + (H_s / s) * (1.0 - phi_s * phi_s / 2.0) ** t


def warm_start_Hs(M, s):
    """Upper bound on H_s for a start law with sigma_0 <= M sigma.

    sigma_0(A) - sigma(A) <= (M-1) sigma(A) <= (M-1) s, while the other side
    sigma(A) - sigma_0(A) is at most min(s, M-1); the two agree for M >= 2.
    """
    if not M >= 1:
        raise InputError(f"warm-start constant M must be >= 1, got {M}")
    if not 0 <= s <= 1:
        raise InputError(f"s must lie in [0, 1], got {s}")
    return max((M - 1) * s, min(s, M - 1))


# ---------------------------------------------------------------- isoperimetry


def _diameter(domain):
    if isinstance(domain, Ball):
        return 2 * domain.radius
    if isinstance(domain, Box):
        return domain.box_diagonal
    return diameter_estimate(domain)


@dataclass
class IsoResult:
    lhs: float
    rhs: float
    sigma: float
    satisfied: bool
    satisfied_raw: bool
    fractions: tuple
    d_raw: float
    d: float
    diameter: float
    degenerate: bool
    constant: float

    def as_tuple(self):
        return self.lhs, self.rhs, self.satisfied

    def as_dict(self):
        return dict(vars(self))


def _iso_terms(labels, pts, gap, scale):
    n = len(labels)
    f = [float(np.count_nonzero(labels == k)) / n for k in (1, 2, 3)]
    degenerate = f[0] == 0 or f[1] == 0
    if degenerate:
        d_raw = 0.0
    elif f[2] == 0:
        # a connected domain split into two parts: they share a boundary
        d_raw = 0.0
    else:
        d_raw = set_distance(pts[labels == 1], pts[labels == 2])
    d = d_raw if gap is None else min(d_raw, gap)
    k = scale * d
    fmin = min(f[0], f[1])
    lhs, rhs = f[2], k * fmin
    var = (f[2] * (1 - f[2]) + k * k * fmin * (1 - fmin) + 2 * k * f[2] * fmin) / n
    return f, d_raw, d, lhs, rhs, math.sqrt(max(var, 0.0)), degenerate


def iso_check(domain, p, n=100_000, seed=0, diameter=None):
    """Check vol(O3) >= (2 d(O1, O2) / D) min(vol O1, vol O2) with normalized volumes.

    ``d`` is the sampled minimum distance, capped by the partition's known gap
    when it has one. ``satisfied`` allows a 3-sigma slack, ``satisfied_raw`` none.
    """
    D = _diameter(domain) if diameter is None else float(diameter)
    pts = sample_uniform(domain, n, stream(seed, "iso"))
    labels = p.labels(pts)
    f, d_raw, d, lhs, rhs, sig, degenerate = _iso_terms(labels, pts, p.gap, 2.0 / D)
    if degenerate:
        warnings.warn("degenerate partition: part 1 or 2 received no samples", RuntimeWarning, stacklevel=2)
    return IsoResult(
        lhs, rhs, sig, bool(lhs >= rhs - 3 * sig), bool(lhs >= rhs), tuple(f), d_raw, d, D,
        degenerate, 2.0 / D,
    )


def random_slab(domain, rng, n_probe=4096):
    """A random parallel-plane partition whose planes cut the domain's extent."""
    from .geometry import Partition

    theta = rng.normal(size=domain.dim)
    theta /= np.linalg.norm(theta)
    probe = sample_uniform(domain, n_probe, rng) @ theta
    a, b = np.sort(rng.uniform(probe.min(), probe.max(), size=2))
    return Partition.slab(theta, a, b)


@dataclass
class ImageSample:
    """Uniform points of a flow image together with their preimages."""

    points: np.ndarray
    preimages: np.ndarray
    dropped: int


def image_sample(tmap, n=10_000, seed=0):
    image = FlowImage(tmap, membership="boundary")
    y = sample_uniform(image, n, stream(seed, "image"))
    x = tmap.inverse(y)
    ok = np.all(np.isfinite(x), axis=1) & tmap.config.domain.contains_many(np.nan_to_num(x, nan=1e300))
    return ImageSample(y[ok], x[ok], int(np.count_nonzero(~ok)))


@dataclass
class TransferResult:
    lhs: float
    rhs: float
    rhs_eq1: float
    sigma: float
    satisfied: bool
    satisfied_eq1: bool
    satisfied_raw: bool
    lipschitz: float
    L_est: float
    d_raw: float
    d: float
    diameter: float
    fractions: tuple
    degenerate: bool

    def as_dict(self):
        return dict(vars(self))


def embedding_iso_transfer(tmap, p, n=10_000, seed=0, L_est=None, diameter=None, sample=None):
    """Transferred inequality on the image partition.

    vol(O3') >= d(O1', O2') min(vol O1', vol O2') / (4 D L) with L = exp(L_est),
    the Lipschitz bound of the time-one map. The same check with the factor
    2 / (D L) is reported as ``satisfied_eq1``.
    """
    if L_est is None:
        L_est = tmap.lipschitz
    L = math.exp(L_est)
    D = _diameter(tmap.config.domain) if diameter is None else float(diameter)
    if sample is None:
        sample = image_sample(tmap, n, seed)
    labels = p.labels(sample.preimages)
    gap = None if p.gap is None else L * p.gap
    f, d_raw, d, lhs, rhs, sig, degenerate = _iso_terms(labels, sample.points, gap, 1.0 / (4 * D * L))
    _, _, _, _, rhs2, sig2, _ = _iso_terms(labels, sample.points, gap, 2.0 / (D * L)) if not degenerate else (0,) * 7
    return TransferResult(
        lhs, rhs, float(rhs2), sig, bool(lhs >= rhs - 3 * sig), bool(lhs >= rhs2 - 3 * sig2),
        bool(lhs >= rhs), L, float(L_est), d_raw, d, D, tuple(f), degenerate,
    )


# ---------------------------------------------------------------- exact oracle


@dataclass
class LSReport:
    checks: int
    violations: int
    worst_margin: float
    worst: dict
    s_values: list
    t_max: int

    @property
    def passed(self):
        return self.violations == 0

    def as_dict(self):
        return {
            "checks": self.checks,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "worst": self.worst,
            "s_values": self.s_values,
            "t_max": self.t_max,
            "verdict": "pass" if self.passed else "fail",
        }


class ExactChain:
    """BallWalk on a handful of lattice points, with exact enumeration.

    From state ``x`` the chain proposes ``x + o`` for an offset ``o`` drawn
    uniformly from the non-zero lattice vectors of length <= ``r_steps`` and
    stays put when ``x + o`` is not a state.
    """

    def __init__(self, coords, r_steps=1, lazy=False):
        coords = np.asarray(coords, dtype=np.int64)
        if coords.ndim == 1:
            coords = coords[:, None]
        k, dim = coords.shape
        if k > MAX_EXACT_STATES:
            raise ResourceError(f"exact enumeration supports at most {MAX_EXACT_STATES} states, got {k}")
        if k < 2:
            raise InputError("an exact chain needs at least two states")
        if not r_steps > 0:
            raise InputError("r_steps must be positive")
        self.coords = coords
        self.dim = dim
        self.r_steps = r_steps
        self.lazy = bool(lazy)
        R = int(math.floor(r_steps))
        self.offsets = np.array(
            [o for o in itertools.product(range(-R, R + 1), repeat=dim) if 0 < sum(v * v for v in o) <= r_steps ** 2]
        )
        self._index = {tuple(c): i for i, c in enumerate(coords.tolist())}
        self.n_states = k
        P = np.zeros((k, k))
        m = len(self.offsets)
        for i, c in enumerate(coords):
            for o in self.offsets:
                j = self._index.get(tuple((c + o).tolist()), i)
                P[i, j] += 1.0 / m
        if self.lazy:
            P = 0.5 * (np.eye(k) + P)
        self.P = P
        self.pi = np.full(k, 1.0 / k)
        self._subsets = None

    # walk protocol shared with the Monte-Carlo estimators
    def sample(self, n, rng):
        return self.coords[rng.integers(0, self.n_states, size=n)].astype(float)

    def move(self, x, rng):
        o = self.offsets[rng.integers(0, len(self.offsets), size=len(x))]
        y = x + o
        ok = self.contains_many(y)
        if self.lazy:
            ok &= rng.random(len(x)) >= 0.5
        return np.where(ok[:, None], y, x)

    def contains_many(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.array([tuple(p) in self._index for p in np.rint(pts).astype(np.int64).tolist()], dtype=bool) & np.all(
            pts == np.rint(pts), axis=1
        )

    def states_of(self, points):
        pts = np.rint(np.atleast_2d(points)).astype(np.int64).tolist()
        return np.array([self._index[tuple(p)] for p in pts], dtype=np.int64)

    def rule(self, states):
        """Membership callable for the subset ``states`` (indices)."""
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(states)] = True
        return lambda pts: mask[self.states_of(pts)]

    # exact quantities
    @property
    def subsets(self):
        """Indicator matrix of all 2^k subsets; row ``b`` is the bitmask ``b``."""
        if self._subsets is None:
            b = np.arange(2 ** self.n_states)
            self._subsets = ((b[:, None] >> np.arange(self.n_states)) & 1).astype(float)
        return self._subsets

    def measures(self):
        return self.subsets @ self.pi

    def sigma_t(self, sigma0, t):
        sig = np.asarray(sigma0, dtype=float)
        for _ in range(int(t)):
            sig = sig @ self.P
        return sig

    def ergodic_flow(self, A):
        a = self._mask(A)
        return float(self.pi[a] @ self.P[np.ix_(a, ~a)].sum(axis=1))

    def ergodic_flows(self):
        S = self.subsets
        return np.sum((S @ (self.pi[:, None] * self.P)) * (1 - S), axis=1)

    def _mask(self, A):
        A = np.asarray(A)
        if A.dtype == bool and A.shape == (self.n_states,):
            return A
        mask = np.zeros(self.n_states, dtype=bool)
        mask[A.astype(np.int64)] = True
        return mask

    def phi_s(self, s):
        """Exact s-conductance; ``inf`` when no subset has measure in (s, 1/2]."""
        meas = self.measures()
        sel = (meas > s + 1e-12) & (meas <= 0.5 + 1e-12)
        if not sel.any():
            return math.inf
        return float(np.min(self.ergodic_flows()[sel] / meas[sel]))

    def scan(self, masks, s):
        """Exact minimum of Phi(A)/sigma(A) over the given subsets with measure in (s, 1/2]."""
        best = math.inf
        for A in masks:
            a = self._mask(A)
            q = float(self.pi[a].sum())
            if s < q <= 0.5:
                best = min(best, self.ergodic_flow(a) / q)
        return best

    def H_s_sets(self, sigma0, s):
        """sup |sigma0(A) - sigma(A)| over subsets with sigma(A) <= s."""
        meas = self.measures()
        dev = self.subsets @ (np.asarray(sigma0, float) - self.pi)
        return float(np.max(np.abs(dev[meas <= s + 1e-12])))

    def H_s(self, sigma0, s):
        """sup over fractional sets 0 <= g <= 1 with sigma(g) <= s.

        Splitting each state into a continuum of equal pieces turns the chain
        into one with an atom-free stationary law; its sets are exactly the
        fractional sets here. The sup is a fractional knapsack.
        """
        d = np.asarray(sigma0, float) - self.pi
        best = 0.0
        for sign in (1.0, -1.0):
            ratio = sign * d / self.pi
            mass, val = float(s), 0.0
            for i in np.argsort(-ratio, kind="stable"):
                if ratio[i] <= 0 or mass <= 0:
                    break
                take = min(self.pi[i], mass)
                val += take * ratio[i]
                mass -= take
            best = max(best, val)
        return best

    def s_grid(self, n_uniform=100):
        meas = np.unique(np.round(self.measures(), 12))
        meas = meas[(meas > 0) & (meas <= 0.5)]
        vals = set(np.linspace(0, 0.5, n_uniform + 1)[1:].tolist())
        vals.update(meas.tolist())
        vals.update((meas - 1e-9).tolist())
        return sorted(v for v in vals if v > 0)

    def ls_check(self, starts, t_max=100, s_values=None):
        """Check the s-conductance bound for every subset, start law, s and t <= t_max."""
        S = self.subsets
        s_values = self.s_grid() if s_values is None else list(s_values)
        phis = {s: self.phi_s(s) for s in s_values}
        ts = np.arange(t_max + 1)
        checks, violations = 0, 0
        worst_margin, worst = -math.inf, {}
        for j, sigma0 in enumerate(starts):
            sig = np.asarray(sigma0, dtype=float)
            if sig.shape != (self.n_states,) or np.any(sig < -1e-15) or abs(sig.sum() - 1) > 1e-9:
                raise InputError(f"start law {j} is not a probability vector")
            lhs = np.empty(t_max + 1)
            for t in ts:
                lhs[t] = np.max(np.abs(S @ (sig - self.pi)))
                sig = sig @ self.P
            for s in s_values:
                if math.isinf(phis[s]):
                    continue
                H = self.H_s(sigma0, s)
                bound = np.array([ls_bound(H, s, phis[s], int(t)) for t in ts])
                margin = lhs - bound
                checks += margin.size * S.shape[0]
                bad = margin > 1e-12
                violations += int(np.count_nonzero(bad))
                k = int(np.argmax(margin))
                if margin[k] > worst_margin:
                    worst_margin = float(margin[k])
                    worst = {"start": j, "s": s, "t": k, "lhs": float(lhs[k]), "bound": float(bound[k])}
        return LSReport(checks, violations, worst_margin, worst, list(s_values), t_max)

    def simulate(self, sigma0, t, n, seed=0):
        """Monte-Carlo state counts after ``t`` steps from ``sigma0``."""
        rng = stream(seed, "exact", "simulate")
        start = rng.choice(self.n_states, size=n, p=np.asarray(sigma0, float))
        x = self.coords[start].astype(float)
        for _ in range(int(t)):
            x = self.move(x, rng)
        return np.bincount(self.states_of(x), minlength=self.n_states)

    def point_mass(self, i):
        e = np.zeros(self.n_states)
        e[i] = 1.0
        return e

    def warm_start(self, states):
        """Uniform law on ``states``; returns ``(sigma0, M)`` with sigma0 <= M sigma."""
        mask = self._mask(states)
        sig = mask / mask.sum()
        return sig, float(self.n_states / mask.sum())


def exact_chain(kind, states, r_steps=1, lazy=False, shape=None):
    """A path of ``states`` points or a 2D grid (``shape`` rows x cols)."""
    if states > MAX_EXACT_STATES:
        raise ResourceError(f"exact enumeration supports at most {MAX_EXACT_STATES} states, got {states}")
    if kind == "path":
        return ExactChain(np.arange(states), r_steps, lazy)
    if kind == "grid":
        if shape is None:
            rows = max(d for d in range(1, int(math.isqrt(states)) + 1) if states % d == 0)
            shape = (rows, states // rows)
        rows, cols = shape
        if rows * cols != states:
            raise InputError(f"grid shape {shape} does not hold {states} states")
        coords = [(i, j) for i in range(rows) for j in range(cols)]
        return ExactChain(coords, r_steps, lazy)
    raise InputError(f"unknown exact chain kind {kind!r}")
