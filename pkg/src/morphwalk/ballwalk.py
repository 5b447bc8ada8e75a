"""The BallWalk chain: propose uniformly in B(x, r), stay put if the proposal leaves the domain.

Each chain ``i`` of an experiment with seed ``s`` owns the stream
``stream(s, "chain", i)`` and draws its randomness in fixed blocks of
``BLOCK`` steps, so a chain produces the same path whether it runs alone
(:func:`run_chain`) or inside a vectorized ensemble (:func:`run_ensemble`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .geometry import Domain, sample_uniform
from .rng import stream

__all__ = [
    "BLOCK",
    "ChainConfig",
    "ChainTrajectory",
    "EnsembleResult",
    "uniform_in_ball",
    "step",
    "run_chain",
    "run_ensemble",
    "start_points",
]

BLOCK = 256


def uniform_in_ball(center, r, rng, size=None):
    """Uniform point(s) in the closed ball B(center, r).

    With ``size=None`` a single point of shape ``(n,)`` is returned, otherwise
    an array of shape ``(size, n)``.
    """
    if not r > 0:
        raise InputError(f"ball radius must be positive, got {r}")
    c = np.asarray(center, dtype=float)
    n = c.shape[-1]
    m = 1 if size is None else int(size)
    g = rng.standard_normal((m, n))
    u = rng.random(m)
    pts = c + _scale_directions(g, u, r, n)
    return pts[0] if size is None else pts


def _scale_directions(g, u, r, n):
    norm = np.linalg.norm(g, axis=1)
    norm[norm == 0] = 1.0
    return g * (r * u ** (1.0 / n) / norm)[:, None]


@dataclass
class ChainConfig:
    """Parameters of one BallWalk experiment.

    The start rule is either a fixed point ``start`` or, when ``warm_region``
    is given, a uniform draw from ``warm_region`` intersected with the domain.
    The latter realizes a warm start with ``M = vol(domain) / vol(region)``.
    """

    r: float
    steps: int
    lazy: bool = False
    seed: int = 0
    start: tuple | None = None
    warm_region: Domain | None = None

    def __post_init__(self):
        if not (isinstance(self.r, (int, float)) and math.isfinite(self.r) and self.r > 0):
            raise ConfigError(f"chain radius r must be a positive number, got {self.r!r}")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ConfigError(f"steps must be a non-negative integer, got {self.steps!r}")
        self.steps = int(self.steps)
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.start is None and self.warm_region is None:
            raise ConfigError("chain needs a start point or a warm-start region")
        if self.start is not None and self.warm_region is not None:
            raise ConfigError("give either a start point or a warm-start region, not both")
        if self.start is not None:
            self.start = tuple(float(v) for v in np.ravel(self.start))

    def echo(self):
        out = {"r": self.r, "steps": self.steps, "lazy": self.lazy, "seed": self.seed}
        if self.start is not None:
            out["start"] = list(self.start)
        else:
            out["warm_region"] = self.warm_region.describe()
        return out


@dataclass
class ChainTrajectory:
    states: np.ndarray
    accepted: np.ndarray
    config: ChainConfig = field(repr=False)

    @property
    def steps(self):
        return len(self.accepted)

    @property
    def acceptance_rate(self):
        if self.steps == 0:
            return 0.0
        return float(np.count_nonzero(self.accepted)) / self.steps


def step(x, domain, cfg, rng):
    """One BallWalk transition from ``x``; returns ``(x_next, accepted)``."""
    x = np.asarray(x, dtype=float)
    if not domain.contains(x):
        raise InputError(f"current state {x.tolist()} is not in the domain")
    if cfg.lazy and rng.random() < 0.5:
        return x.copy(), False
    y = uniform_in_ball(x, cfg.r, rng)
    if domain.contains_many(y[None, :])[0]:
        return y, True
    return x.copy(), False


def start_points(domain, cfg, n_chains):
    """Initial states for chains ``0..n_chains-1``."""
    if cfg.start is not None:
        x0 = np.asarray(cfg.start, dtype=float)
        if x0.shape != (domain.dim,):
            raise InputError(f"start point has dimension {x0.size}, domain has {domain.dim}")
        if not domain.contains(x0):
            raise InputError(f"start point {x0.tolist()} is not in the domain")
        return np.tile(x0, (n_chains, 1))
    region = cfg.warm_region
    both = _Intersection(domain, region)
    out = np.empty((n_chains, domain.dim))
    for i in range(n_chains):
        out[i] = sample_uniform(both, 1, stream(cfg.seed, "start", i))[0]
    return out


class _Intersection(Domain):
    kind = "intersection"

    def __init__(self, a, b):
        lo = np.maximum(a.lo, b.lo)
        hi = np.minimum(a.hi, b.hi)
        if np.any(hi < lo):
            raise InputError("warm-start region does not meet the domain")
        super().__init__(a.dim, lo, hi)
        self.a, self.b = a, b

    def _contains(self, pts):
        return self.a.contains_many(pts) & self.b.contains_many(pts)


def _draw_block(rng, n):
    return rng.standard_normal((BLOCK, n)), rng.random(BLOCK), rng.random(BLOCK)


@dataclass
class EnsembleResult:
    checkpoints: np.ndarray
    states: np.ndarray
    accepted: np.ndarray
    trajectories: np.ndarray | None = None
    accepted_flags: np.ndarray | None = None

    @property
    def acceptance_rate(self):
        return self.accepted / np.maximum(self.checkpoints, 1)[:, None]


def run_ensemble(domain, cfg, n_chains, checkpoints=None, record=False):
    """Run chains ``0..n_chains-1`` in lockstep.

    ``states[k]`` holds every chain's state after ``checkpoints[k]`` steps and
    ``accepted[k]`` the number of accepted moves up to then. With
    ``record=True`` the full ``(steps+1, n_chains, dim)`` path is kept.
    """
    if n_chains < 1:
        raise InputError("need at least one chain")
    steps = cfg.steps
    if checkpoints is None:
        checkpoints = [steps]
    ck = np.asarray(sorted(set(int(c) for c in checkpoints)), dtype=np.int64)
    if ck.size and (ck[0] < 0 or ck[-1] > steps):
        raise InputError(f"checkpoints must lie in [0, {steps}]")
    n = domain.dim
    x = start_points(domain, cfg, n_chains)
    rngs = [stream(cfg.seed, "chain", i) for i in range(n_chains)]
    acc = np.zeros(n_chains, dtype=np.int64)
    out_states = np.empty((ck.size, n_chains, n))
    out_acc = np.empty((ck.size, n_chains), dtype=np.int64)
    traj = np.empty((steps + 1, n_chains, n)) if record else None
    flags = np.zeros((steps, n_chains), dtype=bool) if record else None
    if record:
        traj[0] = x
    k = 0
    while k < ck.size and ck[k] == 0:
        out_states[k], out_acc[k] = x, acc
        k += 1
    g = np.empty((n_chains, BLOCK, n))
    u = np.empty((n_chains, BLOCK))
    coin = np.empty((n_chains, BLOCK))
    for t in range(steps):
        j = t % BLOCK
        if j == 0:
            for i, rng in enumerate(rngs):
                g[i], u[i], coin[i] = _draw_block(rng, n)
        y = x + _scale_directions(g[:, j].copy(), u[:, j], cfg.r, n)
        move = domain.contains_many(y)
        if cfg.lazy:
            move &= coin[:, j] >= 0.5
        x = np.where(move[:, None], y, x)
        acc += move
        if record:
            traj[t + 1] = x
            flags[t] = move
        while k < ck.size and ck[k] == t + 1:
            out_states[k], out_acc[k] = x, acc
            k += 1
    return EnsembleResult(ck, out_states, out_acc, traj, flags)


def run_chain(domain, cfg, chain=0):
    """Full trajectory of chain ``chain`` (default 0) of the experiment ``cfg``."""
    if chain:
        # a lone chain i uses the same streams as position i of an ensemble
        res = _run_single(domain, cfg, chain)
    else:
        res = run_ensemble(domain, cfg, 1, record=True)
    return ChainTrajectory(res.trajectories[:, 0, :], res.accepted_flags[:, 0], cfg)


def _run_single(domain, cfg, chain):
    n = domain.dim
    x = start_points(domain, cfg, chain + 1)[chain]
    rng = stream(cfg.seed, "chain", chain)
    states = np.empty((cfg.steps + 1, n))
    flags = np.zeros(cfg.steps, dtype=bool)
    states[0] = x
    for t in range(cfg.steps):
        j = t % BLOCK
        if j == 0:
            g, u, coin = _draw_block(rng, n)
        y = x + _scale_directions(g[j:j + 1].copy(), u[j:j + 1], cfg.r, n)[0]
        move = bool(domain.contains_many(y[None, :])[0])
        if cfg.lazy and coin[j] < 0.5:
            move = False
        if move:
            x = y
        flags[t] = move
        states[t + 1] = x
    return EnsembleResult(np.array([cfg.steps]), states[None, -1:], None, states[:, None, :], flags[:, None])
