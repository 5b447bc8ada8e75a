"""Command-line front end.

    morphwalk flow build   --config exp.toml --out map.npz
    morphwalk flow verify  --archive map.npz --out verify.json
    morphwalk sample run   --config exp.toml --out samples.csv
    morphwalk diag tv|flow|conductance|iso --config exp.toml --out report.json
    morphwalk diag oracle  --states 3 --out oracle.json
    morphwalk report       --config exp.toml --out results/

Exit status: 0 on success, 1 for invalid input or configuration, 2 when a
numerical computation fails (no convergence, blow-up, topology change).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import subprocess
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ComputationError, ConfigError, InputError, ValidationError
from .parallel import set_threads

__all__ = ["main", "run_command", "version_string"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def version_string():
    """Package version, with the git revision appended when available."""
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        rev = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+g{rev}" if rev else __version__


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _write_json(path, payload):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _write_csv(path, rows, meta):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(_jsonable(meta), sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


class _Context:
    """Validated config plus the effective seed and artifact metadata."""

    def __init__(self, args):
        from .config import DEFAULTS, load_config, validate

        if getattr(args, "config", None):
            self.cfg, self.raw = load_config(args.config)
            self.base_dir = Path(args.config).resolve().parent
        else:
            self.cfg, self.raw = validate({}), {}
            self.base_dir = Path.cwd()
        self.defaults = DEFAULTS
        seed = args.seed if getattr(args, "seed", None) is not None else self.cfg["seed"]
        if seed < 0:
            raise ConfigError("seed must be non-negative")
        self.seed = int(seed)
        threads = args.threads if getattr(args, "threads", None) is not None else self.raw.get("threads")
        self.threads = set_threads(threads)
        self.version = version_string()

    def meta(self, command):
        return {"command": command, "config": self.raw, "seed": self.seed, "version": self.version}

    def domain(self, key="domain"):
        from .geometry import domain_from_config

        spec = self.cfg.get(key)
        if spec is None:
            raise ConfigError(f"config needs a [{key}] table")
        return domain_from_config(spec, self.base_dir)

    def target(self):
        return self.domain("target" if "target" in self.cfg else "domain")

    def flow_config(self):
        from .flow import FlowConfig

        g, f = self.cfg["grid"], self.cfg["flow"]
        pde = self.cfg.get("pde", {})
        return FlowConfig(
            domain=self.domain(),
            potential=self.cfg["potential"],
            steps=f["T"],
            h=g["h"],
            pad=g.get("pad"),
            tol=pde.get("tol", g["tol"]),
            max_iter=pde.get("max_iter", g["max_iter"]),
            seed_spacing=f["seed_spacing"],
            dilation=f["dilation"],
            **({"node_budget": g["node_budget"]} if "node_budget" in g else {}),
        )

    def chain_config(self, domain, lazy=None):
        from .ballwalk import ChainConfig

        c = self.cfg["chain"]
        seed = self.seed if "seed" not in c or self._seed_overridden else c["seed"]
        warm = c.get("warm_start")
        start = c.get("start")
        region = None
        if warm is not None:
            from .geometry import domain_from_config

            if "region" not in warm:
                raise ConfigError("chain.warm_start needs a 'region' table")
            region = domain_from_config(warm["region"], self.base_dir)
        elif start is None:
            start = (0.5 * (domain.lo + domain.hi)).tolist()
        return ChainConfig(
            r=c["r"], steps=c["steps"], lazy=c["lazy"] if lazy is None else lazy, seed=seed,
            start=start, warm_region=region,
        )

    _seed_overridden = False


def _context(args):
    ctx = _Context(args)
    ctx._seed_overridden = getattr(args, "seed", None) is not None
    return ctx


def _out(args, default):
    return Path(args.out) if args.out else Path(default)


# ------------------------------------------------------------------ flow


def cmd_flow_build(args):
    from .archive import save_map
    from .flow import build_map

    ctx = _context(args)
    tmap = build_map(ctx.flow_config())
    out = _out(args, "map.npz")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_map(tmap, out, meta=ctx.meta("flow build"))
    print(f"wrote {out} ({tmap.steps} steps, {len(tmap.seeds)} seeds, L_est = {tmap.lipschitz:.6g})")


def verify_map(tmap, n_pairs=10_000, seed=0, volume_samples=0):
    from .flow import bilipschitz_check, jacobian_dets
    from .geometry import FlowImage, volume_mc

    dets = jacobian_dets(tmap)
    bl = bilipschitz_check(tmap, n_pairs=n_pairs, seed=seed)
    flux = [f.normalized for f in tmap.flux]
    out = {
        "h": tmap.config.h,
        "steps": tmap.steps,
        "n_seeds": len(tmap.seeds),
        "det_max_deviation": dets.max_deviation,
        "det_max_deviation_fd": dets.max_deviation_fd,
        "det_tolerance": "max |det J - 1| over seeds at t = 1 (variational); fd: seed-lattice differences",
        "flux_normalized_max": max(flux) if flux else 0.0,
        "flux_normalized": flux,
        "bilipschitz": {
            "ratio_min": bl.ratio_min,
            "ratio_max": bl.ratio_max,
            "L_est": bl.lipschitz,
            "lower": bl.lower,
            "upper": bl.upper,
            "slack": bl.slack,
            "n_pairs": bl.n_pairs,
            "satisfied": bl.satisfied,
        },
    }
    if len(tmap.fields) == tmap.steps:
        back = tmap.inverse(tmap.images)
        err = np.linalg.norm(back - tmap.seeds, axis=1)
        out["round_trip_max_error"] = float(np.nanmax(err)) if err.size else 0.0
        out["round_trip_tolerance"] = 10 * tmap.config.h
    if volume_samples:
        base, base_err = volume_mc(tmap.config.domain, volume_samples, seed)
        img, img_err = volume_mc(FlowImage(tmap), volume_samples, seed + 1)
        comb = math.hypot(base_err, img_err)
        out["volume"] = {
            "base": base,
            "base_stderr": base_err,
            "image": img,
            "image_stderr": img_err,
            "within_3_stderr": abs(base - img) <= 3 * comb,
        }
    return out


def cmd_flow_verify(args):
    from .archive import load_map

    ctx = _context(args)
    archive = args.archive or args.positional
    if not archive:
        raise InputError("flow verify needs --archive")
    tmap = load_map(archive)
    diag = ctx.cfg["diagnostics"]
    report = verify_map(tmap, seed=ctx.seed, volume_samples=diag.get("volume_samples", 0))
    report["archive"] = str(archive)
    report["meta"] = ctx.meta("flow verify")
    report["meta"]["map"] = {"config": tmap.header["config"], **tmap.header.get("meta", {})}
    out = _out(args, "verify.json")
    _write_json(out, report)
    print(f"wrote {out}: max|det-1| = {report['det_max_deviation']:.3g}")


# ------------------------------------------------------------------ sampling


def cmd_sample_run(args):
    from .ballwalk import run_ensemble

    ctx = _context(args)
    domain = ctx.target()
    ccfg = ctx.chain_config(domain)
    n_chains = ctx.cfg["chain"]["chains"]
    res = run_ensemble(domain, ccfg, n_chains, record=True)
    dim = domain.dim
    coords = ["x", "y"] if dim == 2 else [f"x{i + 1}" for i in range(dim)]

    def rows():
        yield ["chain", "t", *coords, "accepted"]
        for i in range(n_chains):
            for t in range(ccfg.steps + 1):
                acc = int(res.accepted_flags[t - 1, i]) if t else 0
                yield [i, t, *res.trajectories[t, i].tolist(), acc]

    out = _out(args, "samples.csv")
    meta = ctx.meta("sample run")
    meta["chain"] = ccfg.echo()
    _write_csv(out, rows(), meta)
    rate = float(res.accepted_flags.mean()) if ccfg.steps else 0.0
    print(f"wrote {out}: {n_chains} chains x {ccfg.steps} steps, acceptance {rate:.4f}")


# ------------------------------------------------------------------ diagnostics


def _checkpoints(ctx, steps):
    ck = ctx.cfg["diagnostics"].get("checkpoints")
    if ck is None:
        return None
    return [int(c) for c in ck]


def cmd_diag_tv(args):
    from .diagnostics import mixing_curve

    ctx = _context(args)
    domain = ctx.target()
    diag = ctx.cfg["diagnostics"]
    n_chains = ctx.cfg["chain"]["chains"]
    base = ctx.chain_config(domain)
    variants = [base.lazy, not base.lazy] if diag["both_lazy"] else [base.lazy]
    curves = {}
    rows = [["lazy", "t", "tv", "ci_low", "ci_high", "acceptance", "noise_floor"]]
    for lazy in variants:
        ccfg = ctx.chain_config(domain, lazy=lazy)
        rep = mixing_curve(domain, ccfg, n_chains, bins=diag.get("bins"),
                           checkpoints=_checkpoints(ctx, ccfg.steps))
        key = "lazy" if lazy else "plain"
        d = rep.as_dict()
        d["threshold"] = rep.noise_floor + 0.05
        d["first_below_threshold"] = rep.first_below(rep.noise_floor + 0.05)
        curves[key] = d
        for row in list(rep.csv_rows())[1:]:
            rows.append([int(lazy), *row])
    out = _out(args, "tv.json")
    meta = ctx.meta("diag tv")
    _write_json(out, {"curves": curves, "meta": meta})
    _write_csv(out.with_suffix(".csv"), rows, meta)
    for key, d in curves.items():
        print(f"{key}: noise floor {d['noise_floor']:.4f}, below floor+0.05 at t = {d['first_below_threshold']}")
    print(f"wrote {out} and {out.with_suffix('.csv')}")


def _halfspace(normal, offset):
    u = np.asarray(normal, dtype=float)
    return lambda pts: pts @ u <= offset


def cmd_diag_flow(args):
    from .diagnostics import ergodic_flow_estimate

    ctx = _context(args)
    domain = ctx.target()
    diag = ctx.cfg["diagnostics"]
    spec = diag.get("set", {})
    normal = spec.get("normal", [1.0] + [0.0] * (domain.dim - 1))
    offset = spec.get("offset", float(0.5 * (domain.lo + domain.hi) @ np.asarray(normal, float)))
    ccfg = ctx.chain_config(domain)
    est = ergodic_flow_estimate(domain, _halfspace(normal, offset), r=ccfg.r, n=diag["n"],
                                seed=ctx.seed, lazy=ccfg.lazy)
    report = {
        "set": {"kind": "halfspace", "normal": normal, "offset": offset},
        "r": ccfg.r,
        "lazy": ccfg.lazy,
        "ergodic_flow": est.value,
        "stderr": est.stderr,
        "measure": est.measure,
        "measure_stderr": est.measure_stderr,
        "n": est.n,
        "meta": ctx.meta("diag flow"),
    }
    out = _out(args, "flow.json")
    _write_json(out, report)
    print(f"Phi(A) = {est.value:.5g} +- {est.stderr:.2g}; wrote {out}")


def cmd_diag_conductance(args):
    from .diagnostics import s_conductance_scan

    ctx = _context(args)
    domain = ctx.target()
    diag = ctx.cfg["diagnostics"]
    fam = diag.get("family", {})
    normal = fam.get("normal", [1.0] + [0.0] * (domain.dim - 1))
    u = np.asarray(normal, float)
    if "offsets" in fam:
        offsets = [float(o) for o in fam["offsets"]]
    else:
        corners = np.array(np.meshgrid(*zip(domain.lo, domain.hi))).reshape(domain.dim, -1).T @ u
        offsets = np.linspace(corners.min(), corners.max(), 11)[1:-1].tolist()
    ccfg = ctx.chain_config(domain)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        scan = s_conductance_scan(domain, ccfg.r, [_halfspace(u, c) for c in offsets], diag["s"],
                                  n=diag["n"], seed=ctx.seed, lazy=ccfg.lazy)
    report = scan.as_dict()
    report.update({"offsets": offsets, "normal": normal, "r": ccfg.r, "lazy": ccfg.lazy,
                   "meta": ctx.meta("diag conductance")})
    out = _out(args, "conductance.json")
    _write_json(out, report)
    print(f"Phi_s upper bound {scan.upper_bound:.5g} +- {scan.upper_bound_stderr:.2g}; wrote {out}")


def _safe_diameter(domain, factor, seed):
    """Exact diameter for balls and boxes, otherwise the sampled estimate times ``factor``."""
    from .geometry import Ball, Box, diameter_estimate

    if isinstance(domain, Ball):
        return 2 * domain.radius, "exact"
    if isinstance(domain, Box):
        return domain.box_diagonal, "exact"
    return factor * diameter_estimate(domain, seed=seed), f"estimate x {factor}"


def cmd_diag_iso(args):
    from .diagnostics import embedding_iso_transfer, image_sample, iso_check, random_slab
    from .geometry import FlowImage
    from .rng import stream

    ctx = _context(args)
    domain = ctx.target()
    diag = ctx.cfg["diagnostics"]
    n_parts = diag["partitions"]
    base = domain.map.config.domain if isinstance(domain, FlowImage) else domain
    D, D_source = _safe_diameter(base, diag["diameter_factor"], ctx.seed)
    rng = stream(ctx.seed, "partitions")
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if isinstance(domain, FlowImage):
            tmap = domain.map
            sample = image_sample(tmap, diag["n"], ctx.seed)
            for _ in range(n_parts):
                p = random_slab(tmap.config.domain, rng)
                r = embedding_iso_transfer(tmap, p, sample=sample, diameter=D)
                results.append({"partition": p.description, **r.as_dict()})
            mode = "embedding_transfer"
        else:
            if not domain.convex:
                warnings.warn("isoperimetry check on a domain not flagged convex", RuntimeWarning)
            for k in range(n_parts):
                p = random_slab(domain, rng)
                r = iso_check(domain, p, n=diag["n"], seed=ctx.seed * 1_000_003 + k, diameter=D)
                results.append({"partition": p.description, **r.as_dict()})
            mode = "iso_check"
    violations = sum(not r["satisfied"] for r in results)
    report = {
        "mode": mode,
        "partitions": n_parts,
        "diameter": D,
        "diameter_source": D_source,
        "violations_beyond_3sigma": violations,
        "violations_raw": sum(not r["satisfied_raw"] for r in results),
        "results": results,
        "meta": ctx.meta("diag iso"),
    }
    if mode == "embedding_transfer":
        report["violations_eq1_constant"] = sum(not r["satisfied_eq1"] for r in results)
    out = _out(args, "iso.json")
    _write_json(out, report)
    print(f"{mode}: {violations} violations beyond 3 sigma over {n_parts} partitions; wrote {out}")


def oracle_report(kind="path", states=3, r_steps=1, lazy=False, shape=None, t_max=100):
    from .diagnostics import exact_chain, warm_start_Hs

    chain = exact_chain(kind, states, r_steps=r_steps, lazy=lazy, shape=shape)
    k = chain.n_states
    starts = [chain.point_mass(i) for i in range(k)]
    warm = []
    for size in sorted({max(1, k // 4), max(1, k // 2)}):
        sig0, M = chain.warm_start(range(size))
        starts.append(sig0)
        warm.append((sig0, M))
    ls = chain.ls_check(starts, t_max=t_max)
    warm_checks = []
    for sig0, M in warm:
        for s in chain.s_grid(10):
            got = chain.H_s_sets(sig0, s)
            warm_checks.append({"M": M, "s": s, "H_s": got, "bound": warm_start_Hs(M, s),
                                "ok": got <= warm_start_Hs(M, s) + 1e-12})
    phi_s = {f"{s:.6g}": chain.phi_s(s) for s in chain.s_grid(10)}
    return {
        "kind": kind,
        "states": k,
        "r_steps": r_steps,
        "lazy": lazy,
        "coords": chain.coords,
        "transition_matrix": chain.P,
        "stationary": chain.pi,
        "phi_singletons": [chain.ergodic_flow([i]) for i in range(k)],
        "phi_s": phi_s,
        "ls_bound": ls.as_dict(),
        "warm_start_checks": warm_checks,
        "warm_start_ok": all(c["ok"] for c in warm_checks),
    }


def cmd_diag_oracle(args):
    ctx = _context(args)
    o = dict(ctx.cfg["diagnostics"].get("oracle", {}))
    kind = args.kind or o.get("kind", "path")
    states = args.states if args.states is not None else o.get("states", 3)
    r_steps = args.r_steps if args.r_steps is not None else o.get("r_steps", 1)
    lazy = args.lazy or o.get("lazy", False)
    report = oracle_report(kind, states, r_steps, lazy, o.get("shape"), o.get("t_max", 100))
    report["meta"] = ctx.meta("diag oracle")
    out = _out(args, "oracle.json")
    _write_json(out, report)
    verdict = report["ls_bound"]["verdict"]
    print(f"Phi({{0}}) = {report['phi_singletons'][0]:.6g}; s-conductance bound {verdict}; wrote {out}")


# ------------------------------------------------------------------ report


def cmd_report(args):
    out_dir = _out(args, "results")
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = _context(args)
    summary = {"meta": ctx.meta("report"), "artifacts": {}}
    steps = []
    if "flow" in ctx.raw or "potential" in ctx.raw:
        steps.append(("flow_build", cmd_flow_build, "map.npz"))
        steps.append(("flow_verify", cmd_flow_verify, "verify.json"))
    if "chain" in ctx.raw:
        steps.append(("sample_run", cmd_sample_run, "samples.csv"))
        if ctx.cfg["chain"]["chains"] >= 100:
            steps.append(("diag_tv", cmd_diag_tv, "tv.json"))
        steps.append(("diag_flow", cmd_diag_flow, "flow.json"))
        steps.append(("diag_conductance", cmd_diag_conductance, "conductance.json"))
    if "domain" in ctx.cfg or "target" in ctx.cfg:
        steps.append(("diag_iso", cmd_diag_iso, "iso.json"))
    steps.append(("diag_oracle", cmd_diag_oracle, "oracle.json"))
    for name, fn, filename in steps:
        sub = argparse.Namespace(**vars(args))
        sub.out = str(out_dir / filename)
        sub.archive = str(out_dir / "map.npz")
        sub.positional = None
        sub.states = sub.kind = sub.r_steps = None
        sub.lazy = False
        fn(sub)
        summary["artifacts"][name] = filename
    _write_json(out_dir / "report.json", summary)
    print(f"wrote {out_dir / 'report.json'}")


# ------------------------------------------------------------------ entry points


def _common(p, config=True):
    if config:
        p.add_argument("--config", help="experiment config (TOML)")
    p.add_argument("--out", help="output path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, help="worker threads, 0 = one per CPU (env MORPHWALK_THREADS)")


def build_parser():
    parser = _Parser(prog="morphwalk", description="BallWalk sampling on flow-image domains")
    parser.add_argument("--version", action="version", version=f"morphwalk {__version__}")
    sub = parser.add_subparsers(dest="group", parser_class=_Parser)

    flow = sub.add_parser("flow", help="build and verify transport maps")
    fsub = flow.add_subparsers(dest="action", parser_class=_Parser)
    p = fsub.add_parser("build")
    _common(p)
    p.set_defaults(func=cmd_flow_build)
    p = fsub.add_parser("verify")
    _common(p)
    p.add_argument("--archive")
    p.add_argument("positional", nargs="?")
    p.set_defaults(func=cmd_flow_verify)

    sample = sub.add_parser("sample", help="run BallWalk chains")
    ssub = sample.add_subparsers(dest="action", parser_class=_Parser)
    p = ssub.add_parser("run")
    _common(p)
    p.set_defaults(func=cmd_sample_run)

    diag = sub.add_parser("diag", help="chain diagnostics")
    dsub = diag.add_subparsers(dest="action", parser_class=_Parser)
    for name, fn in (("tv", cmd_diag_tv), ("flow", cmd_diag_flow),
                     ("conductance", cmd_diag_conductance), ("iso", cmd_diag_iso)):
        p = dsub.add_parser(name)
        _common(p)
        p.set_defaults(func=fn)
    p = dsub.add_parser("oracle")
    _common(p)
    p.add_argument("--states", type=int)
    p.add_argument("--kind", choices=["path", "grid"])
    p.add_argument("--r-steps", dest="r_steps", type=float)
    p.add_argument("--lazy", action="store_true")
    p.set_defaults(func=cmd_diag_oracle)

    p = sub.add_parser("report", help="run the configured pipeline into a directory")
    _common(p)
    p.set_defaults(func=cmd_report)
    return parser


def run_command(argv):
    """Run one CLI invocation and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        if not hasattr(args, "func"):
            raise InputError("missing subcommand; see 'morphwalk --help'")
        args.func(args)
    except ValidationError as exc:
        print(f"morphwalk: error: {exc}", file=sys.stderr)
        return 1
    except ComputationError as exc:
        print(f"morphwalk: numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"morphwalk: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    return 0


def main(argv=None):
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
