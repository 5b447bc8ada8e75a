"""Transport-map archives: a zip of ``.npy`` arrays plus a JSON header.

Entries are written in a fixed order with fixed timestamps, so the same map
always serializes to the same bytes. Per-step Poisson solutions are stored so
that the cached velocity fields (and hence inverse membership) can be rebuilt.
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np

from .errors import InputError
from .flow import FluxResult, FlowConfig, TransportMap, assemble_velocity
from .pde import Grid, GridField, MaskGrid

__all__ = ["save_map", "load_map", "FORMAT"]

FORMAT = "morphwalk-map/1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(arr):
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def _write_entry(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def dumps_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def save_map(tmap, path, meta=None, include_fields=True):
    """Write ``tmap`` to ``path``; ``meta`` (version, seed, ...) goes into the header."""
    T = tmap.steps
    header = {
        "format": FORMAT,
        "config": tmap.config.echo(),
        "steps": T,
        "n_seeds": int(len(tmap.seeds)),
        "lipschitz": tmap.lipschitz,
        "solver_iterations": [int(i) for i in tmap.solver_iterations],
        "flux": [[f.flux, f.perimeter] for f in tmap.flux],
        "has_fields": bool(include_fields and len(tmap.potentials) == T),
    }
    if meta:
        header["meta"] = meta
    arrays = {
        "times": tmap.times,
        "seeds": tmap.seeds,
        "seed_index": tmap.seed_index,
        "trajectories": tmap.trajectories,
        "jacobians": tmap.jacobians,
        "boundary_offsets": np.cumsum([0] + [len(b) for b in tmap.boundaries]),
        "boundaries": np.concatenate(tmap.boundaries),
    }
    if header["has_fields"]:
        for k, w in enumerate(tmap.potentials):
            g = w.grid
            arrays[f"grid_{k:05d}"] = np.array([g.origin[0], g.origin[1], g.h, g.dims[0], g.dims[1]])
            arrays[f"mask_{k:05d}"] = w.mask.astype(np.uint8)
            arrays[f"w_{k:05d}"] = w.values
    with zipfile.ZipFile(path, "w") as zf:
        _write_entry(zf, "header.json", dumps_json(header).encode("utf-8"))
        for name, arr in arrays.items():
            _write_entry(zf, f"{name}.npy", _npy_bytes(arr))


def _read_array(zf, name):
    with zf.open(f"{name}.npy") as fh:
        return np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)


def read_header(path):
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json").decode("utf-8"))
    except (OSError, KeyError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise InputError(f"{path} is not a map archive: {exc}") from None
    if header.get("format") != FORMAT:
        raise InputError(f"{path} has unsupported archive format {header.get('format')!r}")
    return header


def load_map(path):
    from .geometry import domain_from_config

    header = read_header(path)
    c = header["config"]
    cfg = FlowConfig(
        domain=domain_from_config(c["domain"]),
        potential=c["potential"],
        steps=c["steps"],
        h=c["h"],
        pad=c["pad"],
        tol=c["tol"],
        max_iter=c["max_iter"],
        seed_spacing=c["seed_spacing"],
        dilation=c["dilation"],
        check_convex=False,
    )
    with zipfile.ZipFile(path) as zf:
        offs = _read_array(zf, "boundary_offsets")
        flat = _read_array(zf, "boundaries")
        boundaries = [flat[offs[i]:offs[i + 1]] for i in range(len(offs) - 1)]
        fields, potentials = [], []
        if header["has_fields"]:
            for k in range(header["steps"]):
                gx, gy, h, nx, ny = _read_array(zf, f"grid_{k:05d}")
                grid = Grid(np.array([gx, gy]), float(h), (int(nx), int(ny)))
                mask = _read_array(zf, f"mask_{k:05d}").astype(np.int8)
                w = GridField(grid, _read_array(zf, f"w_{k:05d}"), mask)
                t = k * (1.0 / header["steps"])
                fields.append(assemble_velocity(t, cfg.potential, MaskGrid(grid, mask, mask > 0), w))
                potentials.append(w)
        tmap = TransportMap(
            config=cfg,
            times=_read_array(zf, "times"),
            seeds=_read_array(zf, "seeds"),
            seed_index=_read_array(zf, "seed_index"),
            trajectories=_read_array(zf, "trajectories"),
            jacobians=_read_array(zf, "jacobians"),
            boundaries=boundaries,
            fields=fields,
            flux=[FluxResult(f, p) for f, p in header["flux"]],
            solver_iterations=header["solver_iterations"],
            lipschitz=header["lipschitz"],
            potentials=potentials,
        )
    tmap.header = header
    return tmap
