"""Batch driver: single solves, field grids, far-field sweeps, convergence
studies and the quadrature self-test, emitting CSV/JSON artifacts.

One JSON config document describes a run; command-line flags override single
fields.  All outputs are written atomically and deterministically: the same
config yields bit-identical files.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io as fio
from .galerkin import (
    SingularMatrixError,
    WaveParams,
    assemble,
    boundary_residual,
    solve,
    write_system_binary,
)
from .ifs import (
    IFSAttractor,
    attractor_from_dict,
    attractor_hash,
    barycentre_cloud,
    index_to_str,
    library_attractor,
    rotation_2d,
    transform_attractor,
)
from .mesh import (
    Mesh,
    ScattererUnion,
    build_mesh,
    snowflake_boundary,
    uniform_mesh,
    write_mesh_csv,
)
from .postfield import (
    FieldGrid,
    angles_of_directions,
    circle_directions,
    far_field,
    near_field,
    rectangle_ring_points,
    sphere_directions,
    total_field,
    write_field_csv,
)
from .selftest import format_selftest, run_quad_selftest
from .singquad import NoFiniteClosure

LOG = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 2 * 1024**3


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


DEFAULT_CONFIG: dict = {
    "scatterer": {"library": "cantor_set", "params": {"rho": 1.0 / 3.0}},
    "wave": {"k": 5.0, "theta": None},
    "discretization": {
        "level": 3,
        "level_max": None,
        "level_ref": None,
        "h": None,
        "c_q": None,
        "high_k_policy": False,
    },
    "sampling": {
        "near_window": [-1.0, 2.0, -1.5, 1.5],
        "near_per_edge": 50,
        "near_radius": 2.0,
        "far_count": 50,
        "far_grid": [10, 20],
        "heatmap_resolution": [60, 60],
        "boundary_sample_depth": None,
    },
    "output_dir": "runs/latest",
    "deterministic": True,
    "dump_system": False,
    "memory_budget_bytes": DEFAULT_MEMORY_BUDGET,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        # a scatterer block names one entity; replace it outright so the
        # default cantor params never leak into another geometry
        scatterer = doc.pop("scatterer", None)
        cfg = _merge(cfg, doc)
        if scatterer is not None:
            cfg["scatterer"] = scatterer
    if getattr(args, "scatterer", None):
        cfg["scatterer"] = {"library": args.scatterer, "params": {}}
    if getattr(args, "k", None) is not None:
        cfg["wave"]["k"] = args.k
    if getattr(args, "theta", None):
        try:
            vec = [float(p) for p in args.theta.split(",")]
        except ValueError as exc:
            raise ConfigError(f"cannot parse --theta {args.theta!r}") from exc
        cfg["wave"]["theta"] = vec
    if getattr(args, "level", None) is not None:
        cfg["discretization"]["level"] = args.level
        cfg["discretization"]["level_max"] = args.level
    if getattr(args, "level_ref", None) is not None:
        cfg["discretization"]["level_ref"] = args.level_ref
    if getattr(args, "cq", None) is not None:
        cfg["discretization"]["c_q"] = args.cq
    if getattr(args, "out", None):
        cfg["output_dir"] = args.out
    return cfg


# ---------------------------------------------------------------------------
# config -> domain objects
# ---------------------------------------------------------------------------

def _single_attractor(spec: dict) -> IFSAttractor:
    if "ifs" in spec:
        try:
            out = attractor_from_dict(spec["ifs"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad explicit IFS spec: {exc}") from exc
    elif "library" in spec:
        try:
            out = library_attractor(
                spec["library"],
                lift_to_3d=bool(spec.get("lift", False)),
                **spec.get("params", {}),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad library scatterer: {exc}") from exc
    else:
        raise ConfigError("scatterer spec needs 'library', 'ifs' or 'union'")
    if "transform" in spec:
        tr = spec["transform"]
        rot = None
        if "rotation_angle" in tr:
            rot = rotation_2d(float(tr["rotation_angle"]))
        if "rotation_matrix" in tr:
            rot = np.asarray(tr["rotation_matrix"], dtype=float)
        try:
            out = transform_attractor(
                out,
                scale=float(tr.get("scale", 1.0)),
                rotation=rot,
                translation=tr.get("translation"),
            )
        except ValueError as exc:
            raise ConfigError(f"bad transform: {exc}") from exc
    return out


def scatterer_from_config(spec: dict):
    if spec.get("library") == "snowflake_boundary":
        return snowflake_boundary()
    if "union" in spec:
        if not isinstance(spec["union"], list) or not spec["union"]:
            raise ConfigError("'union' must be a non-empty list of part specs")
        return ScattererUnion(
            parts=tuple(_single_attractor(p) for p in spec["union"])
        )
    return _single_attractor(spec)


def wave_from_config(cfg: dict, dim: int) -> WaveParams:
    k = cfg["wave"]["k"]
    theta = cfg["wave"]["theta"]
    if theta is None:
        theta = [1.0, -1.0] if dim == 2 else [0.0, 1.0, -1.0]
    theta = np.asarray(theta, dtype=float)
    if len(theta) != dim:
        raise ConfigError(
            f"incidence direction has {len(theta)} components, scatterer is {dim}D"
        )
    norm = np.linalg.norm(theta)
    if norm == 0.0:
        raise ConfigError("incidence direction must be nonzero")
    try:
        return WaveParams(k=float(k), theta=theta / norm)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def mesh_for_level(scatterer, level: int) -> Mesh:
    if level < 0:
        raise ConfigError("level must be nonnegative")
    if isinstance(scatterer, IFSAttractor) and scatterer.is_homogeneous:
        return uniform_mesh(scatterer, level)
    parts = getattr(scatterer, "parts", None) or (scatterer,)
    h = max(max(p.rhos) ** level * p.diameter for p in parts)
    return build_mesh(scatterer, h * (1.0 + 1e-9))


def mesh_from_config(cfg: dict, scatterer) -> Mesh:
    disc = cfg["discretization"]
    if disc.get("h") is not None:
        try:
            return build_mesh(scatterer, float(disc["h"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return mesh_for_level(scatterer, int(disc["level"]))


def _check_memory(n: int, budget: int) -> None:
    need = 16 * n * n
    if need > budget:
        LOG.warning(
            "dense system needs %.2f GiB (N=%d), over the %.2f GiB budget; "
            "continuing anyway",
            need / 1024**3, n, budget / 1024**3,
        )


def _sample_grids(cfg: dict, dim: int):
    """Observation points and far-field directions for solve/converge runs."""
    samp = cfg["sampling"]
    if dim == 2:
        window = tuple(float(v) for v in samp["near_window"])
        per_edge = int(samp["near_per_edge"])
        if per_edge <= 0:
            raise ConfigError("near_per_edge must be positive")
        near_pts = rectangle_ring_points(window, per_edge)
        count = int(samp["far_count"])
        if count <= 0:
            raise ConfigError("far_count must be positive")
        dirs, angles = circle_directions(count)
    else:
        n_th, n_ph = (int(v) for v in samp["far_grid"])
        if n_th <= 0 or n_ph <= 0:
            raise ConfigError("far_grid entries must be positive")
        dirs, angles = sphere_directions(n_th, n_ph)
        near_pts = float(samp["near_radius"]) * dirs
    return near_pts, dirs, angles


def _solve_once(mesh: Mesh, wave: WaveParams, cfg: dict):
    disc = cfg["discretization"]
    _check_memory(mesh.n_elements, int(cfg["memory_budget_bytes"]))
    t0 = time.perf_counter()
    system = assemble(
        mesh,
        wave,
        c_q=disc.get("c_q"),
        high_k=bool(disc.get("high_k_policy", False)),
    )
    t_assemble = time.perf_counter() - t0
    t0 = time.perf_counter()
    solution = solve(system)
    t_solve = time.perf_counter() - t0
    return solution, {"assemble_s": t_assemble, "solve_s": t_solve}


def _scatterer_meta(scatterer) -> dict:
    parts = getattr(scatterer, "parts", None) or (scatterer,)
    return {
        "label": getattr(scatterer, "label", "") or parts[0].label,
        "attractor_hash": [attractor_hash(p) for p in parts],
        "n_parts": len(parts),
        "ambient_dim": parts[0].ambient_dim,
        "hausdorff_dim": [p.hausdorff_dim for p in parts],
    }


def write_solution_csv(solution, path: str) -> None:
    rows = [
        [e.block, index_to_str(e.index), c.real, c.imag]
        for e, c in zip(solution.mesh.elements, solution.coeffs)
    ]
    fio.write_csv(path, ["block", "index", "re", "im"], rows)


def relative_error(ref: FieldGrid, test: FieldGrid) -> float:
    """Relative max-norm deviation of `test` from `ref` over a shared grid."""
    if ref.points.shape != test.points.shape or not np.array_equal(
        ref.points, test.points
    ):
        raise ValueError("field grids sample different point sets")
    scale = float(np.max(np.abs(ref.values)))
    if scale == 0.0:
        raise ValueError("reference field is identically zero")
    return float(np.max(np.abs(ref.values - test.values)) / scale)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(cfg: dict) -> int:
    t_start = time.perf_counter()
    scatterer = scatterer_from_config(cfg["scatterer"])
    dim = (
        scatterer.ambient_dim
        if hasattr(scatterer, "ambient_dim")
        else scatterer.parts[0].ambient_dim
    )
    wave = wave_from_config(cfg, dim)
    mesh = mesh_from_config(cfg, scatterer)
    solution, timings = _solve_once(mesh, wave, cfg)

    near_pts, dirs, angles = _sample_grids(cfg, dim)
    t0 = time.perf_counter()
    near = near_field(solution, near_pts)
    far = far_field(solution, dirs, angles)
    timings["fields_s"] = time.perf_counter() - t0

    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_mesh_csv(mesh, str(out / "mesh.csv"))
    write_solution_csv(solution, str(out / "solution.csv"))
    write_field_csv(near, str(out / "near_field.csv"))
    write_field_csv(far, str(out / "far_field.csv"))
    if cfg.get("dump_system"):
        write_system_binary(solution.system, str(out / "system.bin"))
    timings["total_s"] = time.perf_counter() - t_start
    meta = {
        "command": "solve",
        "scatterer": _scatterer_meta(scatterer),
        "k": wave.k,
        "theta": wave.theta.tolist(),
        "n": solution.system.n,
        "h": mesh.h,
        "h_q": solution.system.h_q,
        "residual": solution.residual,
        "energy_re": float(np.vdot(solution.system.rhs, np.conj(solution.coeffs)).real),
        "energy_im": float(np.vdot(solution.system.rhs, np.conj(solution.coeffs)).imag),
        "timings": timings,
    }
    depth = cfg["sampling"].get("boundary_sample_depth")
    if depth is not None:
        meta["boundary_residual"] = boundary_residual(solution, int(depth))
    fio.write_json(str(out / "run_metadata.json"), meta)
    print(f"solved N={meta['n']} (residual {meta['residual']:.2e}) -> {out}")
    return 0


def cmd_field(cfg: dict) -> int:
    scatterer = scatterer_from_config(cfg["scatterer"])
    dim = (
        scatterer.ambient_dim
        if hasattr(scatterer, "ambient_dim")
        else scatterer.parts[0].ambient_dim
    )
    if dim != 2:
        raise ConfigError("field rasters are only produced for planar scatterers")
    wave = wave_from_config(cfg, dim)
    mesh = mesh_from_config(cfg, scatterer)
    solution, timings = _solve_once(mesh, wave, cfg)

    x0, x1, y0, y1 = (float(v) for v in cfg["sampling"]["near_window"])
    nx, ny = (int(v) for v in cfg["sampling"]["heatmap_resolution"])
    if nx <= 0 or ny <= 0:
        raise ConfigError("heatmap_resolution entries must be positive")
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    grid = total_field(solution, pts)

    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_field_csv(grid, str(out / "total_field.csv"))
    cloud = np.concatenate(
        [barycentre_cloud(p, 6) for p in mesh.parts], axis=0
    )
    fio.write_csv(
        str(out / "scatterer_cloud.csv"), ["x", "y"], [list(p) for p in cloud]
    )
    meta = {
        "command": "field",
        "scatterer": _scatterer_meta(scatterer),
        "k": wave.k,
        "theta": wave.theta.tolist(),
        "n": solution.system.n,
        "h": mesh.h,
        "h_q": solution.system.h_q,
        "residual": solution.residual,
        "window": [x0, x1, y0, y1],
        "resolution": [nx, ny],
        "timings": timings,
    }
    fio.write_json(str(out / "run_metadata.json"), meta)
    print(f"field raster {nx}x{ny} for N={solution.system.n} -> {out}")
    return 0


def _fit_ratio(levels, errors) -> float | None:
    """Per-level error-reduction factor from a log-linear least-squares fit."""
    pts = [(l, e) for l, e in zip(levels, errors) if e is not None and e > 0]
    if len(pts) < 2:
        return None
    ls = np.array([p[0] for p in pts], dtype=float)
    es = np.log(np.array([p[1] for p in pts]))
    slope = np.polyfit(ls, es, 1)[0]
    return float(np.exp(-slope))


def cmd_converge(cfg: dict) -> int:
    scatterer = scatterer_from_config(cfg["scatterer"])
    if not isinstance(scatterer, IFSAttractor):
        raise ConfigError("convergence studies need a single (non-union) attractor")
    if not scatterer.is_homogeneous:
        raise ConfigError("level-indexed studies need a homogeneous attractor")
    disc = cfg["discretization"]
    level_max = disc.get("level_max")
    if level_max is None:
        level_max = disc["level"]
    level_max = int(level_max)
    level_ref = disc.get("level_ref")
    if level_ref is None:
        level_ref = level_max + (2 if scatterer.ambient_dim == 2 else 1)
    level_ref = int(level_ref)
    if level_ref <= level_max:
        raise ConfigError("level_ref must exceed level_max")

    dim = scatterer.ambient_dim
    wave = wave_from_config(cfg, dim)
    near_pts, dirs, angles = _sample_grids(cfg, dim)

    levels = list(range(level_max + 1)) + [level_ref]
    rows = {}
    nears, fars = {}, {}
    for level in levels:
        mesh = mesh_for_level(scatterer, level)
        solution, timings = _solve_once(mesh, wave, cfg)
        t0 = time.perf_counter()
        nears[level] = near_field(solution, near_pts)
        fars[level] = far_field(solution, dirs, angles)
        timings["fields_s"] = time.perf_counter() - t0
        rows[level] = {
            "n": solution.system.n,
            "h": mesh.h,
            "h_q": solution.system.h_q,
            "time_s": sum(timings.values()),
        }
        LOG.info("level %d done (N=%d)", level, solution.system.n)

    for level in range(level_max + 1):
        rows[level]["rel_err_near"] = relative_error(nears[level_ref], nears[level])
        rows[level]["rel_err_far"] = relative_error(fars[level_ref], fars[level])
        nxt = level + 1 if level + 1 in fars else None
        if nxt is not None:
            rows[level]["inc_err_far"] = float(
                np.max(np.abs(fars[nxt].values - fars[level].values))
            )
    for level in range(1, level_max + 1):
        prev, cur = rows[level - 1], rows[level]
        if cur.get("rel_err_far", 0) > 0:
            cur["ratio_rel_far"] = prev["rel_err_far"] / cur["rel_err_far"]
        if "inc_err_far" in prev and cur.get("inc_err_far", 0) > 0:
            cur["ratio_inc_far"] = prev["inc_err_far"] / cur["inc_err_far"]

    header = [
        "level", "n", "h", "h_q", "time_s", "rel_err_near", "rel_err_far",
        "inc_err_far", "ratio_rel_far", "ratio_inc_far",
    ]
    table = []
    for level in levels:
        row = rows[level]
        table.append(
            [level, row["n"], row["h"], row["h_q"], row["time_s"]]
            + [row.get(key, "") for key in header[5:]]
        )
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    fio.write_csv(str(out / "convergence.csv"), header, table)

    study_levels = list(range(level_max + 1))
    meta = {
        "command": "converge",
        "scatterer": _scatterer_meta(scatterer),
        "k": wave.k,
        "theta": wave.theta.tolist(),
        "level_max": level_max,
        "level_ref": level_ref,
        "n_maps": scatterer.n_maps,
        "fitted_ratio_rel_far": _fit_ratio(
            study_levels, [rows[l].get("rel_err_far") for l in study_levels]
        ),
        "fitted_ratio_inc_far": _fit_ratio(
            study_levels, [rows[l].get("inc_err_far") for l in study_levels]
        ),
        "total_time_s": sum(rows[l]["time_s"] for l in levels),
    }
    fio.write_json(str(out / "convergence_metadata.json"), meta)
    print(
        f"convergence study levels 0..{level_max} (ref {level_ref}) -> {out}\n"
        f"fitted far-field ratios: relative {meta['fitted_ratio_rel_far']}, "
        f"increment {meta['fitted_ratio_inc_far']}"
    )
    return 0


def cmd_quad_selftest(deep: bool) -> int:
    results = run_quad_selftest(deep=deep)
    print(format_selftest(results))
    return 0 if all(r.passed for r in results) else 3


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fractalscat",
        description="Acoustic scattering by self-similar fractal scatterers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--scatterer", help="library scatterer name (default params)")
        p.add_argument("--k", type=float, help="wavenumber")
        p.add_argument("--theta", help="incidence direction, comma-separated")
        p.add_argument("--level", type=int, help="mesh subdivision level")
        p.add_argument("--level-ref", type=int, help="reference level for studies")
        p.add_argument("--cq", type=float, help="quadrature ratio h_Q / h")
        p.add_argument("--out", help="output directory")

    add_common(sub.add_parser("solve", help="single solve with field outputs"))
    add_common(sub.add_parser("converge", help="level-sweep convergence study"))
    add_common(sub.add_parser("field", help="total-field raster for heatmaps"))
    st = sub.add_parser("quad-selftest", help="verify the singular quadrature")
    st.add_argument("--deep", action="store_true", help="extra oracle depth")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "quad-selftest":
            return cmd_quad_selftest(args.deep)
        cfg = load_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "field":
            return cmd_field(cfg)
        return cmd_converge(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SingularMatrixError, NoFiniteClosure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
