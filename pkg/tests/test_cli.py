"""Command-line workflows: config handling, artifacts, exit codes."""

import argparse
import csv
import json

import numpy as np
import pytest

from fractalscat import cli
from fractalscat.cli import (
    ConfigError,
    DEFAULT_CONFIG,
    _merge,
    cmd_converge,
    cmd_field,
    cmd_solve,
    load_config,
    main,
    mesh_for_level,
    mesh_from_config,
    relative_error,
    scatterer_from_config,
    wave_from_config,
)
from fractalscat.galerkin import SingularMatrixError
from fractalscat.ifs import IFSAttractor, attractor_barycentre
from fractalscat.mesh import ScattererUnion
from fractalscat.postfield import FieldGrid
from fractalscat.selftest import CheckResult


def namespace(**kw):
    defaults = dict(
        config=None, scatterer=None, k=None, theta=None, level=None,
        level_ref=None, cq=None, out=None,
    )
    defaults.update(kw)
    return argparse.Namespace(**defaults)


def grid(points, values):
    points = np.asarray(points, dtype=float)
    return FieldGrid(
        kind="far",
        points=points,
        values=np.asarray(values, dtype=complex),
        accuracy=np.ones(len(points), dtype=bool),
    )


def run_cfg(tmp_path, **override):
    """Small, fast run configuration writing under tmp_path."""
    cfg = _merge(
        DEFAULT_CONFIG,
        {
            "wave": {"k": 2.0},
            "discretization": {"level": 2},
            "sampling": {"near_per_edge": 6, "far_count": 8, "far_grid": [4, 6]},
            "output_dir": str(tmp_path / "run"),
        },
    )
    return _merge(cfg, override)


# ---------------------------------------------------------------------------
# pure helpers
# ---------------------------------------------------------------------------

def test_relative_error_basics():
    pts = [[1.0, 0.0], [0.0, 1.0]]
    ref = grid(pts, [1.0 + 0.0j, 2.0j])
    assert relative_error(ref, grid(pts, [1.0, 2.0j])) == 0.0
    doubled = grid(pts, [2.0, 4.0j])
    assert relative_error(ref, doubled) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        relative_error(ref, grid([[1.0, 0.0], [0.0, -1.0]], [1.0, 2.0j]))
    with pytest.raises(ValueError):
        relative_error(grid(pts, [0.0, 0.0]), doubled)


def test_config_merge_and_flag_precedence(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"wave": {"k": 3.0}, "sampling": {"far_count": 10}}))
    cfg = load_config(
        namespace(config=str(path), k=8.0, theta="0,-1", level=2, out="elsewhere")
    )
    assert cfg["wave"]["k"] == 8.0  # flag beats file
    assert cfg["wave"]["theta"] == [0.0, -1.0]
    assert cfg["sampling"]["far_count"] == 10  # file beats default
    assert cfg["sampling"]["near_per_edge"] == 50  # untouched default
    assert cfg["discretization"]["level"] == 2
    assert cfg["discretization"]["level_max"] == 2
    assert cfg["output_dir"] == "elsewhere"
    assert DEFAULT_CONFIG["sampling"]["far_count"] == 50  # no mutation


def test_config_scatterer_block_replaces_default(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"scatterer": {"library": "koch_curve"}}))
    cfg = load_config(namespace(config=str(path)))
    assert cfg["scatterer"] == {"library": "koch_curve"}
    scatterer_from_config(cfg["scatterer"])  # no leaked cantor params


def test_load_config_failures(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(namespace(config=str(bad)))
    with pytest.raises(ConfigError):
        load_config(namespace(config=str(tmp_path / "missing.json")))
    with pytest.raises(ConfigError):
        load_config(namespace(theta="north"))


def test_scatterer_from_config_variants():
    koch = scatterer_from_config({"library": "koch_curve"})
    assert isinstance(koch, IFSAttractor)
    assert koch.n_maps == 4

    dust = scatterer_from_config(
        {"library": "cantor_dust", "params": {"rho": 0.25, "dim": 3}}
    )
    assert dust.ambient_dim == 3

    lifted = scatterer_from_config({"library": "cantor_set", "lift": True})
    assert lifted.ambient_dim == 3

    union = scatterer_from_config({"library": "snowflake_boundary"})
    assert isinstance(union, ScattererUnion)
    assert len(union.parts) == 3

    shifted = scatterer_from_config(
        {
            "union": [
                {"library": "cantor_set"},
                {"library": "cantor_set", "transform": {"translation": [0.0, 2.0]}},
            ]
        }
    )
    assert len(shifted.parts) == 2
    delta = attractor_barycentre(shifted.parts[1]) - attractor_barycentre(
        shifted.parts[0]
    )
    np.testing.assert_allclose(delta, [0.0, 2.0], atol=1e-14)

    rotated = scatterer_from_config(
        {
            "library": "cantor_set",
            "transform": {"rotation_angle": np.pi / 2.0},
        }
    )
    np.testing.assert_allclose(
        attractor_barycentre(rotated), [0.0, 0.5], atol=1e-14
    )


def test_scatterer_from_config_failures():
    with pytest.raises(ConfigError):
        scatterer_from_config({"library": "moebius_sponge"})
    with pytest.raises(ConfigError):
        scatterer_from_config({})
    with pytest.raises(ConfigError):
        scatterer_from_config({"union": []})
    with pytest.raises(ConfigError):
        scatterer_from_config(
            {"library": "cantor_set", "transform": {"scale": -1.0}}
        )


def test_wave_from_config():
    wave = wave_from_config({"wave": {"k": 5.0, "theta": None}}, 2)
    np.testing.assert_allclose(wave.theta, np.array([1.0, -1.0]) / np.sqrt(2.0))
    wave3 = wave_from_config({"wave": {"k": 5.0, "theta": None}}, 3)
    assert wave3.dim == 3
    assert wave_from_config({"wave": {"k": 1.0, "theta": [3.0, 4.0]}}, 2).theta[
        0
    ] == pytest.approx(0.6)
    with pytest.raises(ConfigError):
        wave_from_config({"wave": {"k": 1.0, "theta": [1.0, 0.0, 0.0]}}, 2)
    with pytest.raises(ConfigError):
        wave_from_config({"wave": {"k": 1.0, "theta": [0.0, 0.0]}}, 2)
    with pytest.raises(ConfigError):
        wave_from_config({"wave": {"k": 0.0, "theta": None}}, 2)


def test_mesh_selection():
    cantor = scatterer_from_config({"library": "cantor_set"})
    assert mesh_for_level(cantor, 2).n_elements == 4
    with pytest.raises(ConfigError):
        mesh_for_level(cantor, -1)
    union = scatterer_from_config({"library": "snowflake_boundary"})
    assert mesh_for_level(union, 1).n_elements == 12
    cfg = {"discretization": {"h": 0.4, "level": 5}}
    assert mesh_from_config(cfg, cantor).n_elements == 2  # h wins over level
    with pytest.raises(ConfigError):
        mesh_from_config({"discretization": {"h": 7.0, "level": 0}}, cantor)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def test_cmd_solve_artifacts(tmp_path):
    cfg = run_cfg(
        tmp_path,
        dump_system=True,
        sampling={"boundary_sample_depth": 4},
    )
    assert cmd_solve(cfg) == 0
    out = tmp_path / "run"
    for name in (
        "mesh.csv",
        "solution.csv",
        "near_field.csv",
        "far_field.csv",
        "system.bin",
        "run_metadata.json",
    ):
        assert (out / name).exists()
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["n"] == 4
    assert meta["h"] == pytest.approx(1.0 / 9.0)
    assert meta["h_q"] == pytest.approx(1.0 / 81.0)
    assert meta["residual"] <= 1e-10
    assert meta["boundary_residual"] > 0
    assert meta["scatterer"]["n_parts"] == 1
    with open(out / "solution.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert rows[0]["block"] == "0"
    assert rows[0]["index"] == "1-1"
    with open(out / "far_field.csv") as fh:
        assert fh.readline().strip() == "phi,re,im,accurate"


def test_cmd_solve_root_mesh(tmp_path):
    cfg = run_cfg(tmp_path, discretization={"level": 0})
    assert cmd_solve(cfg) == 0
    meta = json.loads((tmp_path / "run" / "run_metadata.json").read_text())
    assert meta["n"] == 1
    assert meta["h"] == pytest.approx(1.0)


def test_cmd_solve_snowflake_union(tmp_path):
    cfg = run_cfg(
        tmp_path,
        scatterer={"library": "snowflake_boundary"},
        discretization={"level": 2},
    )
    assert cmd_solve(cfg) == 0
    meta = json.loads((tmp_path / "run" / "run_metadata.json").read_text())
    assert meta["n"] == 48
    assert meta["scatterer"]["n_parts"] == 3
    assert len(meta["scatterer"]["attractor_hash"]) == 3


def test_cmd_solve_deterministic(tmp_path):
    first = run_cfg(tmp_path, output_dir=str(tmp_path / "a"))
    second = run_cfg(tmp_path, output_dir=str(tmp_path / "b"))
    assert cmd_solve(first) == 0
    assert cmd_solve(second) == 0
    for name in ("far_field.csv", "near_field.csv", "solution.csv", "mesh.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (
            tmp_path / "b" / name
        ).read_bytes()


def test_cmd_field_artifacts(tmp_path):
    cfg = run_cfg(
        tmp_path,
        discretization={"level": 1},
        sampling={"heatmap_resolution": [8, 6], "near_window": [-1.0, 2.0, -1.0, 1.0]},
    )
    assert cmd_field(cfg) == 0
    out = tmp_path / "run"
    with open(out / "total_field.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 48
    # x-major raster: x is constant across each run of 6 rows
    assert float(rows[0]["x"]) == -1.0 and float(rows[0]["y"]) == -1.0
    assert float(rows[5]["x"]) == -1.0 and float(rows[5]["y"]) == 1.0
    assert float(rows[-1]["x"]) == 2.0 and float(rows[-1]["y"]) == 1.0
    with open(out / "scatterer_cloud.csv") as fh:
        assert fh.readline().strip() == "x,y"
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["resolution"] == [8, 6]


def test_cmd_field_rejects_3d(tmp_path):
    cfg = run_cfg(
        tmp_path, scatterer={"library": "cantor_dust", "params": {"dim": 3}}
    )
    with pytest.raises(ConfigError):
        cmd_field(cfg)


def test_cmd_converge_outputs(tmp_path):
    cfg = run_cfg(
        tmp_path,
        discretization={"level": None, "level_max": 1, "level_ref": 2},
        sampling={"near_per_edge": 4, "far_count": 6},
    )
    assert cmd_converge(cfg) == 0
    out = tmp_path / "run"
    with open(out / "convergence.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["level"] for r in rows] == ["0", "1", "2"]
    assert [r["n"] for r in rows] == ["1", "2", "4"]
    err0 = float(rows[0]["rel_err_far"])
    err1 = float(rows[1]["rel_err_far"])
    assert err0 > err1 > 0
    assert rows[2]["rel_err_far"] == ""  # reference row carries no errors
    assert float(rows[1]["ratio_rel_far"]) == pytest.approx(err0 / err1)
    meta = json.loads((out / "convergence_metadata.json").read_text())
    assert meta["level_max"] == 1
    assert meta["level_ref"] == 2
    assert meta["n_maps"] == 2
    assert meta["fitted_ratio_rel_far"] == pytest.approx(err0 / err1, rel=1e-12)


def test_cmd_converge_validation(tmp_path):
    union_cfg = run_cfg(tmp_path, scatterer={"library": "snowflake_boundary"})
    with pytest.raises(ConfigError):
        cmd_converge(union_cfg)
    bad_ref = run_cfg(
        tmp_path, discretization={"level_max": 3, "level_ref": 3}
    )
    with pytest.raises(ConfigError):
        cmd_converge(bad_ref)


# ---------------------------------------------------------------------------
# entry point and exit codes
# ---------------------------------------------------------------------------

def test_main_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad)]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert main(["solve", "--theta", "0,0", "--out", str(tmp_path / "x")]) == 2


def test_main_numerical_failure_exit(tmp_path, monkeypatch, capsys):
    def explode(system):
        raise SingularMatrixError("synthetic failure")

    monkeypatch.setattr(cli, "solve", explode)
    code = main(["solve", "--level", "1", "--out", str(tmp_path / "x")])
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_main_selftest_exit_codes(monkeypatch, capsys):
    good = CheckResult("alpha", 1.0, 1.0, 0.0, 1e-3)
    bad = CheckResult("beta", 2.0, 1.0, 1.0, 1e-3)
    monkeypatch.setattr(cli, "run_quad_selftest", lambda deep=False: [good])
    assert main(["quad-selftest"]) == 0
    monkeypatch.setattr(cli, "run_quad_selftest", lambda deep=False: [good, bad])
    assert main(["quad-selftest"]) == 3
    assert "beta" in capsys.readouterr().out


def test_parser_shape():
    parser = cli.build_parser()
    args = parser.parse_args(["converge", "--k", "3.5", "--level", "4"])
    assert args.command == "converge"
    assert args.k == 3.5
    assert args.level == 4
    args = parser.parse_args(["quad-selftest", "--deep"])
    assert args.deep is True
