from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

import modules.run_service as run_service
from modules.config import EngineParams, RunConfig, SweepParams, load_config
from modules.error_codes import CHECK_NOT_MONOTONE
from modules.errors import AcceptanceError, ConfigError
from modules.model import Domain
from modules.pde import DensityGrid
from modules.storage import META_FILE, METRICS_FILE, write_grid_csv


def _config(tmp_path: Path, **run) -> RunConfig:
    """example1 shrunk to a few dozen individuals on a coarse grid."""
    overrides = {
        "run": {"t_end": 0.5, "snapshot_times": [0.0, 0.5], "out_dir": str(tmp_path / "out"), **run},
        "model": {"N": 30, "N_scale": 30},
        "pde": {"nx": 21, "nu": 21},
    }
    return load_config(None, overrides)


def _records(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def _cell(cfg: RunConfig, param: str, value: float, index: int) -> RunConfig:
    swept = cfg.replace(sweep=SweepParams(param=param, values=(value,)))
    return run_service.cell_config(swept, value, index)


def test_ibm_run_writes_snapshots_and_records(tmp_path) -> None:
    cfg = _config(tmp_path)

    result = run_service.run_simulation(cfg)

    out = cfg.out_dir
    assert (out / "snapshots" / "t0.csv").exists()
    assert (out / "snapshots" / "t0.5.csv").exists()
    initial = (out / "snapshots" / "t0.csv").read_text(encoding="utf-8").splitlines()
    assert len(initial) == 31
    assert initial[1] == "0.0,0,0.5,0.5"

    meta = _records(out / META_FILE)
    assert [r["kind"] for r in meta] == ["config", "model", "summary"]
    assert meta[0]["config"]["model"]["N"] == 30
    assert meta[1]["C_delta"] > 0

    sizes = _records(out / METRICS_FILE)
    assert [(r["t"], r["replicate"]) for r in sizes] == [(0.0, 0), (0.5, 0)]
    assert sizes[0]["size"] == 30
    assert sizes[0]["mass"] == pytest.approx(1.0)

    summary = result.summary
    assert summary["mode"] == "ibm_logistic"
    assert summary["final_size"] == [sizes[1]["size"]]
    assert result.final_density.t == 0.5
    assert result.final_density.mass() == pytest.approx(sizes[1]["size"] / 30)

    peaks = (out / "peaks.csv").read_text(encoding="utf-8").splitlines()
    assert peaks[0] == "replicate,t,axis,position"
    replicate, t, axis, position = peaks[1].split(",")
    assert (replicate, t, axis) == ("0", "0.0", "x")
    assert float(position) == pytest.approx(0.5)
    assert len(summary["x_peaks"]) == len(summary["peak_spacing_ok"]) == 1


def test_same_seed_rewrites_identical_files(tmp_path) -> None:
    cfg = _config(tmp_path)
    names = ["snapshots/t0.5.csv", META_FILE, METRICS_FILE]

    run_service.run_simulation(cfg)
    first = {name: (cfg.out_dir / name).read_bytes() for name in names}
    run_service.run_simulation(cfg)
    second = {name: (cfg.out_dir / name).read_bytes() for name in names}

    assert first == second


def test_general_loop_runs_from_the_same_config(tmp_path) -> None:
    cfg = _config(tmp_path, mode="ibm_general")

    summary = run_service.run_simulation(cfg).summary

    assert summary["mode"] == "ibm_general"
    assert summary["events"][0] > 0


def test_replicates_get_their_own_directories(tmp_path) -> None:
    cfg = _config(tmp_path, replicates=2)

    summary = run_service.run_simulation(cfg).summary

    for index in (0, 1):
        assert (cfg.out_dir / f"replicate_{index:03d}" / "snapshots" / "t0.5.csv").exists()
    assert not (cfg.out_dir / "snapshots").exists()
    assert len(summary["final_size"]) == 2
    metrics = _records(cfg.out_dir / METRICS_FILE)
    assert sorted({r["replicate"] for r in metrics}) == [0, 1]


def test_event_log_lists_every_event(tmp_path) -> None:
    cfg = _config(tmp_path)
    cfg = cfg.replace(engine=EngineParams(event_log=True))

    summary = run_service.run_simulation(cfg).summary

    events = _records(cfg.out_dir / "events.ndjson")
    assert len(events) == summary["events"][0]
    assert {"t", "kind", "actor"} <= set(events[0])


def test_pde_run_writes_grids_and_mass_trace(tmp_path) -> None:
    cfg = _config(tmp_path, mode="pde_nonlocal")

    result = run_service.run_simulation(cfg)

    assert (cfg.out_dir / "grid" / "t0.csv").exists()
    assert (cfg.out_dir / "grid" / "t0.5.csv").exists()
    summary = result.summary
    assert summary["mass0"] == pytest.approx(1.0)
    assert summary["mass_bound_ok"] is True
    assert summary["dt"] > 0
    masses = _records(cfg.out_dir / METRICS_FILE)
    assert [r["t"] for r in masses] == [0.0, 0.5]
    assert masses[-1]["mass"] == pytest.approx(summary["mass_end"])


def test_growth_rate_adds_mutation_mass() -> None:
    spec = run_service.build_spec(load_config(None, {"run": {"scenario": "example3"}}))

    assert spec.bounds.M_star_l1 >= 0.1
    assert run_service.growth_rate(spec) == pytest.approx(1.0 + spec.bounds.M_star_l1)


def test_cell_config_sets_the_swept_parameter(tmp_path) -> None:
    cfg = _config(tmp_path)

    scaled = _cell(cfg, "N_scale", 60.0, 1)
    assert (scaled.N, scaled.N_scale) == (60, 60)
    assert scaled.out_dir == cfg.out_dir / "cell_001"
    assert _cell(cfg, "delta", 0.05, 0).delta == 0.05
    assert _cell(cfg, "h", 0.01, 0).h == 0.01
    assert _cell(cfg, "dt", 0.02, 0).pde.dt == 0.02
    assert cfg.N == 30


def test_trend_follows_the_direction_of_convergence() -> None:
    assert run_service._trend_ok("delta", [0.1, 0.2, 0.4], [1.0, 2.0, 3.0]) is True
    assert run_service._trend_ok("dt", [0.1, 0.2], [2.0, 1.0]) is False
    assert run_service._trend_ok("N_scale", [100, 50], [1.0, 2.0]) is True
    assert run_service._trend_ok("h", [0.1, 0.2], [5.0, 1.0]) is None


def test_sweep_settings_are_checked(tmp_path) -> None:
    ibm = _config(tmp_path)

    with pytest.raises(ConfigError):
        run_service.run_sweep(ibm.replace(sweep=SweepParams(param="delta", values=())))
    with pytest.raises(ConfigError):
        run_service.run_sweep(ibm.replace(sweep=SweepParams(param="dt", values=(0.01,))))
    pde = _config(tmp_path, mode="pde_local")
    with pytest.raises(ConfigError):
        run_service.run_sweep(pde.replace(sweep=SweepParams(param="h", values=(0.01,))))


def test_dt_sweep_converges_to_the_finest_step(tmp_path) -> None:
    cfg = load_config(None, {
        "run": {"mode": "pde_local", "t_end": 0.5, "out_dir": str(tmp_path / "out")},
        "model": {"N": 30, "N_scale": 30},
        "pde": {"nx": 21, "nu": 21},
        "sweep": {"param": "dt", "values": [0.04, 0.02, 0.01, 0.005]},
    })

    summary = run_service.run_sweep(cfg)

    assert summary["monotone"] is True
    assert summary["l1"][-1] == 0.0
    assert summary["l1"][0] > summary["l1"][1] > summary["l1"][2] > 0.0
    for index in range(4):
        assert (cfg.out_dir / f"cell_{index:03d}" / "grid" / "t0.5.csv").exists()
    cells = _records(cfg.out_dir / METRICS_FILE)
    assert [r["value"] for r in cells] == [0.04, 0.02, 0.01, 0.005]
    assert _records(cfg.out_dir / META_FILE)[-1]["kind"] == "sweep_summary"


def test_range_below_half_a_grid_step_reproduces_the_local_solver(tmp_path) -> None:
    cfg = load_config(None, {
        "run": {"mode": "pde_nonlocal", "t_end": 0.5, "out_dir": str(tmp_path / "out")},
        "model": {"N": 30, "N_scale": 30},
        "pde": {"nx": 21, "nu": 21},
        "sweep": {"param": "delta", "values": [0.3, 0.02]},
    })

    summary = run_service.run_sweep(cfg)

    assert summary["l1"][0] > 0.0
    assert summary["l1"][1] == 0.0
    assert summary["monotone"] is True
    assert (cfg.out_dir / "reference" / "grid" / "t0.5.csv").exists()


def test_sweep_that_moves_away_from_the_limit_fails(tmp_path, monkeypatch) -> None:
    cfg = load_config(None, {
        "run": {"mode": "pde_local", "t_end": 0.2, "out_dir": str(tmp_path / "out")},
        "model": {"N": 30, "N_scale": 30},
        "pde": {"nx": 21, "nu": 21},
        "sweep": {"param": "dt", "values": [0.04, 0.02, 0.01]},
    })
    distances = iter([0.1, 0.3, 0.0])
    monkeypatch.setattr(run_service, "l1_distance", lambda a, b: next(distances))

    with pytest.raises(AcceptanceError) as exc_info:
        run_service.run_sweep(cfg)

    assert exc_info.value.code == CHECK_NOT_MONOTONE
    assert _records(cfg.out_dir / META_FILE)[-1]["monotone"] is False


def test_compare_rows_cover_every_snapshot(tmp_path) -> None:
    cfg = _config(tmp_path, replicates=2)

    summary = run_service.run_compare(cfg)

    rows = summary["rows"]
    assert [r["t"] for r in rows] == [0.0, 0.5]
    # both start from the same binned point mass
    assert rows[0]["l1"] == pytest.approx(0.0, abs=1e-12)
    assert rows[0]["ibm_mass"] == pytest.approx(rows[0]["pde_mass"])
    assert summary["ibm_mode"] == "ibm_logistic"
    assert summary["pde_mode"] == "nonlocal"
    assert summary["max_relative_l1"] == max(r["relative_l1"] for r in rows)
    assert (cfg.out_dir / "ibm" / "grid" / "t0.5.csv").exists()
    assert (cfg.out_dir / "pde" / "grid" / "t0.5.csv").exists()
    assert len(_records(cfg.out_dir / METRICS_FILE)) == 2


def test_compare_from_a_solver_mode_uses_the_logistic_loop(tmp_path) -> None:
    cfg = _config(tmp_path, mode="pde_local")

    summary = run_service.run_compare(cfg)

    assert summary["ibm_mode"] == "ibm_logistic"
    assert summary["pde_mode"] == "local"


def test_delta_sweep_shrinks_toward_the_local_solver(tmp_path) -> None:
    # every range spans at least two grid steps
    cfg = load_config(None, {
        "run": {"mode": "pde_nonlocal", "t_end": 0.5, "out_dir": str(tmp_path / "out")},
        "model": {"N": 30, "N_scale": 30},
        "pde": {"nx": 81, "nu": 21},
        "sweep": {"param": "delta", "values": [0.2, 0.1, 0.05, 0.025]},
    })

    summary = run_service.run_sweep(cfg)

    l1 = summary["l1"]
    assert summary["monotone"] is True
    assert l1[0] > l1[1] > l1[2] > l1[3] > 0.0
    assert summary["pool"]["completed"] == 4
    assert summary["pool"]["failed"] == 0


def test_local_solver_runs_example1_at_the_default_grid(tmp_path) -> None:
    cfg = load_config(None, {
        "run": {"mode": "pde_local", "t_end": 0.5, "snapshot_times": [0.0, 0.5], "out_dir": str(tmp_path / "out")},
    })
    assert (cfg.pde.nx, cfg.pde.nu) == (101, 101)

    summary = run_service.run_simulation(cfg).summary

    assert summary["mass_bound_ok"] is True
    assert summary["clipped_mass"] <= 1e-9 * summary["mass0"]
    assert summary["x_peaks"] == len(summary["x_peak_positions"]) == 1
    assert summary["x_peak_positions"][0] == pytest.approx(0.5, abs=0.05)


def _growth_hump_config(tmp_path: Path, delta: float) -> RunConfig:
    """Nonlocal solver on [-1, 1] x [0, 1] with a birth rate peaked at x = 0, started flat."""
    domain = Domain(-1.0, 1.0, 0.0, 1.0)
    path = write_grid_csv(tmp_path / "flat.csv", DensityGrid.from_function(domain, lambda x, u: 0.5 + 0 * x, 81, 3))
    return load_config(None, {
        "run": {
            "scenario": "custom", "mode": "pde_nonlocal", "t_end": 200.0, "snapshot_times": [0.0, 200.0],
            "out_dir": str(tmp_path / f"delta_{delta}"),
        },
        "model": {
            "delta": delta, "m": 1e-5, "mutation_rate": 0.0, "normalization": "constant",
            "domain": {"x_min": -1.0, "x_max": 1.0, "u_min": 0.0, "u_max": 1.0},
            "rates": {"lambda": {"kind": "gaussian", "variable": "x", "width_const": 0.09}, "mu0": 0.0},
        },
        "initial": {"kind": "grid_density", "path": str(path)},
    })


def test_short_interaction_range_splits_the_population(tmp_path) -> None:
    narrow = run_service.run_simulation(_growth_hump_config(tmp_path, 0.1)).summary
    wide = run_service.run_simulation(_growth_hump_config(tmp_path, 1.0)).summary

    assert narrow["x_peaks"] >= 2
    assert wide["x_peaks"] == 1
    assert wide["x_peak_positions"][0] == pytest.approx(0.0, abs=0.05)


@pytest.mark.slow
def test_ibm_approaches_the_solver_as_n_scale_grows(tmp_path) -> None:
    cfg = load_config(None, {
        "run": {"t_end": 1.0, "replicates": 4, "out_dir": str(tmp_path / "out")},
        "pde": {"nx": 21, "nu": 11},
        "sweep": {"param": "N_scale", "values": [200, 800, 3200]},
    })

    summary = run_service.run_sweep(cfg)

    assert summary["monotone"] is True
    relative = [r["relative_l1"] for r in _records(cfg.out_dir / METRICS_FILE)]
    assert relative[-1] <= 0.15


@pytest.mark.slow
def test_ibm_forms_clusters_spaced_by_the_interaction_range(tmp_path) -> None:
    domain = Domain(0.0, 1.0, 0.0, 1.0)
    path = write_grid_csv(tmp_path / "flat.csv", DensityGrid.from_function(domain, lambda x, u: 1.0 + 0 * x, 11, 3))

    def final_peaks(delta: float) -> dict:
        cfg = load_config(None, {
            "run": {
                "scenario": "custom", "t_end": 40.0, "snapshot_times": [0.0, 40.0], "replicates": 3,
                "out_dir": str(tmp_path / f"delta_{delta}"),
            },
            "model": {
                "N": 200, "N_scale": 200, "delta": delta, "m": 1e-4, "mutation_rate": 0.0,
                "normalization": "constant",
                "domain": {"x_min": 0.0, "x_max": 1.0, "u_min": 0.0, "u_max": 1.0},
                "rates": {"lambda": 2.0},
            },
            "initial": {"kind": "grid_density", "path": str(path)},
        })
        return run_service.run_simulation(cfg).summary

    narrow, wide = final_peaks(0.1), final_peaks(0.3)

    assert sum(a > b for a, b in zip(narrow["x_peaks"], wide["x_peaks"])) >= 2
    assert sum(n >= 2 for n in wide["x_peaks"]) >= 2
    assert sum(wide["peak_spacing_ok"]) >= 2


@pytest.mark.slow
def test_fast_movers_in_the_trait_ladder_spread_first(tmp_path) -> None:
    def first_arrival(kind: str, seed: int) -> float:
        cfg = load_config(None, {
            "run": {
                "scenario": "example3", "t_end": 40.0, "snapshot_times": [float(t) for t in range(41)],
                "seed": seed, "out_dir": str(tmp_path / f"{kind}_{seed}"),
            },
            "model": {"N": 500, "N_scale": 500},
            "initial": {"kind": kind, "x": 0.0, "u": 0.0},
        })
        trajectory = run_service.simulate_replicate(cfg, 0)
        times = [s.t for s in trajectory.snapshots if s.size and np.max(np.abs(s.x)) > 0.6]
        return times[0] if times else math.inf

    ladder_first = sum(first_arrival("trait_ladder", seed) < first_arrival("point_mass", seed) for seed in (1, 2, 3))

    assert ladder_first >= 2
