from __future__ import annotations

from dataclasses import dataclass, replace
import logging
import time

import numpy as np

from .analysis import (
    cluster_peaks,
    density_on_grid,
    grid_peaks,
    histogram,
    l1_distance,
    mass_bound_ok,
    spacings_within,
)
from .config import RunConfig
from .engine import EngineOptions, run, throughput
from .error_codes import CHECK_NOT_MONOTONE
from .errors import AcceptanceError, ConfigError
from .model import ModelSpec
from .pde import DensityGrid, PdeConfig, PdeSolution, solve
from .reflect import ReflectConfig
from .rng import StreamFactory
from .scenarios import build_spec, initial_density, initial_population
from .state import Trajectory
from .storage import RunOutput, cell_dir, replicate_dir
from .sweep_pool import SweepPool

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    """What ``run``/``sweep`` cells hand back: the summary record and the density at t_end."""

    summary: dict
    final_density: DensityGrid


def growth_rate(spec: ModelSpec) -> float:
    """Exponential rate bounding the total mass: lambda* + ||M*||_1."""
    bounds = spec.bounds
    return bounds.lambda_star + bounds.M_star_l1


def reflect_config(cfg: RunConfig, spec: ModelSpec) -> ReflectConfig:
    return ReflectConfig.for_domain(spec.domain, cfg.reflect.h, cfg.reflect.alpha_bar, cfg.reflect.beta_bar)


def engine_options(cfg: RunConfig) -> EngineOptions:
    return EngineOptions(
        event_cap=cfg.engine.event_cap,
        check_bounds=cfg.engine.check_bounds,
        record_events=cfg.engine.event_log,
    )


def pde_config(cfg: RunConfig, mode: str | None = None) -> PdeConfig:
    return PdeConfig(dt=cfg.pde.dt, scheme=cfg.pde.scheme, mode=mode or cfg.pde_mode, safety=cfg.pde.safety)


def replicate_streams(cfg: RunConfig, index: int) -> StreamFactory:
    base = StreamFactory(cfg.seed)
    return base if cfg.replicates == 1 else base.spawn(index)


def simulate_replicate(cfg: RunConfig, index: int) -> Trajectory:
    """One IBM replicate; module level so that pool workers can run it."""
    spec = build_spec(cfg)
    streams = replicate_streams(cfg, index)
    pop0 = initial_population(cfg, spec, streams)
    started = time.perf_counter()
    trajectory = run(
        pop0,
        spec,
        cfg.t_end,
        cfg.snapshot_times,
        reflect_config(cfg, spec),
        mode=cfg.engine_mode,
        streams=streams,
        options=engine_options(cfg),
    )
    elapsed = time.perf_counter() - started
    logger.info(
        "replicate %d: events=%d elapsed=%.2fs throughput=%.0f events/s",
        index, trajectory.event_count, elapsed, throughput(trajectory.event_count, elapsed),
    )
    return trajectory


def simulate_replicates(cfg: RunConfig) -> list[Trajectory]:
    pool = SweepPool(max_workers=cfg.sweep.workers)
    for index in range(cfg.replicates):
        pool.submit(replicate_dir(index), simulate_replicate, cfg, index)
    tasks = pool.run()
    error = pool.first_error()
    if error is not None:
        raise error
    return [task.result for task in tasks]


def solve_density(cfg: RunConfig, spec: ModelSpec, mode: str | None = None) -> PdeSolution:
    return solve(initial_density(cfg, spec), spec, pde_config(cfg, mode), cfg.t_end, cfg.snapshot_times)


def mean_density(cfg: RunConfig, spec: ModelSpec, trajectories: list[Trajectory], t: float) -> DensityGrid:
    """Replicate mean of the binned IBM density at ``t``, on the solver's grid."""
    like = DensityGrid.zeros(spec.domain, cfg.pde.nx, cfg.pde.nu, t)
    values = np.mean(
        [density_on_grid(traj.at(t), like, n_scale=cfg.N_scale).values for traj in trajectories],
        axis=0,
    )
    return like.with_values(values)


def _run_ibm(cfg: RunConfig, spec: ModelSpec, out: RunOutput) -> RunResult:
    trajectories = simulate_replicates(cfg)
    peak_rows = []
    final_peaks = []
    for index, trajectory in enumerate(trajectories):
        subdir = None if cfg.replicates == 1 else replicate_dir(index)
        peaks: list[float] = []
        for snapshot in trajectory.snapshots:
            out.snapshot(snapshot, subdir)
            out.metric({
                "kind": "size",
                "replicate": index,
                "t": snapshot.t,
                "size": snapshot.size,
                "mass": snapshot.size / cfg.N_scale,
            })
            # x-peaks of the spatial marginal, one bin per solver node
            peaks = cluster_peaks(histogram(snapshot, spec.domain, cfg.pde.nx, 1), "x")
            peak_rows.extend((index, snapshot.t, "x", p) for p in peaks)
        final_peaks.append(peaks)
        for t, outcome in trajectory.event_log or ():
            out.event(t, outcome)
    out.peaks(peak_rows)
    summary = {
        "kind": "summary",
        "mode": cfg.mode,
        "replicates": cfg.replicates,
        "events": [traj.event_count for traj in trajectories],
        "extinct_at": [traj.extinct_at for traj in trajectories],
        "max_size": [traj.max_size for traj in trajectories],
        "final_size": [traj.snapshots[-1].size for traj in trajectories],
        "x_peaks": [len(p) for p in final_peaks],
        "peak_spacing_ok": [spacings_within(p, cfg.delta) for p in final_peaks],
    }
    return RunResult(summary=summary, final_density=mean_density(cfg, spec, trajectories, cfg.t_end))


def _run_pde(cfg: RunConfig, spec: ModelSpec, out: RunOutput) -> RunResult:
    solution = solve_density(cfg, spec)
    for grid in solution.snapshots:
        out.grid(grid)
        out.metric({"kind": "mass", "t": grid.t, "mass": grid.mass()})
    mass0 = solution.mass_trace[0][1]
    final = solution.at(cfg.t_end)
    x_peaks = grid_peaks(final, "x")
    summary = {
        "kind": "summary",
        "mode": cfg.mode,
        "dt": solution.dt,
        "mass0": mass0,
        "mass_end": solution.mass_trace[-1][1],
        "clipped_mass": solution.clipped_mass,
        "mass_bound_ok": mass_bound_ok(solution.mass_trace, mass0, growth_rate(spec)),
        "x_peaks": len(x_peaks),
        "x_peak_positions": x_peaks,
        "peak_spacing_ok": spacings_within(x_peaks, cfg.delta),
    }
    return RunResult(summary=summary, final_density=final)


def run_simulation(cfg: RunConfig) -> RunResult:
    """The ``run`` subcommand: one simulation or solve, written to ``cfg.out_dir``."""
    spec = build_spec(cfg)
    logger.info(
        "run: scenario=%s mode=%s N=%d N_scale=%d delta=%g seed=%d out_dir=%s",
        cfg.scenario, cfg.mode, cfg.N, cfg.N_scale, cfg.delta, cfg.seed, cfg.out_dir,
    )
    with RunOutput(cfg.out_dir, event_log=cfg.engine.event_log and not cfg.is_pde) as out:
        out.meta({"kind": "config", "config": cfg.to_dict()})
        bounds = spec.bounds
        out.meta({
            "kind": "model",
            "C_delta": bounds.C_delta,
            "lambda_star": bounds.lambda_star,
            "mu_star": bounds.mu_star,
            "m_star": bounds.m_star,
            "M_star_l1": bounds.M_star_l1,
            "kernel_sup": bounds.kernel_sup,
        })
        result = _run_pde(cfg, spec, out) if cfg.is_pde else _run_ibm(cfg, spec, out)
        out.meta(result.summary)
    return result


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def cell_config(cfg: RunConfig, value: float, index: int) -> RunConfig:
    """``cfg`` with the swept parameter set to ``value``, writing under its own cell directory."""
    param = cfg.sweep.param
    out_dir = cfg.out_dir / cell_dir(index)
    if param == "delta":
        return cfg.replace(model=cfg.model.replace(delta=value), out_dir=out_dir)
    if param == "N_scale":
        k = int(round(value))
        n = max(1, int(round(cfg.N * k / cfg.N_scale)))
        return cfg.replace(model=cfg.model.replace(N_scale=k, N=n), out_dir=out_dir)
    if param == "h":
        return cfg.replace(reflect=replace(cfg.reflect, h=value), out_dir=out_dir)
    return cfg.replace(pde=replace(cfg.pde, dt=value), out_dir=out_dir)


def _check_sweep(cfg: RunConfig) -> None:
    param = cfg.sweep.param
    if not cfg.sweep.values:
        raise ConfigError("sweep.values: give at least one value to sweep")
    if param == "dt" and not cfg.is_pde:
        raise ConfigError("sweep.param dt needs a pde_* mode")
    if param in ("N_scale", "h") and cfg.is_pde:
        raise ConfigError(f"sweep.param {param} needs an ibm_* mode")


def run_cell(cfg: RunConfig) -> RunResult:
    return run_simulation(cfg)


def _trend_ok(param: str, values: list[float], distances: list[float]) -> bool | None:
    """Whether the distances shrink in the direction the swept parameter converges; None for h."""
    if param == "h":
        return None
    # coarse to fine: large delta or dt first, small N_scale first
    ordered = [d for _, d in sorted(zip(values, distances), reverse=(param != "N_scale"))]
    return all(b < a for a, b in zip(ordered, ordered[1:]))


def run_sweep(cfg: RunConfig) -> dict:
    """The ``sweep`` subcommand: one cell per value and its L1 distance to the limit object.

    delta cells are compared with the local solver, other IBM cells with the
    nonlocal solver, and dt cells with the finest dt cell.
    """
    _check_sweep(cfg)
    param = cfg.sweep.param
    values = list(cfg.sweep.values)
    cells = [cell_config(cfg, v, i) for i, v in enumerate(values)]

    with RunOutput(cfg.out_dir) as out:
        out.meta({"kind": "config", "config": cfg.to_dict()})
        # IBM cells spread their replicates over a pool of their own
        results, pool_stats = _pool_cells(cells, cfg.sweep.workers if cfg.is_pde else 1)

        if param == "dt":
            finest = min(range(len(values)), key=lambda i: values[i])
            reference = results[finest].final_density
        else:
            spec = build_spec(cfg)
            ref_mode = "local" if param == "delta" else "nonlocal"
            reference = solve_density(cfg, spec, mode=ref_mode).at(cfg.t_end)
            out.grid(reference, subdir="reference")

        ref_mass = reference.mass()
        distances = []
        for i, (value, result) in enumerate(zip(values, results)):
            d = l1_distance(result.final_density, reference)
            distances.append(d)
            out.metric({
                "kind": "sweep_cell",
                "cell": cell_dir(i),
                "param": param,
                "value": value,
                "l1": d,
                "relative_l1": d / ref_mass if ref_mass > 0 else None,
            })

        trend_values, trend_distances = values, distances
        if param == "dt":
            keep = [i for i in range(len(values)) if i != finest]
            trend_values = [values[i] for i in keep]
            trend_distances = [distances[i] for i in keep]
        trend = _trend_ok(param, trend_values, trend_distances)
        summary = {
            "kind": "sweep_summary",
            "param": param,
            "values": values,
            "l1": distances,
            "monotone": trend,
            "pool": pool_stats,
        }
        out.meta(summary)
    logger.info("sweep %s done: l1=%s monotone=%s", param, ["%.4g" % d for d in distances], trend)
    if trend is False:
        raise AcceptanceError(
            f"sweep over {param}: L1 distances {distances} do not shrink toward the limit",
            code=CHECK_NOT_MONOTONE,
        )
    return summary


def _pool_cells(cells: list[RunConfig], workers: int) -> tuple[list[RunResult], dict]:
    pool = SweepPool(max_workers=workers)
    for i, cell in enumerate(cells):
        pool.submit(cell_dir(i), run_cell, cell)
    tasks = pool.run()
    error = pool.first_error()
    if error is not None:
        raise error
    stats = pool.get_stats()
    logger.info("sweep pool %s, cell seconds %s", stats, ["%.2f" % task.elapsed for task in tasks])
    return [task.result for task in tasks], stats


# ---------------------------------------------------------------------------
# IBM vs solver comparison
# ---------------------------------------------------------------------------


def run_compare(cfg: RunConfig) -> dict:
    """The ``compare`` subcommand: binned IBM replicates against the solver at every snapshot time."""
    ibm_cfg = cfg if not cfg.is_pde else cfg.replace(mode="ibm_logistic")
    pde_mode = "local" if cfg.mode == "pde_local" else "nonlocal"
    spec = build_spec(ibm_cfg)
    trajectories = simulate_replicates(ibm_cfg)
    solution = solve_density(cfg, spec, mode=pde_mode)
    rows = []
    with RunOutput(cfg.out_dir) as out:
        out.meta({"kind": "config", "config": cfg.to_dict()})
        for grid in solution.snapshots:
            ibm = mean_density(ibm_cfg, spec, trajectories, grid.t)
            out.grid(grid, subdir="pde")
            out.grid(ibm, subdir="ibm")
            pde_mass = grid.mass()
            d = l1_distance(ibm, grid)
            row = {
                "kind": "compare",
                "t": grid.t,
                "l1": d,
                "relative_l1": d / pde_mass if pde_mass > 0 else None,
                "ibm_mass": ibm.mass(),
                "pde_mass": pde_mass,
            }
            out.metric(row)
            rows.append(row)
        summary = {
            "kind": "compare_summary",
            "ibm_mode": ibm_cfg.mode,
            "pde_mode": pde_mode,
            "replicates": cfg.replicates,
            "max_relative_l1": max((r["relative_l1"] or 0.0) for r in rows) if rows else 0.0,
        }
        out.meta(summary)
    logger.info("compare done: max relative L1 %.4g over %d snapshot(s)", summary["max_relative_l1"], len(rows))
    return {**summary, "rows": rows}
