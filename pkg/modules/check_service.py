"""The ``check`` diagnostic suite: invariants and generator consistency for one scenario."""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import time
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .analysis import generator_check, ks_distance, mass_bound_ok, predicted_rates, probe_functions
from .config import RunConfig
from .engine import run, throughput
from .error_codes import CHECK_FAILED
from .errors import AcceptanceError, ConfigError, RateBoundError, SimulationError
from .model import Constant, ModelSpec, Polynomial, check_event_bound, interaction_field, interaction_weight
from .pde import solve
from .reflect import euler_substep, shepp_sample
from .rng import StreamFactory
from .run_service import engine_options, growth_rate, pde_config, reflect_config
from .scenarios import build_spec, initial_density, initial_points
from .state import Population
from .storage import RunOutput

logger = logging.getLogger(__name__)

THROUGHPUT_TARGET = 1e5
GENERATOR_PROBES = ("one", "x", "cos")


@dataclass(frozen=True)
class CheckSettings:
    confinement_walkers: int = 200
    confinement_steps: int = 500
    shepp_draws: int = 100_000
    frozen_size: int = 20
    generator_states: int = 10
    generator_replicates: int = 1000
    generator_event_share: float = 0.02
    short_horizon: float = 0.5
    z_threshold: float = 4.0


@dataclass
class CheckRow:
    check: str
    passed: Optional[bool]
    value: float | None = None
    detail: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {"kind": "check", "check": self.check, "passed": self.passed, "value": self.value, **self.detail}


def _uniform_stationary(spec: ModelSpec) -> bool:
    """Zero drift and an x-free diffusion rate leave the uniform law on the box invariant."""
    no_drift = isinstance(spec.b, Constant) and spec.b.value == 0.0
    flat_m = isinstance(spec.m, Constant) or (isinstance(spec.m, Polynomial) and spec.m.variable == "u")
    return no_drift and flat_m


def _check_confinement(cfg: RunConfig, spec: ModelSpec, s: CheckSettings) -> list[CheckRow]:
    """Walkers started evenly over the box must stay inside it and, without drift, stay uniform."""
    domain = spec.domain
    rcfg = reflect_config(cfg, spec)
    rng = StreamFactory(cfg.seed).aux_stream()
    xs = np.linspace(domain.x_min, domain.x_max, s.confinement_walkers)
    u_mid = 0.5 * (domain.u_min + domain.u_max)
    outside = 0
    ends = np.empty(s.confinement_walkers)
    for k, x in enumerate(xs.tolist()):
        for _ in range(s.confinement_steps):
            x = euler_substep(x, u_mid, spec, rcfg, rcfg.h, rng)
            if x < domain.x_min or x > domain.x_max:
                outside += 1
        ends[k] = x
    confinement = CheckRow("confinement", outside == 0, float(outside),
                           {"substeps": s.confinement_walkers * s.confinement_steps})
    distance = ks_distance(ends, lambda y: np.clip((y - domain.x_min) / domain.length, 0.0, 1.0))
    # Kolmogorov-Smirnov critical value at the 1% level
    critical = 1.63 / math.sqrt(s.confinement_walkers)
    if not _uniform_stationary(spec):
        return [confinement, CheckRow("stationary_law", None, distance, {"critical": critical, "uniform": False})]
    return [confinement, CheckRow("stationary_law", distance < critical, distance, {"critical": critical})]


def _check_shepp(cfg: RunConfig, s: CheckSettings) -> CheckRow:
    rng = StreamFactory(cfg.seed).aux_stream()
    sups = np.empty(s.shepp_draws)
    violations = 0
    for i in range(s.shepp_draws):
        bm, sup = shepp_sample(1.0, 0.0, 1.0, rng)
        sups[i] = sup
        if sup < max(0.0, bm):
            violations += 1
    mean = float(sups.mean())
    se = float(sups.std(ddof=1)) / math.sqrt(s.shepp_draws)
    z = (mean - math.sqrt(2.0 / math.pi)) / se
    return CheckRow("shepp_mean", abs(z) < s.z_threshold and violations == 0, mean,
                    {"z": z, "violations": violations})


def _check_kernel(spec: ModelSpec) -> CheckRow:
    domain = spec.domain
    kernel = spec.interaction
    worst = 0.0
    for x in (domain.x_min, 0.5 * (domain.x_min + domain.x_max), domain.x_max):
        points = [p for p in (x - kernel.delta, x + kernel.delta) if domain.x_min < p < domain.x_max]
        total, _ = integrate.quad(
            lambda y: interaction_weight(domain, kernel, x, y), domain.x_min, domain.x_max, points=points or None,
            limit=200,
        )
        worst = max(worst, total)
        if kernel.normalization == "boundary_aware" and abs(total - 1.0) > 1e-6:
            return CheckRow("kernel_normalization", False, total, {"x": x})
    return CheckRow("kernel_normalization", worst <= 1.0 + 1e-6, worst, {"normalization": kernel.normalization})


def _check_event_bound(cfg: RunConfig, spec: ModelSpec) -> CheckRow:
    pop = Population.from_points(initial_points(cfg, spec), domain=spec.domain)
    try:
        for ind in pop.individuals:
            check_event_bound(spec, ind.x, ind.u, interaction_field(pop, ind.x, ind.u, spec), pop.size)
    except RateBoundError as exc:
        return CheckRow("event_rate_bound", False, None, {"error": exc.message})
    return CheckRow("event_rate_bound", True, spec.C_delta)


def _short_run(cfg: RunConfig, spec: ModelSpec, horizon: float):
    streams = StreamFactory(cfg.seed)
    pop0 = Population.from_points(initial_points(cfg, spec, streams), domain=spec.domain, streams=streams)
    return run(pop0, spec, horizon, [horizon], reflect_config(cfg, spec), mode=cfg.engine_mode,
               streams=streams, options=engine_options(cfg))


def _check_determinism(cfg: RunConfig, spec: ModelSpec, s: CheckSettings) -> CheckRow:
    horizon = min(cfg.t_end, s.short_horizon)
    a = _short_run(cfg, spec, horizon).snapshots[-1]
    b = _short_run(cfg, spec, horizon).snapshots[-1]
    same = (
        np.array_equal(a.ids, b.ids) and np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u)
    )
    return CheckRow("determinism", bool(same), float(a.size))


def _check_throughput(cfg: RunConfig, spec: ModelSpec, s: CheckSettings) -> CheckRow:
    started = time.perf_counter()
    trajectory = _short_run(cfg, spec, min(cfg.t_end, s.short_horizon))
    rate = throughput(trajectory.event_count, time.perf_counter() - started)
    # informational: wall-clock speed depends on the machine
    return CheckRow("throughput", None, rate, {"events": trajectory.event_count, "target": THROUGHPUT_TARGET})


def frozen_states(cfg: RunConfig, spec: ModelSpec, s: CheckSettings) -> list[Population]:
    """Random frozen states: positions uniform on the middle half of the box, traits uniform on the trait box.

    Positions stay a quarter box away from the walls, where reflection would add drift the generator omits.
    """
    if s.generator_states < 1 or s.frozen_size < 1:
        raise ConfigError("the generator check needs at least one frozen state with one individual")
    domain = spec.domain
    rng = StreamFactory(cfg.seed).aux_stream()
    lo = domain.x_min + 0.25 * domain.length
    hi = domain.x_max - 0.25 * domain.length
    states = []
    for _ in range(s.generator_states):
        xs = rng.uniform(lo, hi, s.frozen_size)
        us = rng.uniform(domain.u_min, domain.u_max, s.frozen_size)
        states.append(Population.from_points(list(zip(xs.tolist(), us.tolist())), domain=spec.domain))
    return states


def _check_generator(cfg: RunConfig, spec: ModelSpec, s: CheckSettings) -> list[CheckRow]:
    probes = probe_functions(spec.domain)
    rcfg = reflect_config(cfg, spec)
    base = StreamFactory(cfg.seed)
    worst: dict[str, tuple[float, int, dict]] = {}
    failed: dict[str, int] = {name: 0 for name in GENERATOR_PROBES}
    for index, frozen in enumerate(frozen_states(cfg, spec, s)):
        _, _, event_rate = predicted_rates(frozen, spec, probes["one"])
        dt = s.generator_event_share * frozen.size / max(event_rate, 1e-12)
        for offset, name in enumerate(GENERATOR_PROBES):
            streams = base.spawn(index * len(GENERATOR_PROBES) + offset)
            result = generator_check(frozen, spec, probes[name], dt, s.generator_replicates,
                                     streams, rcfg, mode=cfg.engine_mode)
            if not result.passed(s.z_threshold):
                failed[name] += 1
            z = max(abs(v) for v in result.z_scores.values())
            if name not in worst or z > worst[name][0]:
                record = result.to_record()
                record.pop("function")
                worst[name] = (z, index, record)
    rows = []
    for name in GENERATOR_PROBES:
        z, index, record = worst[name]
        detail = {**record, "states": s.generator_states, "worst_state": index, "failed_states": failed[name]}
        rows.append(CheckRow(f"generator_{name}", failed[name] == 0, z, detail))
    logger.debug("generator check over %d frozen states of %d individuals", s.generator_states, s.frozen_size)
    return rows


def _check_pde_mass(cfg: RunConfig, spec: ModelSpec, s: CheckSettings) -> CheckRow:
    horizon = min(cfg.t_end, s.short_horizon)
    mode = cfg.pde_mode if cfg.is_pde else "nonlocal"
    solution = solve(initial_density(cfg, spec), spec, pde_config(cfg, mode), horizon)
    mass0 = solution.mass_trace[0][1]
    ok = mass_bound_ok(solution.mass_trace, mass0, growth_rate(spec))
    return CheckRow("pde_mass_bound", ok, solution.mass_trace[-1][1],
                    {"mass0": mass0, "clipped_mass": solution.clipped_mass})


def _guarded(name: str, fn: Callable[[], CheckRow | list[CheckRow]]) -> list[CheckRow]:
    try:
        out = fn()
    except SimulationError as exc:
        logger.warning("check %s raised %s: %s", name, exc.name, exc.message)
        return [CheckRow(name, False, None, {"error": exc.message, "code": exc.code})]
    return out if isinstance(out, list) else [out]


def run_checks(cfg: RunConfig, settings: CheckSettings | None = None) -> list[CheckRow]:
    """The ``check`` subcommand: every diagnostic row, also written to metrics.ndjson."""
    s = settings or CheckSettings()
    spec = build_spec(cfg)
    logger.info("check: scenario=%s mode=%s seed=%d", cfg.scenario, cfg.mode, cfg.seed)
    rows: list[CheckRow] = []
    rows += _guarded("confinement", lambda: _check_confinement(cfg, spec, s))
    rows += _guarded("shepp_mean", lambda: _check_shepp(cfg, s))
    rows += _guarded("kernel_normalization", lambda: _check_kernel(spec))
    rows += _guarded("event_rate_bound", lambda: _check_event_bound(cfg, spec))
    rows += _guarded("determinism", lambda: _check_determinism(cfg, spec, s))
    rows += _guarded("generator", lambda: _check_generator(cfg, spec, s))
    rows += _guarded("pde_mass_bound", lambda: _check_pde_mass(cfg, spec, s))
    rows += _guarded("throughput", lambda: _check_throughput(cfg, spec, s))

    with RunOutput(cfg.out_dir) as out:
        out.meta({"kind": "config", "config": cfg.to_dict()})
        for row in rows:
            if row.check != "throughput":
                out.metric(row.to_record())
    for row in rows:
        logger.info("check %-22s %s value=%s", row.check,
                    "n/a" if row.passed is None else ("PASS" if row.passed else "FAIL"), row.value)
    return rows


def require_all_passed(rows: list[CheckRow]) -> None:
    failed = [row.check for row in rows if row.passed is False]
    if failed:
        raise AcceptanceError(f"diagnostics failed: {', '.join(failed)}", code=CHECK_FAILED)


def format_table(rows: list[CheckRow]) -> str:
    lines = [f"{'check':<24} {'status':<6} value"]
    for row in rows:
        status = "n/a" if row.passed is None else ("PASS" if row.passed else "FAIL")
        value = "-" if row.value is None else f"{row.value:.6g}"
        lines.append(f"{row.check:<24} {status:<6} {value}")
    return "\n".join(lines)
