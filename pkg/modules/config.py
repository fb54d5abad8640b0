from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging
from pathlib import Path
from typing import Any

import yaml

from .error_codes import CONFIG_FILE_NOT_FOUND, CONFIG_PARSE_FAILED, CONFIG_UNKNOWN_KEY
from .errors import ConfigError
from .model import KERNEL_NORMALIZATIONS, KERNEL_SHAPES, rate_expr_from_dict
from .pde import DEFAULT_NODES, PDE_SCHEMES
from .scenarios import INITIAL_KINDS, RATE_KEYS, SCENARIOS, preset_values

logger = logging.getLogger(__name__)

RUN_CONFIG_PATH = Path("config/run_config.yaml")

RUN_MODES = ("ibm_general", "ibm_logistic", "pde_nonlocal", "pde_local")
SWEEP_PARAMS = ("N_scale", "delta", "h", "dt")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
DOMAIN_KEYS = ("x_min", "x_max", "u_min", "u_max")


@dataclass
class ModelParams:
    N: int = 100
    N_scale: int = 100
    delta: float = 0.1
    s: float = 0.01
    m: float = 0.01
    rho: float | None = None
    mutation_rate: float = 0.1
    normalization: str = "boundary_aware"
    kernel_shape: str | None = None
    domain: dict[str, float] | None = None
    rates: dict[str, dict] = field(default_factory=dict)
    W: dict[str, float | None] | None = None
    mu_star: float | None = None
    mu_lipschitz: float | None = None
    c_delta: float | None = None

    def replace(self, **changes) -> ModelParams:
        return replace(self, **changes)


@dataclass
class InitialCondition:
    kind: str = "point_mass"
    x: float = 0.0
    u: float = 0.0
    n: int | None = None
    path: Path | None = None


@dataclass
class ReflectParams:
    h: float = 0.1
    alpha_bar: float | None = None
    beta_bar: float | None = None


@dataclass
class PdeParams:
    nx: int = DEFAULT_NODES
    nu: int = DEFAULT_NODES
    dt: float | None = None
    scheme: str = "explicit"
    safety: float = 0.9


@dataclass
class EngineParams:
    event_cap: int = 10**9
    check_bounds: bool = False
    event_log: bool = False


@dataclass
class SweepParams:
    param: str = "delta"
    values: tuple[float, ...] = ()
    workers: int = 1


@dataclass
class RunLogConfig:
    """Rotating run log; ``path=None`` puts ``run.log`` inside the output directory."""

    path: Path | None = None
    max_bytes: int = 10 * 1024 * 1024
    backup_count: int = 5


@dataclass
class LoggingConfig:
    level: str = "INFO"
    run_log: RunLogConfig = field(default_factory=RunLogConfig)


@dataclass
class RunConfig:
    scenario: str = "example1"
    mode: str = "ibm_logistic"
    seed: int = 1
    t_end: float = 10.0
    snapshot_times: tuple[float, ...] = (10.0,)
    out_dir: Path = Path("out")
    replicates: int = 1
    model: ModelParams = field(default_factory=ModelParams)
    initial: InitialCondition = field(default_factory=InitialCondition)
    reflect: ReflectParams = field(default_factory=ReflectParams)
    pde: PdeParams = field(default_factory=PdeParams)
    engine: EngineParams = field(default_factory=EngineParams)
    sweep: SweepParams = field(default_factory=SweepParams)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    @property
    def N(self) -> int:
        return self.model.N

    @property
    def N_scale(self) -> int:
        return self.model.N_scale

    @property
    def delta(self) -> float:
        return self.model.delta

    @property
    def h(self) -> float:
        return self.reflect.h

    @property
    def is_pde(self) -> bool:
        return self.mode.startswith("pde_")

    @property
    def engine_mode(self) -> str:
        return "general" if self.mode == "ibm_general" else "logistic"

    @property
    def pde_mode(self) -> str:
        return "local" if self.mode == "pde_local" else "nonlocal"

    def replace(self, **changes) -> RunConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        model = self.model
        return {
            "run": {
                "scenario": self.scenario,
                "mode": self.mode,
                "seed": self.seed,
                "t_end": self.t_end,
                "snapshot_times": list(self.snapshot_times),
                "out_dir": str(self.out_dir),
                "replicates": self.replicates,
            },
            "model": {
                "N": model.N,
                "N_scale": model.N_scale,
                "delta": model.delta,
                "s": model.s,
                "m": model.m,
                "rho": model.rho,
                "mutation_rate": model.mutation_rate,
                "normalization": model.normalization,
                "kernel_shape": model.kernel_shape,
                "domain": None if model.domain is None else dict(model.domain),
                "rates": {k: dict(v) for k, v in model.rates.items()},
                "W": None if model.W is None else dict(model.W),
                "mu_star": model.mu_star,
                "mu_lipschitz": model.mu_lipschitz,
                "c_delta": model.c_delta,
            },
            "initial": {
                "kind": self.initial.kind,
                "x": self.initial.x,
                "u": self.initial.u,
                "n": self.initial.n,
                "path": None if self.initial.path is None else str(self.initial.path),
            },
            "reflect": {
                "h": self.reflect.h,
                "alpha_bar": self.reflect.alpha_bar,
                "beta_bar": self.reflect.beta_bar,
            },
            "pde": {
                "nx": self.pde.nx,
                "nu": self.pde.nu,
                "dt": self.pde.dt,
                "scheme": self.pde.scheme,
                "safety": self.pde.safety,
            },
            "engine": {
                "event_cap": self.engine.event_cap,
                "check_bounds": self.engine.check_bounds,
                "event_log": self.engine.event_log,
            },
            "sweep": {
                "param": self.sweep.param,
                "values": list(self.sweep.values),
                "workers": self.sweep.workers,
            },
            "logging": {
                "level": self.logging.level,
                "run_log": {
                    "path": None if self.logging.run_log.path is None else str(self.logging.run_log.path),
                    "max_bytes": self.logging.run_log.max_bytes,
                    "backup_count": self.logging.run_log.backup_count,
                },
            },
        }


_SCHEMA: dict[str, tuple[str, ...]] = {
    "run": ("scenario", "mode", "seed", "t_end", "snapshot_times", "out_dir", "replicates"),
    "model": (
        "N", "N_scale", "delta", "s", "m", "rho", "mutation_rate", "normalization", "kernel_shape",
        "domain", "rates", "W", "mu_star", "mu_lipschitz", "c_delta",
    ),
    "initial": ("kind", "x", "u", "n", "path"),
    "reflect": ("h", "alpha_bar", "beta_bar"),
    "pde": ("nx", "nu", "dt", "scheme", "safety"),
    "engine": ("event_cap", "check_bounds", "event_log"),
    "sweep": ("param", "values", "workers"),
    "logging": ("level", "run_log"),
}
_NESTED_SCHEMA: dict[str, tuple[str, ...]] = {
    "model.domain": DOMAIN_KEYS,
    "model.rates": RATE_KEYS,
    "model.W": ("width", "amplitude"),
    "logging.run_log": ("path", "max_bytes", "backup_count"),
}


def _load_yaml(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", code=CONFIG_FILE_NOT_FOUND)
    try:
        with path.open("r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (yaml.YAMLError, OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"failed to parse config file {path}: {exc}", code=CONFIG_PARSE_FAILED) from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping of sections", code=CONFIG_PARSE_FAILED)
    return data


def _check_keys(data: dict, origin: str) -> None:
    for section, body in data.items():
        if section not in _SCHEMA:
            raise ConfigError(f"{origin}: unknown section {section!r}", code=CONFIG_UNKNOWN_KEY)
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: expected a mapping")
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{origin}: unknown key {section}.{key}", code=CONFIG_UNKNOWN_KEY)
            nested = _NESTED_SCHEMA.get(f"{section}.{key}")
            if nested is None or value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"{section}.{key}: expected a mapping")
            for inner in value:
                if inner not in nested:
                    raise ConfigError(f"{origin}: unknown key {section}.{key}.{inner}", code=CONFIG_UNKNOWN_KEY)


def _merge(base: dict, top: dict, depth: int = 0) -> dict:
    # sections and their mapping-valued keys merge; anything deeper is replaced whole
    out = dict(base)
    for key, value in top.items():
        if depth < 2 and isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value, depth + 1)
        else:
            out[key] = value
    return out


def _as_bool(raw, default: bool, key: str = "value") -> bool:
    if isinstance(raw, bool):
        return raw
    if raw is None:
        return default
    if isinstance(raw, (int, float)):
        return raw != 0

    value = str(raw).strip().lower()
    if value in {"1", "true", "yes", "on"}:
        return True
    if value in {"0", "false", "no", "off"}:
        return False
    raise ConfigError(f"{key}: expected a boolean (got {raw!r})")


def _as_float(raw, key: str, *, positive: bool = False, nonnegative: bool = False) -> float:
    if isinstance(raw, bool):
        raise ConfigError(f"{key}: expected a number (got {raw!r})")
    try:
        value = float(str(raw).strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number (got {raw!r})") from exc
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(f"{key}: must be finite (got {raw!r})")
    if positive and not value > 0:
        raise ConfigError(f"{key}: must be positive (got {value})")
    if nonnegative and value < 0:
        raise ConfigError(f"{key}: must be nonnegative (got {value})")
    return value


def _as_optional_float(raw, key: str, **kwargs) -> float | None:
    return None if raw is None else _as_float(raw, key, **kwargs)


def _as_int(raw, key: str, *, minimum: int | None = None) -> int:
    if isinstance(raw, bool):
        raise ConfigError(f"{key}: expected an integer (got {raw!r})")
    value = _as_float(raw, key)
    if value != int(value):
        raise ConfigError(f"{key}: expected an integer (got {raw!r})")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key}: must be at least {minimum} (got {value})")
    return value


def _as_choice(raw, key: str, choices: tuple[str, ...]) -> str:
    value = str(raw).strip()
    if value not in choices:
        raise ConfigError(f"{key}: expected one of {list(choices)} (got {raw!r})")
    return value


def _as_float_list(raw, key: str, **kwargs) -> tuple[float, ...]:
    if raw is None:
        return ()
    if isinstance(raw, str):
        raw = [part for part in raw.split(",") if part.strip()]
    if not isinstance(raw, (list, tuple)):
        raise ConfigError(f"{key}: expected a list of numbers")
    return tuple(_as_float(v, f"{key}[{i}]", **kwargs) for i, v in enumerate(raw))


def _parse_snapshot_times(raw, t_end: float, explicit: bool) -> tuple[float, ...]:
    # the horizon is always recorded
    times = _as_float_list(raw, "run.snapshot_times", nonnegative=True)
    if not explicit:
        return tuple([t for t in times if t < t_end] + [t_end])
    for i, t in enumerate(times):
        if t > t_end:
            raise ConfigError(f"run.snapshot_times[{i}]: {t} lies beyond t_end={t_end}")
        if i and t <= times[i - 1]:
            raise ConfigError("run.snapshot_times: times must be strictly increasing")
    if not times or times[-1] < t_end:
        times = times + (t_end,)
    return times


def _parse_model(data: dict, defaults: ModelParams) -> ModelParams:
    domain = data.get("domain")
    if domain is not None:
        missing = [k for k in DOMAIN_KEYS if k not in domain]
        if missing:
            raise ConfigError(f"model.domain: missing {missing}")
        domain = {k: _as_float(domain[k], f"model.domain.{k}") for k in DOMAIN_KEYS}
    rates = {}
    for name, raw in (data.get("rates", {}) or {}).items():
        rates[name] = rate_expr_from_dict(raw, key=f"model.rates.{name}").to_dict()
    W = data.get("W")
    if W is not None:
        W = {
            "width": _as_optional_float(W.get("width"), "model.W.width", positive=True),
            "amplitude": _as_float(W.get("amplitude", 1.0), "model.W.amplitude", positive=True),
        }
    shape = data.get("kernel_shape")
    return ModelParams(
        N=_as_int(data.get("N", defaults.N), "model.N", minimum=1),
        N_scale=_as_int(data.get("N_scale", defaults.N_scale), "model.N_scale", minimum=1),
        delta=_as_float(data.get("delta", defaults.delta), "model.delta", positive=True),
        s=_as_float(data.get("s", defaults.s), "model.s", positive=True),
        m=_as_float(data.get("m", defaults.m), "model.m", nonnegative=True),
        rho=_as_optional_float(data.get("rho", defaults.rho), "model.rho", positive=True),
        mutation_rate=_as_float(
            data.get("mutation_rate", defaults.mutation_rate), "model.mutation_rate", nonnegative=True
        ),
        normalization=_as_choice(
            data.get("normalization", defaults.normalization), "model.normalization", KERNEL_NORMALIZATIONS
        ),
        kernel_shape=None if shape is None else _as_choice(shape, "model.kernel_shape", KERNEL_SHAPES),
        domain=domain,
        rates=rates,
        W=W,
        mu_star=_as_optional_float(data.get("mu_star"), "model.mu_star", positive=True),
        mu_lipschitz=_as_optional_float(data.get("mu_lipschitz"), "model.mu_lipschitz", nonnegative=True),
        c_delta=_as_optional_float(data.get("c_delta"), "model.c_delta", positive=True),
    )


def _parse_initial(data: dict, defaults: InitialCondition) -> InitialCondition:
    kind = _as_choice(data.get("kind", defaults.kind), "initial.kind", INITIAL_KINDS)
    path = data.get("path")
    if kind == "grid_density" and not path:
        raise ConfigError("initial.path: grid_density needs a grid CSV file")
    n = data.get("n")
    return InitialCondition(
        kind=kind,
        x=_as_float(data.get("x", defaults.x), "initial.x"),
        u=_as_float(data.get("u", defaults.u), "initial.u"),
        n=None if n is None else _as_int(n, "initial.n", minimum=1),
        path=None if not path else Path(str(path).strip()),
    )


def _parse_logging(data: dict, defaults: LoggingConfig) -> LoggingConfig:
    run_log = data.get("run_log", {}) or {}
    path_raw = run_log.get("path")
    return LoggingConfig(
        level=_as_choice(str(data.get("level", defaults.level)).upper(), "logging.level", LOG_LEVELS),
        run_log=RunLogConfig(
            path=None if not path_raw else Path(str(path_raw).strip()),
            max_bytes=_as_int(
                run_log.get("max_bytes", defaults.run_log.max_bytes), "logging.run_log.max_bytes", minimum=0
            ),
            backup_count=_as_int(
                run_log.get("backup_count", defaults.run_log.backup_count), "logging.run_log.backup_count", minimum=0
            ),
        ),
    )


def _build(data: dict, explicit_times: bool) -> RunConfig:
    defaults = RunConfig()
    run = data.get("run", {}) or {}
    reflect = data.get("reflect", {}) or {}
    pde = data.get("pde", {}) or {}
    engine = data.get("engine", {}) or {}
    sweep = data.get("sweep", {}) or {}

    t_end = _as_float(run.get("t_end", defaults.t_end), "run.t_end", positive=True)
    pde_dt = pde.get("dt")
    return RunConfig(
        scenario=_as_choice(run.get("scenario", defaults.scenario), "run.scenario", SCENARIOS),
        mode=_as_choice(run.get("mode", defaults.mode), "run.mode", RUN_MODES),
        seed=_as_int(run.get("seed", defaults.seed), "run.seed", minimum=0),
        t_end=t_end,
        snapshot_times=_parse_snapshot_times(run.get("snapshot_times"), t_end, explicit_times),
        out_dir=Path(str(run.get("out_dir", defaults.out_dir)).strip()),
        replicates=_as_int(run.get("replicates", defaults.replicates), "run.replicates", minimum=1),
        model=_parse_model(data.get("model", {}) or {}, defaults.model),
        initial=_parse_initial(data.get("initial", {}) or {}, defaults.initial),
        reflect=ReflectParams(
            h=_as_float(reflect.get("h", defaults.reflect.h), "reflect.h", positive=True),
            alpha_bar=_as_optional_float(reflect.get("alpha_bar"), "reflect.alpha_bar"),
            beta_bar=_as_optional_float(reflect.get("beta_bar"), "reflect.beta_bar"),
        ),
        pde=PdeParams(
            nx=_as_int(pde.get("nx", defaults.pde.nx), "pde.nx", minimum=3),
            nu=_as_int(pde.get("nu", defaults.pde.nu), "pde.nu", minimum=3),
            dt=None if pde_dt is None else _as_float(pde_dt, "pde.dt", positive=True),
            scheme=_as_choice(pde.get("scheme", defaults.pde.scheme), "pde.scheme", PDE_SCHEMES),
            safety=_as_float(pde.get("safety", defaults.pde.safety), "pde.safety", positive=True),
        ),
        engine=EngineParams(
            event_cap=_as_int(engine.get("event_cap", defaults.engine.event_cap), "engine.event_cap", minimum=1),
            check_bounds=_as_bool(engine.get("check_bounds"), defaults.engine.check_bounds, "engine.check_bounds"),
            event_log=_as_bool(engine.get("event_log"), defaults.engine.event_log, "engine.event_log"),
        ),
        sweep=SweepParams(
            param=_as_choice(sweep.get("param", defaults.sweep.param), "sweep.param", SWEEP_PARAMS),
            values=_as_float_list(sweep.get("values"), "sweep.values", positive=True),
            workers=_as_int(sweep.get("workers", defaults.sweep.workers), "sweep.workers", minimum=1),
        ),
        logging=_parse_logging(data.get("logging", {}) or {}, defaults.logging),
    )


def overrides_from_flags(flags: dict[str, Any]) -> dict:
    """``{"model.delta": 0.3, ...}`` to a nested override mapping; ``None`` values are skipped."""
    out: dict = {}
    for dotted, value in flags.items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        out.setdefault(section, {})[key] = value
    return out


def load_config(path: Path | str | None = None, overrides: dict | None = None) -> RunConfig:
    """Resolve flag > file > preset > built-in defaults into a validated ``RunConfig``."""
    file_data = _load_yaml(Path(path)) if path is not None else {}
    overrides = overrides or {}
    _check_keys(file_data, str(path))
    _check_keys(overrides, "flags")

    scenario = (
        (overrides.get("run", {}) or {}).get("scenario")
        or (file_data.get("run", {}) or {}).get("scenario")
        or RunConfig.scenario
    )
    preset = preset_values(str(scenario).strip())
    merged = _merge(_merge(preset, file_data), overrides)
    merged.setdefault("run", {})
    merged["run"] = dict(merged["run"] or {}, scenario=scenario)

    explicit_times = any(
        "snapshot_times" in (layer.get("run", {}) or {}) for layer in (file_data, overrides)
    )
    cfg = _build(merged, explicit_times)
    logger.info("loaded config source=%s scenario=%s mode=%s", path or "<preset>", cfg.scenario, cfg.mode)
    return cfg


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=False, allow_unicode=True)
