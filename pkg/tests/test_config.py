from __future__ import annotations

from pathlib import Path

import pytest

import modules.config as config_module
from modules.error_codes import CONFIG_FILE_NOT_FOUND, CONFIG_INVALID_VALUE, CONFIG_PARSE_FAILED, CONFIG_UNKNOWN_KEY
from modules.errors import ConfigError
from modules.scenarios import SCENARIOS

REPO_ROOT = Path(__file__).resolve().parents[1]


def _write(tmp_path: Path, text: str, name: str = "run.yaml") -> Path:
    cfg_file = tmp_path / name
    cfg_file.write_text(text.strip() + "\n", encoding="utf-8")
    return cfg_file


def test_shipped_example_config_loads() -> None:
    cfg = config_module.load_config(REPO_ROOT / config_module.RUN_CONFIG_PATH)

    assert cfg.scenario == "example1"
    assert cfg.N == 3000
    assert cfg.delta == 0.3
    assert cfg.snapshot_times == (0.0, 1.0, 5.0, 10.0, 20.0)
    assert cfg.sweep.values == (0.2, 0.1, 0.05)


def test_preset_fills_scenario_parameters() -> None:
    cfg = config_module.load_config(None, {"run": {"scenario": "example3"}})

    assert cfg.N == 100
    assert cfg.N_scale == 100
    assert cfg.delta == 0.1
    assert cfg.model.s == 0.03
    assert cfg.model.m == 0.003
    assert cfg.initial.kind == "trait_ladder"
    assert cfg.t_end == 50.0
    assert cfg.snapshot_times == (0.0, 5.0, 10.0, 20.0, 50.0)


def test_preset_snapshot_grid_is_cut_at_horizon() -> None:
    cfg = config_module.load_config(None, {"run": {"scenario": "example1", "t_end": 20}})

    assert cfg.snapshot_times == (0.0, 1.0, 3.0, 10.0, 20.0)


def test_explicit_snapshot_times_always_record_horizon(tmp_path) -> None:
    cfg_file = _write(tmp_path, """
run:
  t_end: 5
  snapshot_times: [0, 1, 2]
""")
    cfg = config_module.load_config(cfg_file)

    assert cfg.snapshot_times == (0.0, 1.0, 2.0, 5.0)


def test_explicit_snapshot_times_beyond_horizon_are_rejected(tmp_path) -> None:
    cfg_file = _write(tmp_path, """
run:
  t_end: 5
  snapshot_times: [0, 10]
""")
    with pytest.raises(ConfigError, match="snapshot_times"):
        config_module.load_config(cfg_file)


def test_flags_override_file_and_file_overrides_preset(tmp_path) -> None:
    cfg_file = _write(tmp_path, """
run:
  scenario: example2_neutral
model:
  delta: 1.1
  rho: 0.5
""")
    cfg = config_module.load_config(cfg_file, {"model": {"delta": 0.05}})

    assert cfg.delta == 0.05
    assert cfg.model.rho == 0.5
    assert cfg.N == 1000


def test_flag_scenario_wins_over_file_scenario(tmp_path) -> None:
    cfg_file = _write(tmp_path, """
run:
  scenario: example1
""")
    cfg = config_module.load_config(cfg_file, {"run": {"scenario": "example3"}})

    assert cfg.scenario == "example3"
    assert cfg.N == 100


def test_unknown_key_is_rejected_with_its_name(tmp_path) -> None:
    cfg_file = _write(tmp_path, """
model:
  sigma: 0.1
""")
    with pytest.raises(ConfigError, match="model.sigma") as exc_info:
        config_module.load_config(cfg_file)
    assert exc_info.value.code == CONFIG_UNKNOWN_KEY


def test_unknown_section_is_rejected(tmp_path) -> None:
    cfg_file = _write(tmp_path, "server:\n  port: 80")

    with pytest.raises(ConfigError) as exc_info:
        config_module.load_config(cfg_file)
    assert exc_info.value.code == CONFIG_UNKNOWN_KEY


def test_unknown_nested_key_is_rejected(tmp_path) -> None:
    cfg_file = _write(tmp_path, """
logging:
  run_log:
    rotate: daily
""")
    with pytest.raises(ConfigError, match="logging.run_log.rotate"):
        config_module.load_config(cfg_file)


def test_missing_file_is_an_error(tmp_path) -> None:
    with pytest.raises(ConfigError) as exc_info:
        config_module.load_config(tmp_path / "absent.yaml")
    assert exc_info.value.code == CONFIG_FILE_NOT_FOUND
    assert exc_info.value.exit_status == 2


def test_invalid_yaml_is_an_error(tmp_path) -> None:
    cfg_file = tmp_path / "invalid.yaml"
    cfg_file.write_text("invalid: [\n", encoding="utf-8")

    with pytest.raises(ConfigError) as exc_info:
        config_module.load_config(cfg_file)
    assert exc_info.value.code == CONFIG_PARSE_FAILED


def test_non_mapping_yaml_is_an_error(tmp_path) -> None:
    cfg_file = _write(tmp_path, "- just\n- a list")

    with pytest.raises(ConfigError) as exc_info:
        config_module.load_config(cfg_file)
    assert exc_info.value.code == CONFIG_PARSE_FAILED


def test_string_values_are_coerced(tmp_path) -> None:
    cfg_file = _write(tmp_path, """
engine:
  event_cap: "1e9"
  check_bounds: "false"
  event_log: "true"
model:
  delta: "0.25"
""")
    cfg = config_module.load_config(cfg_file)

    assert cfg.engine.event_cap == 10**9
    assert cfg.engine.check_bounds is False
    assert cfg.engine.event_log is True
    assert cfg.delta == 0.25


@pytest.mark.parametrize(
    "section, key, value",
    [
        ("model", "delta", -0.1),
        ("model", "N", 0),
        ("model", "N", 2.5),
        ("run", "t_end", 0),
        ("run", "mode", "ode"),
        ("pde", "nx", 2),
        ("engine", "check_bounds", "sometimes"),
        ("logging", "level", "LOUD"),
    ],
)
def test_invalid_values_name_their_key(section, key, value) -> None:
    with pytest.raises(ConfigError, match=f"{section}.{key}") as exc_info:
        config_module.load_config(None, {section: {key: value}})
    assert exc_info.value.code == CONFIG_INVALID_VALUE


@pytest.mark.parametrize("scenario", [s for s in SCENARIOS if s != "custom"])
def test_dump_then_load_reproduces_config(tmp_path, scenario) -> None:
    cfg = config_module.load_config(None, {"run": {"scenario": scenario}})
    cfg_file = tmp_path / "dumped.yaml"
    cfg_file.write_text(config_module.dump_config(cfg), encoding="utf-8")

    assert config_module.load_config(cfg_file) == cfg


def test_custom_rates_round_trip(tmp_path) -> None:
    cfg_file = _write(tmp_path, """
run:
  scenario: custom
  mode: ibm_general
model:
  domain: {x_min: 0, x_max: 2, u_min: 0, u_max: 1}
  rates:
    lambda: 1.5
    mu_general: {kind: polynomial, variable: r, coeffs: [1, 0, 1]}
  mu_lipschitz: 4
""")
    cfg = config_module.load_config(cfg_file)
    dumped = tmp_path / "dumped.yaml"
    dumped.write_text(config_module.dump_config(cfg), encoding="utf-8")

    assert cfg.model.rates["lambda"] == {"kind": "constant", "value": 1.5}
    assert cfg.model.rates["mu_general"]["coeffs"] == [1.0, 0.0, 1.0]
    assert config_module.load_config(dumped) == cfg


def test_malformed_rate_expression_is_rejected() -> None:
    with pytest.raises(ConfigError, match="model.rates.lambda"):
        config_module.load_config(None, {"model": {"rates": {"lambda": {"kind": "spline"}}}})


def test_overrides_from_flags_skips_unset_flags() -> None:
    overrides = config_module.overrides_from_flags(
        {"model.delta": 0.1, "run.seed": None, "run.mode": "pde_local", "sweep.values": "0.2,0.1"}
    )

    assert overrides == {"model": {"delta": 0.1}, "run": {"mode": "pde_local"}, "sweep": {"values": "0.2,0.1"}}
    cfg = config_module.load_config(None, overrides)
    assert cfg.sweep.values == (0.2, 0.1)
    assert cfg.pde_mode == "local"
    assert cfg.is_pde


def test_default_path_constant_can_be_monkeypatched(tmp_path, monkeypatch) -> None:
    cfg_file = _write(tmp_path, "run:\n  seed: 7")
    monkeypatch.setattr(config_module, "RUN_CONFIG_PATH", Path(cfg_file))

    cfg = config_module.load_config(config_module.RUN_CONFIG_PATH)

    assert cfg.seed == 7
