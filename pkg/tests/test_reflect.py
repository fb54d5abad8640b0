from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from modules.analysis import ks_distance
from modules.errors import ConfigError, DomainError
from modules.model import Constant, Domain, InteractionKernel, ModelSpec, MutationKernel, Polynomial
from modules.reflect import ReflectConfig, advance_position, check_gate_spacing, euler_substep, shepp_sample
from modules.state import Individual

UNIT = Domain(0.0, 1.0, 0.0, 1.0)


def _spec(m: float = 0.01, b: float = 0.0) -> ModelSpec:
    return ModelSpec(
        domain=UNIT,
        lam=Constant(1.0),
        mu0=Constant(1.0),
        mu1=Constant(1.0),
        m=Constant(m),
        b=Constant(b),
        mutation=MutationKernel(0.0, 0.1, 0.0, 1.0),
        interaction=InteractionKernel(),
    )


def test_default_gates_sit_a_quarter_in() -> None:
    cfg = ReflectConfig.for_domain(Domain(-1.0, 1.0, 0.0, 1.0), h=0.1)

    assert (cfg.alpha_bar, cfg.beta_bar) == (-0.5, 0.5)


def test_invalid_reflect_settings() -> None:
    with pytest.raises(ConfigError):
        ReflectConfig(h=0.0, alpha_bar=0.2, beta_bar=0.8)
    with pytest.raises(ConfigError):
        ReflectConfig.for_domain(UNIT, h=0.1, alpha_bar=0.6, beta_bar=0.4)
    with pytest.raises(ConfigError):
        ReflectConfig.for_domain(UNIT, h=0.1, alpha_bar=0.0)


def test_gate_spacing_check() -> None:
    cfg = ReflectConfig.for_domain(UNIT, h=0.1)

    assert check_gate_spacing(_spec(m=0.01), cfg)
    assert not check_gate_spacing(_spec(m=1.0), cfg)


@given(
    a=st.floats(-3.0, 3.0),
    b=st.floats(-3.0, 3.0),
    t=st.floats(1e-4, 2.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_shepp_sup_dominates_start_and_end(a, b, t, seed) -> None:
    bm, sup = shepp_sample(a, b, t, np.random.default_rng(seed))

    assert sup >= -1e-12
    assert sup >= a * bm + b * t - 1e-12


def test_shepp_sup_of_brownian_motion_has_half_normal_mean() -> None:
    rng = np.random.default_rng(2024)
    draws = 20000
    sups = np.array([shepp_sample(1.0, 0.0, 1.0, rng)[1] for _ in range(draws)])

    # half-normal: mean sqrt(2/pi), variance 1 - 2/pi
    assert abs(sups.mean() - math.sqrt(2.0 / math.pi)) <= 4.0 * math.sqrt(1.0 - 2.0 / math.pi) / math.sqrt(draws)


def test_shepp_needs_positive_time() -> None:
    with pytest.raises(ValueError):
        shepp_sample(1.0, 0.0, 0.0, np.random.default_rng(0))


@given(
    x0=st.floats(0.0, 1.0),
    m=st.floats(1e-4, 0.5),
    b=st.floats(-2.0, 2.0),
    horizon=st.floats(0.01, 3.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_positions_never_leave_the_domain(x0, m, b, horizon, seed) -> None:
    spec = _spec(m=m, b=b)
    cfg = ReflectConfig.for_domain(UNIT, h=0.05)
    ind = Individual(x0, 0.5, 0.0, 0, np.random.default_rng(seed))

    advance_position(ind, spec, horizon, cfg)

    assert 0.0 <= ind.x <= 1.0
    assert ind.t_sync == horizon


def test_drift_only_motion_counts_substeps_exactly() -> None:
    spec = _spec(m=0.0, b=0.1)
    cfg = ReflectConfig.for_domain(UNIT, h=0.1)
    ind = Individual(0.5, 0.5, 0.0, 0, np.random.default_rng(0))

    advance_position(ind, spec, 1.25, cfg)

    assert ind.x == pytest.approx(0.5 + 0.1 * 1.25)


def test_strong_drift_is_held_at_the_wall() -> None:
    spec = _spec(m=0.001, b=-1.0)
    cfg = ReflectConfig.for_domain(UNIT, h=0.01)
    ind = Individual(0.5, 0.5, 0.0, 0, np.random.default_rng(3))

    advance_position(ind, spec, 5.0, cfg)

    assert 0.0 <= ind.x < 0.05


def test_same_stream_gives_same_path() -> None:
    spec = _spec(m=0.05, b=0.2)
    cfg = ReflectConfig.for_domain(UNIT, h=0.1)
    a = advance_position(Individual(0.1, 0.5, 0.0, 0, np.random.default_rng(9)), spec, 2.0, cfg)
    b = advance_position(Individual(0.1, 0.5, 0.0, 0, np.random.default_rng(9)), spec, 2.0, cfg)

    assert a.x == b.x


def test_advance_guards() -> None:
    spec = _spec()
    cfg = ReflectConfig.for_domain(UNIT, h=0.1)
    ind = Individual(0.5, 0.5, 1.0, 0, np.random.default_rng(0))

    assert advance_position(ind, spec, 1.0, cfg).x == 0.5
    with pytest.raises(ValueError):
        advance_position(ind, spec, 0.5, cfg)
    with pytest.raises(ValueError):
        advance_position(Individual(0.5, 0.5, 0.0, 0, None), spec, 1.0, cfg)


def test_euler_substep_guards() -> None:
    spec = _spec()
    cfg = ReflectConfig.for_domain(UNIT, h=0.1)
    rng = np.random.default_rng(0)

    with pytest.raises(DomainError):
        euler_substep(1.5, 0.5, spec, cfg, 0.1, rng)
    with pytest.raises(ValueError):
        euler_substep(0.5, 0.5, spec, cfg, 0.2, rng)
    assert 0.0 <= euler_substep(0.01, 0.5, spec, cfg, 0.1, rng) <= 1.0


def test_trait_dependent_diffusion_is_read_per_individual() -> None:
    spec = _spec().replace(m=Polynomial("u", (0.0, 1.0)))
    cfg = ReflectConfig.for_domain(UNIT, h=0.1)
    frozen = Individual(0.5, 0.0, 0.0, 0, np.random.default_rng(1))

    advance_position(frozen, spec, 1.0, cfg)

    assert frozen.x == 0.5


def test_free_motion_has_variance_two_m_t() -> None:
    spec = _spec(m=0.01)
    cfg = ReflectConfig.for_domain(UNIT, h=0.1)
    rng = np.random.default_rng(17)
    draws, horizon = 20000, 0.3

    xs = np.array([
        advance_position(Individual(0.5, 0.5, 0.0, i, None), spec, horizon, cfg, rng).x for i in range(draws)
    ])

    variance = 2.0 * 0.01 * horizon
    assert abs(xs.mean() - 0.5) <= 4.0 * math.sqrt(variance / draws)
    assert abs(xs.var(ddof=1) - variance) <= 4.0 * variance * math.sqrt(2.0 / draws)


def test_reflected_motion_forgets_its_start() -> None:
    """Long runs of reflected Brownian motion spread uniformly over the box."""
    spec = _spec(m=0.05)
    cfg = ReflectConfig.for_domain(UNIT, h=0.05)
    rng = np.random.default_rng(23)
    draws = 2000

    xs = [advance_position(Individual(0.9, 0.5, 0.0, i, None), spec, 10.0, cfg, rng).x for i in range(draws)]

    assert ks_distance(xs, stats.uniform().cdf) <= 1.95 / math.sqrt(draws)


def test_euler_bias_shrinks_with_the_substep() -> None:
    # drift 0.5 - x: the exact mean is 0.5 - 0.2 e^-t, one Euler substep of length h scales it by 1 - h
    spec = _spec(m=0.002).replace(b=Polynomial("x", (0.5, -1.0)))
    rng = np.random.default_rng(29)
    draws, horizon = 4000, 1.0
    exact = 0.5 - 0.2 * math.exp(-horizon)

    def bias(h: float) -> float:
        cfg = ReflectConfig.for_domain(UNIT, h=h)
        xs = [advance_position(Individual(0.3, 0.5, 0.0, i, None), spec, horizon, cfg, rng).x for i in range(draws)]
        return abs(float(np.mean(xs)) - exact)

    errors = [bias(h) for h in (0.5, 0.25, 0.125)]

    assert errors[0] > errors[1] > errors[2]
    assert errors[0] == pytest.approx(0.2 * (math.exp(-horizon) - 0.25), abs=0.003)
    assert errors[2] < 0.35 * errors[0]
