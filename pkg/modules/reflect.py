"""Reflected diffusion of positions.

Euler scheme with boundary corrections: inside ``(alpha_bar, beta_bar)`` a
substep is a plain Euler step; closer to a wall the step adds the push
``max(0, S - distance)`` where ``S`` is the running maximum of the frozen-
coefficient Brownian path towards that wall, sampled jointly with the
endpoint by Shepp's construction.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .model import Domain, ModelSpec
from .state import Individual

logger = logging.getLogger(__name__)

DEFAULT_GATE_FRACTION = 0.25


@dataclass(frozen=True)
class ReflectConfig:
    h: float
    alpha_bar: float
    beta_bar: float

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ConfigError(f"Euler substep h must be positive (got {self.h})")
        if not self.alpha_bar < self.beta_bar:
            raise ConfigError(f"reflection gates need alpha_bar < beta_bar (got {self.alpha_bar}, {self.beta_bar})")

    @classmethod
    def for_domain(
        cls,
        domain: Domain,
        h: float,
        alpha_bar: float | None = None,
        beta_bar: float | None = None,
    ) -> ReflectConfig:
        span = domain.length
        a_bar = domain.x_min + DEFAULT_GATE_FRACTION * span if alpha_bar is None else float(alpha_bar)
        b_bar = domain.x_max - DEFAULT_GATE_FRACTION * span if beta_bar is None else float(beta_bar)
        if not domain.x_min < a_bar < b_bar < domain.x_max:
            raise ConfigError(
                f"reflection gates must satisfy x_min < alpha_bar < beta_bar < x_max "
                f"(got {a_bar}, {b_bar} in [{domain.x_min}, {domain.x_max}])"
            )
        return cls(h=float(h), alpha_bar=a_bar, beta_bar=b_bar)


def check_gate_spacing(spec: ModelSpec, cfg: ReflectConfig) -> bool:
    """Both pushes must never be needed in one substep: 6 sqrt(2 m* h) < beta_bar - alpha_bar."""
    reach = 6.0 * math.sqrt(2.0 * spec.bounds.m_star * cfg.h)
    if reach >= cfg.beta_bar - cfg.alpha_bar:
        logger.warning(
            "Euler substep h=%g too coarse for the reflection gates: 6*sqrt(2 m* h)=%g >= %g",
            cfg.h,
            reach,
            cfg.beta_bar - cfg.alpha_bar,
        )
        return False
    return True


def shepp_sample(a: float, b: float, t: float, rng: np.random.Generator) -> tuple[float, float]:
    """Joint draw of (B_t, sup_{s<=t} (a B_s + b s))."""
    if not t > 0:
        raise ValueError(f"shepp_sample needs t > 0 (got {t})")
    bm = math.sqrt(t) * rng.standard_normal()
    v = 2.0 * t * rng.standard_exponential()
    return bm, _shepp_sup(a, b, t, bm, v)


def _shepp_sup(a: float, b: float, t: float, bm: float, v: float) -> float:
    end = a * bm + b * t
    return 0.5 * (end + math.sqrt(a * a * v + end * end))


def _substep(
    x: float,
    sigma: float,
    drift: float,
    dt: float,
    rng: np.random.Generator,
    x_min: float,
    x_max: float,
    alpha_bar: float,
    beta_bar: float,
) -> float:
    bm = math.sqrt(dt) * rng.standard_normal()
    x_new = x + drift * dt + sigma * bm
    if x < alpha_bar:
        v = 2.0 * dt * rng.standard_exponential()
        sup_low = _shepp_sup(-sigma, -drift, dt, bm, v)
        push = sup_low - (x - x_min)
        if push > 0.0:
            x_new += push
    elif x > beta_bar:
        v = 2.0 * dt * rng.standard_exponential()
        sup_up = _shepp_sup(sigma, drift, dt, bm, v)
        push = sup_up + (x - x_max)
        if push > 0.0:
            x_new -= push
    if x_new < x_min:
        return x_min
    if x_new > x_max:
        return x_max
    return x_new


def euler_substep(
    x: float,
    u: float,
    spec: ModelSpec,
    cfg: ReflectConfig,
    dt: float,
    rng: np.random.Generator,
) -> float:
    domain = spec.domain
    if not domain.contains_x(x):
        raise DomainError(f"position {x} outside domain [{domain.x_min}, {domain.x_max}]")
    if not 0.0 < dt <= cfg.h * (1.0 + 1e-12):
        raise ValueError(f"substep dt={dt} must lie in (0, h={cfg.h}]")
    sigma = math.sqrt(2.0 * spec.m.scalar(x, u, 0.0))
    drift = spec.b.scalar(x, u, 0.0)
    return _substep(x, sigma, drift, dt, rng, domain.x_min, domain.x_max, cfg.alpha_bar, cfg.beta_bar)


def advance_position(
    ind: Individual,
    spec: ModelSpec,
    t_target: float,
    cfg: ReflectConfig,
    rng: np.random.Generator | None = None,
) -> Individual:
    """Move ``ind`` from its sync time to ``t_target`` (updated in place and returned)."""
    elapsed = t_target - ind.t_sync
    if elapsed < 0.0:
        raise ValueError(f"cannot advance backwards (t_sync={ind.t_sync}, t_target={t_target})")
    if elapsed == 0.0:
        return ind
    rng = rng if rng is not None else ind.stream
    if rng is None:
        raise ValueError("individual has no random stream and none was supplied")
    domain = spec.domain
    m_fn = spec.m.scalar
    b_fn = spec.b.scalar
    h = cfg.h
    x_min = domain.x_min
    x_max = domain.x_max
    a_bar = cfg.alpha_bar
    b_bar = cfg.beta_bar
    u = ind.u
    x = ind.x
    n_full = int(math.ceil(elapsed / h - 1e-9)) - 1
    last = elapsed - n_full * h
    for _ in range(n_full):
        x = _substep(x, math.sqrt(2.0 * m_fn(x, u, 0.0)), b_fn(x, u, 0.0), h, rng, x_min, x_max, a_bar, b_bar)
    if last > 0.0:
        x = _substep(x, math.sqrt(2.0 * m_fn(x, u, 0.0)), b_fn(x, u, 0.0), last, rng, x_min, x_max, a_bar, b_bar)
    ind.x = x
    ind.t_sync = t_target
    return ind
