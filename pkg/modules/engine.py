"""Exact event-driven simulation of the population.

Events are proposed at the constant majorant rate ``C_delta * N * (N/K + 1)``
and thinned: a uniformly chosen individual dies, clones itself, gives birth
to a mutant or nothing happens, according to which band a uniform threshold
falls in. Two loops share this scheme:

* ``general`` evaluates the full competition field of the actor, so every
  position is synchronized before each event (O(N) per event);
* ``logistic`` specializes to mu = mu0 + mu1 * field / K and resolves the
  competition term with one random partner, touching at most two
  individuals per event.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .error_codes import NUMERIC_SAMPLER_STALLED
from .errors import ConfigError, DomainError, NumericalError, RateBoundError, RunawayPopulationError
from .model import (
    ModelSpec,
    MutationKernel,
    check_event_bound,
    death_rate,
    interaction_contributions,
    interaction_field,
    pair_weight_fn,
)
from .reflect import ReflectConfig, advance_position, check_gate_spacing
from .rng import StreamFactory
from .state import EventOutcome, Population, Snapshot, Trajectory

logger = logging.getLogger(__name__)

ENGINE_MODES = ("general", "logistic")
DEFAULT_EVENT_CAP = 10**9
MAX_MUTANT_REJECTIONS = 10**6
_BAND_TOL = 1e-12


@dataclass(frozen=True)
class EngineOptions:
    event_cap: int = DEFAULT_EVENT_CAP
    check_bounds: bool = False
    record_events: bool = False

    def __post_init__(self) -> None:
        if self.event_cap < 1:
            raise ConfigError(f"event_cap must be at least 1 (got {self.event_cap})")


def sample_event_time(n: int, C_delta: float, rng, n_scale: float = 1.0) -> float:
    """Waiting time to the next proposal: Exp(C_delta) / (n (n/K + 1))."""
    if n < 1:
        raise ValueError("no events are proposed for an empty population")
    if not C_delta > 0:
        raise ValueError(f"C_delta must be positive (got {C_delta})")
    return rng.exponential() / (C_delta * n * (n / n_scale + 1.0))


def sample_mutant_trait(u: float, mk: MutationKernel, rng) -> float:
    """Normal(u, s^2) conditioned on the trait box, by rejection."""
    if not mk.u_min <= u <= mk.u_max:
        raise DomainError(f"parent trait {u} outside trait box [{mk.u_min}, {mk.u_max}]")
    lo = mk.u_min
    hi = mk.u_max
    s = mk.s
    for _ in range(MAX_MUTANT_REJECTIONS):
        v = rng.normal(u, s)
        if lo <= v <= hi:
            return float(v)
    raise NumericalError(
        f"mutant trait sampler rejected {MAX_MUTANT_REJECTIONS} draws around u={u}",
        code=NUMERIC_SAMPLER_STALLED,
    )


def _choose(n: int, rng) -> int:
    i = int(rng.uniform() * n)
    return i if i < n else n - 1


def _band_overflow(total: float, where: str) -> RateBoundError:
    return RateBoundError(f"event thresholds reach {total:.6g} > 1 ({where}); C_delta is too small")


def execute_event_general(pop: Population, spec: ModelSpec, rng) -> tuple[Population, EventOutcome]:
    """One thinned event with the full competition field; positions must already sit at ``pop.t``."""
    n = pop.size
    if n == 0:
        raise ValueError("execute_event_general needs a nonempty population")
    i = _choose(n, rng)
    theta = rng.uniform()
    actor = pop.individuals[i]
    x, u = actor.x, actor.u
    denom = spec.C_delta * (n / spec.n_scale + 1.0)

    terms = interaction_contributions(spec, x, u, pop.positions(), pop.traits())
    field_value = float(terms.sum())
    band = death_rate(x, u, field_value, spec) / denom
    clonal = band + spec.lam.scalar(x, u, 0.0) / denom
    mk = spec.mutation
    reachable = clonal + (mk.envelope_l1 / denom if mk.rate > 0 else 0.0)
    if reachable > 1.0 + _BAND_TOL:
        raise _band_overflow(reachable, f"individual {actor.serial} at x={x:g}, u={u:g}")

    if theta <= band:
        natural = spec.mu0.scalar(x, u, 0.0) / denom if spec.mu_general is None else band
        if theta <= natural or field_value <= 0.0:
            pop.remove(i)
            return pop, EventOutcome("natural_death", actor.serial)
        # the position inside the competition band picks the partner j with probability term_j / field
        share = (theta - natural) / (band - natural) * field_value
        j = min(int(np.searchsorted(np.cumsum(terms), share, side="left")), n - 1)
        partner = pop.individuals[j].serial
        pop.remove(i)
        return pop, EventOutcome("competition_death", actor.serial, partner=partner)
    if theta <= clonal:
        pop.spawn(x, u)
        return pop, EventOutcome("clonal_birth", actor.serial)
    if mk.rate > 0:
        # the candidate trait is only drawn once the mutation band can be hit
        env = mk.envelope
        v = env.sample(rng.uniform(), rng.uniform())
        height = env.value(v)
        if height > 0:
            mutant = clonal + mk(u, v) * env.l1 / (height * denom)
            if theta <= mutant:
                pop.spawn(x, v)
                return pop, EventOutcome("mutant_birth", actor.serial, mutant_trait=v)
    return pop, EventOutcome("no_op", actor.serial)


def execute_event_logistic(
    pop: Population,
    spec: ModelSpec,
    rng,
    cfg: ReflectConfig,
    weight=None,
) -> tuple[Population, EventOutcome]:
    """One thinned event under mu0 + mu1 * field / K, advancing only the actor and its partner.

    ``theta * (N + K)`` below ``N`` picks a partner cell ``j``; the fractional
    part accepts a competition death with probability
    ``mu1 I(x_i - x_j) W(u_i - u_j) / C_delta``. Above ``N`` the remainder,
    rescaled by ``K``, falls in the natural death, clonal and mutant bands.
    """
    if spec.mu_general is not None:
        raise ConfigError("the logistic engine needs a logistic death rate (mu0 + mu1 * r)")
    n = pop.size
    if n == 0:
        raise ValueError("execute_event_logistic needs a nonempty population")
    weight = weight if weight is not None else pair_weight_fn(spec)
    c_delta = spec.C_delta
    k = spec.n_scale
    t = pop.t
    inds = pop.individuals
    i = _choose(n, rng)
    theta = rng.uniform()
    actor = advance_position(inds[i], spec, t, cfg)
    x, u = actor.x, actor.u

    zeta = theta * (n + k)
    if zeta < n:
        j = int(zeta)
        if j >= n:
            j = n - 1
        frac = zeta - j
        partner = inds[j] if j != i else actor
        if partner is not actor:
            advance_position(partner, spec, t, cfg)
        accept = spec.mu1.scalar(x, u, 0.0) * weight(x, u, partner.x, partner.u) / c_delta
        if accept > 1.0 + _BAND_TOL:
            raise _band_overflow(accept, f"competition of {actor.serial} with {partner.serial}")
        if frac < accept:
            pop.remove(i)
            return pop, EventOutcome("competition_death", actor.serial, partner=partner.serial)
        return pop, EventOutcome("no_op", actor.serial)

    r = (zeta - n) / k
    natural = spec.mu0.scalar(x, u, 0.0) / c_delta
    clonal = natural + spec.lam.scalar(x, u, 0.0) / c_delta
    mutant = clonal + spec.mutation.rate / c_delta
    if mutant > 1.0 + _BAND_TOL:
        raise _band_overflow(mutant, f"individual {actor.serial} at x={x:g}, u={u:g}")
    if r <= natural:
        pop.remove(i)
        return pop, EventOutcome("natural_death", actor.serial)
    if r <= clonal:
        pop.spawn(x, u)
        return pop, EventOutcome("clonal_birth", actor.serial)
    if r <= mutant:
        v = sample_mutant_trait(u, spec.mutation, rng)
        pop.spawn(x, v)
        return pop, EventOutcome("mutant_birth", actor.serial, mutant_trait=v)
    return pop, EventOutcome("no_op", actor.serial)


def synchronize(pop: Population, spec: ModelSpec, t: float, cfg: ReflectConfig) -> None:
    for ind in pop.individuals:
        advance_position(ind, spec, t, cfg)


def _validate_times(snapshot_times: Sequence[float], t_end: float) -> list[float]:
    times = [float(t) for t in snapshot_times]
    for a, b in zip(times, times[1:]):
        if not a < b:
            raise ConfigError("snapshot_times must be strictly increasing")
    if times and (times[0] < 0.0 or times[-1] > t_end):
        raise ConfigError(f"snapshot_times must lie in [0, t_end={t_end}]")
    return times


def run(
    pop0: Population,
    spec: ModelSpec,
    t_end: float,
    snapshot_times: Sequence[float],
    cfg: ReflectConfig,
    mode: str = "logistic",
    streams: StreamFactory | None = None,
    options: EngineOptions | None = None,
) -> Trajectory:
    """Simulate from ``pop0`` to ``t_end`` and record synchronized snapshots.

    The individuals of ``pop0`` are rekeyed to ``streams``, so the result only
    depends on the initial state, the model, the configuration and the seed.
    """
    if mode not in ENGINE_MODES:
        raise ConfigError(f"engine mode must be one of {ENGINE_MODES} (got {mode!r})")
    if mode == "logistic" and spec.mu_general is not None:
        raise ConfigError("mode 'logistic' needs mu0/mu1 rates; use mode 'general' for a general death rate")
    if not t_end >= 0:
        raise ConfigError(f"t_end must be nonnegative (got {t_end})")
    options = options or EngineOptions()
    streams = streams if streams is not None else (pop0.streams or StreamFactory(0))
    times = _validate_times(snapshot_times, t_end)
    check_gate_spacing(spec, cfg)

    domain = spec.domain
    for ind in pop0.individuals:
        if not (domain.contains_x(ind.x) and domain.contains_u(ind.u)):
            raise DomainError(f"individual {ind.serial} at ({ind.x}, {ind.u}) lies outside the boxes")

    pop = pop0.copy(streams=streams)
    events = streams.event_stream()
    trajectory = Trajectory(seed=streams.seed, event_log=[] if options.record_events else None)
    trajectory.max_size = pop.size
    c_delta = spec.C_delta
    k = spec.n_scale
    weight = pair_weight_fn(spec)
    logistic = mode == "logistic"
    cap = options.event_cap
    check = options.check_bounds
    log = trajectory.event_log
    next_snap = 0
    t = pop.t
    count = 0

    logger.debug(
        "engine start: mode=%s N0=%d K=%g C_delta=%g t_end=%g snapshots=%d seed=%d",
        mode, pop.size, k, c_delta, t_end, len(times), streams.seed,
    )
    while True:
        n = pop.size
        if n == 0:
            trajectory.extinct_at = t
            break
        t_next = t + sample_event_time(n, c_delta, events, k)
        while next_snap < len(times) and times[next_snap] < t_next:
            synchronize(pop, spec, times[next_snap], cfg)
            trajectory.append(Snapshot.of(pop, times[next_snap]))
            next_snap += 1
        if t_next > t_end:
            break
        t = t_next
        pop.t = t
        if check or not logistic:
            synchronize(pop, spec, t, cfg)
        if check:
            for ind in pop.individuals:
                check_event_bound(spec, ind.x, ind.u, interaction_field(pop, ind.x, ind.u, spec), n)
        if logistic:
            pop, outcome = execute_event_logistic(pop, spec, events, cfg, weight)
        else:
            pop, outcome = execute_event_general(pop, spec, events)
        count += 1
        if pop.size > trajectory.max_size:
            trajectory.max_size = pop.size
        if log is not None:
            log.append((t, outcome))
        if count >= cap:
            raise RunawayPopulationError(f"event cap {cap} reached at t={t:g} with N={pop.size}")

    while next_snap < len(times):
        trajectory.append(Snapshot.empty(times[next_snap]))
        next_snap += 1
    trajectory.event_count = count
    if trajectory.extinct_at is not None:
        logger.debug("population extinct at t=%g after %d events", trajectory.extinct_at, count)
    logger.debug("engine done: events=%d N_end=%d max_N=%d", count, pop.size, trajectory.max_size)
    return trajectory


def throughput(events: int, seconds: float) -> float:
    if seconds <= 0:
        return math.inf
    return events / seconds
