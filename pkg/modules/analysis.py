"""Metrics on populations and densities, and the generator diagnostics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .engine import EngineOptions, run
from .error_codes import NUMERIC_GRID_MISMATCH
from .errors import ConfigError, NumericalError
from .model import Domain, ModelSpec, death_rate, interaction_field
from .pde import DensityGrid
from .reflect import ReflectConfig
from .rng import StreamFactory
from .state import Population, Snapshot

logger = logging.getLogger(__name__)

HISTOGRAM_NORMALIZATIONS = ("counts", "density")
DEFAULT_SMOOTHING_WINDOW = 5
DEFAULT_MIN_PROMINENCE = 0.2


def _points(obj) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(obj, Population):
        return obj.positions(), obj.traits()
    if isinstance(obj, Snapshot):
        return np.asarray(obj.x, dtype=float), np.asarray(obj.u, dtype=float)
    x, u = obj
    return np.asarray(x, dtype=float), np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# Histograms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Histogram2D:
    edges_x: np.ndarray
    edges_u: np.ndarray
    counts: np.ndarray
    normalization: str = "counts"

    def __post_init__(self) -> None:
        if self.normalization not in HISTOGRAM_NORMALIZATIONS:
            raise ConfigError(f"histogram normalization must be one of {HISTOGRAM_NORMALIZATIONS}")
        if self.counts.shape != (len(self.edges_x) - 1, len(self.edges_u) - 1):
            raise ConfigError("histogram counts do not match its edges")

    @property
    def centers_x(self) -> np.ndarray:
        return 0.5 * (self.edges_x[1:] + self.edges_x[:-1])

    @property
    def centers_u(self) -> np.ndarray:
        return 0.5 * (self.edges_u[1:] + self.edges_u[:-1])

    def cell_areas(self) -> np.ndarray:
        return np.outer(np.diff(self.edges_x), np.diff(self.edges_u))

    def total(self) -> float:
        """Number of individuals (counts) or integrated density."""
        if self.normalization == "counts":
            return float(self.counts.sum())
        return float((self.counts * self.cell_areas()).sum())

    def same_bins(self, other: Histogram2D) -> bool:
        return (
            self.counts.shape == other.counts.shape
            and np.array_equal(self.edges_x, other.edges_x)
            and np.array_equal(self.edges_u, other.edges_u)
        )


def histogram(
    pop,
    domain: Domain,
    nx: int,
    nu: int,
    normalization: str = "counts",
    n_scale: float = 1.0,
) -> Histogram2D:
    """Equal-width bins over the boxes; ``density`` divides by N_scale * dx * du."""
    if nx < 1 or nu < 1:
        raise ConfigError("histogram needs at least one bin per axis")
    x, u = _points(pop)
    edges_x = np.linspace(domain.x_min, domain.x_max, nx + 1)
    edges_u = np.linspace(domain.u_min, domain.u_max, nu + 1)
    counts, _, _ = np.histogram2d(x, u, bins=(edges_x, edges_u))
    if normalization == "density":
        counts = counts / (n_scale * (domain.length / nx) * (domain.trait_length / nu))
    return Histogram2D(edges_x=edges_x, edges_u=edges_u, counts=counts, normalization=normalization)


def density_on_grid(pop, like: DensityGrid, n_scale: float = 1.0) -> DensityGrid:
    """Empirical density on the nodes of ``like``: one bin per node, half bins at the walls.

    Dividing by the trapezoid cell volumes makes ``mass()`` equal N / N_scale,
    so the result compares directly with a solver snapshot.
    """
    x, u = _points(pop)
    xs, us = like.x, like.u
    edges_x = np.concatenate(([xs[0]], 0.5 * (xs[1:] + xs[:-1]), [xs[-1]]))
    edges_u = np.concatenate(([us[0]], 0.5 * (us[1:] + us[:-1]), [us[-1]]))
    counts, _, _ = np.histogram2d(x, u, bins=(edges_x, edges_u))
    volumes = np.outer(like.weights_x, like.weights_u)
    return like.with_values(counts / (n_scale * volumes))


def marginal(h: Histogram2D, axis: str) -> tuple[np.ndarray, np.ndarray]:
    if axis == "x":
        return h.centers_x, h.counts.sum(axis=1)
    if axis == "u":
        return h.centers_u, h.counts.sum(axis=0)
    raise ConfigError(f"axis must be 'x' or 'u' (got {axis!r})")


def cluster_peaks(
    h: Histogram2D,
    axis: str = "x",
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW,
    min_prominence: float = DEFAULT_MIN_PROMINENCE,
) -> list[float]:
    """Bin centers of the local maxima of the smoothed marginal above ``min_prominence`` x its maximum."""
    centers, profile = marginal(h, axis)
    return _profile_peaks(centers, profile, smoothing_window, min_prominence)


def grid_peaks(
    g: DensityGrid,
    axis: str = "x",
    smoothing_window: int = 1,
    min_prominence: float = DEFAULT_MIN_PROMINENCE,
) -> list[float]:
    """Node coordinates of the maxima of a solver marginal, as ``cluster_peaks`` finds them in a histogram."""
    if axis == "x":
        return _profile_peaks(g.x, g.column_mass(), smoothing_window, min_prominence)
    if axis == "u":
        return _profile_peaks(g.u, g.weights_x @ g.values, smoothing_window, min_prominence)
    raise ConfigError(f"axis must be 'x' or 'u' (got {axis!r})")


def _profile_peaks(
    centers: np.ndarray, profile: np.ndarray, smoothing_window: int, min_prominence: float
) -> list[float]:
    if smoothing_window > 1:
        profile = uniform_filter1d(profile.astype(float), size=smoothing_window, mode="nearest")
    top = float(profile.max()) if profile.size else 0.0
    if top <= 0.0:
        return []
    # pad below zero so that maxima on the first or last bin count as well
    padded = np.concatenate(([-1.0], profile, [-1.0]))
    idx, _ = find_peaks(padded, height=min_prominence * top)
    return sorted(float(centers[i - 1]) for i in idx)


def peak_spacings(peaks: Sequence[float]) -> list[float]:
    return [b - a for a, b in zip(peaks, peaks[1:])]


def spacings_within(peaks: Sequence[float], delta: float, low: float = 1.0, high: float = 3.0) -> bool:
    """Adjacent peaks sit between low*delta and high*delta apart; fewer than two peaks pass trivially."""
    return all(low * delta <= d <= high * delta for d in peak_spacings(peaks))


def l1_distance(a, b) -> float:
    """sum |a - b| over matching grids (trapezoid weights) or matching density histograms."""
    if isinstance(a, DensityGrid) and isinstance(b, DensityGrid):
        a.require_same_grid(b)
        return float(a.weights_x @ np.abs(a.values - b.values) @ a.weights_u)
    if isinstance(a, Histogram2D) and isinstance(b, Histogram2D):
        if not a.same_bins(b):
            raise NumericalError("histograms use different bins", code=NUMERIC_GRID_MISMATCH)
        if a.normalization != "density" or b.normalization != "density":
            raise NumericalError("l1_distance compares density histograms", code=NUMERIC_GRID_MISMATCH)
        return float((np.abs(a.counts - b.counts) * a.cell_areas()).sum())
    raise NumericalError(
        f"cannot compare {type(a).__name__} with {type(b).__name__}", code=NUMERIC_GRID_MISMATCH
    )


def ks_distance(sample, cdf: Callable) -> float:
    return float(stats.kstest(np.asarray(sample, dtype=float), cdf).statistic)


def mass_bound_ok(trace: Sequence[tuple[float, float]], mass0: float, rate: float, eps: float = 1e-3) -> bool:
    """Every (t, mass) of ``trace`` stays below mass0 * exp(rate * t) * (1 + eps)."""
    for t, mass in trace:
        if mass > mass0 * math.exp(rate * t) * (1.0 + eps):
            logger.warning("mass %g at t=%g breaks the growth bound %g", mass, t, mass0 * math.exp(rate * t))
            return False
    return True


# ---------------------------------------------------------------------------
# Generator diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeFunction:
    """f(x, u) with its x derivatives; ``neumann`` marks a vanishing normal derivative."""

    name: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dx: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dxx: Callable[[np.ndarray, np.ndarray], np.ndarray]
    neumann: bool = True


def _zeros(x, u):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(u)).shape)


def _ones(x, u):
    return np.ones(np.broadcast(np.asarray(x), np.asarray(u)).shape)


def probe_functions(domain: Domain) -> dict[str, ProbeFunction]:
    """1, x, u, x^2 and the first reflected cosine mode cos(pi (x - x_min) / L)."""
    k = math.pi / domain.length
    lo = domain.x_min
    return {
        "one": ProbeFunction("one", _ones, _zeros, _zeros),
        "x": ProbeFunction("x", lambda x, u: np.asarray(x, dtype=float) + _zeros(x, u), _ones, _zeros, neumann=False),
        "u": ProbeFunction("u", lambda x, u: np.asarray(u, dtype=float) + _zeros(x, u), _zeros, _zeros),
        "x2": ProbeFunction(
            "x2",
            lambda x, u: np.asarray(x, dtype=float) ** 2 + _zeros(x, u),
            lambda x, u: 2.0 * np.asarray(x, dtype=float) + _zeros(x, u),
            lambda x, u: 2.0 * _ones(x, u),
            neumann=False,
        ),
        "cos": ProbeFunction(
            "cos",
            lambda x, u: np.cos(k * (np.asarray(x, dtype=float) - lo)) + _zeros(x, u),
            lambda x, u: -k * np.sin(k * (np.asarray(x, dtype=float) - lo)) + _zeros(x, u),
            lambda x, u: -k * k * np.cos(k * (np.asarray(x, dtype=float) - lo)) + _zeros(x, u),
        ),
    }


@dataclass(frozen=True)
class GeneratorCheck:
    function: str
    empirical_drift: float
    predicted_drift: float
    drift_se: float
    empirical_qv_rate: float
    predicted_qv_rate: float
    qv_se: float
    replicates: int
    dt: float
    dt_flagged: bool = False
    z_scores: dict = field(default_factory=dict)

    def passed(self, threshold: float = 4.0) -> bool:
        return all(abs(z) < threshold for z in self.z_scores.values())

    def to_record(self) -> dict:
        return {
            "function": self.function,
            "empirical_drift": self.empirical_drift,
            "predicted_drift": self.predicted_drift,
            "drift_se": self.drift_se,
            "empirical_qv_rate": self.empirical_qv_rate,
            "predicted_qv_rate": self.predicted_qv_rate,
            "qv_se": self.qv_se,
            "replicates": self.replicates,
            "dt": self.dt,
            "dt_flagged": self.dt_flagged,
            "z_scores": dict(self.z_scores),
        }


def _z(empirical: float, predicted: float, se: float) -> float:
    if se > 0:
        return (empirical - predicted) / se
    return 0.0 if empirical == predicted else math.copysign(math.inf, empirical - predicted)


def _mutation_moments(spec: ModelSpec, f: ProbeFunction, x: float, u: float) -> tuple[float, float]:
    """E f(x, V) and E f(x, V)^2 for V ~ k_s(u, .), by quadrature."""
    mk = spec.mutation
    lo, hi = mk.u_min, mk.u_max
    points = (min(max(u, lo), hi),)

    def first(v: float) -> float:
        return float(f.value(x, v)) * mk.density(u, v)

    def second(v: float) -> float:
        return float(f.value(x, v)) ** 2 * mk.density(u, v)

    m1, _ = integrate.quad(first, lo, hi, points=points, limit=200)
    m2, _ = integrate.quad(second, lo, hi, points=points, limit=200)
    return m1, m2


def predicted_rates(state: Population, spec: ModelSpec, f: ProbeFunction) -> tuple[float, float, float]:
    """(drift, quadratic variation rate, total event rate) of <nu, f> / N_scale at the frozen state."""
    k = spec.n_scale
    drift = 0.0
    qv = 0.0
    events = 0.0
    for ind in state.individuals:
        x, u = ind.x, ind.u
        fv = float(f.value(x, u))
        fx = float(f.dx(x, u))
        m = spec.m.scalar(x, u, 0.0)
        b = spec.b.scalar(x, u, 0.0)
        lam = spec.lam.scalar(x, u, 0.0)
        mu = death_rate(x, u, interaction_field(state, x, u, spec), spec)
        rate = spec.mutation.rate
        mut1, mut2 = _mutation_moments(spec, f, x, u) if rate > 0 else (0.0, 0.0)
        drift += m * float(f.dxx(x, u)) + b * fx + (lam - mu) * fv + rate * mut1
        qv += 2.0 * m * fx * fx + (lam + mu) * fv * fv + rate * mut2
        events += lam + mu + rate
    return drift / k, qv / (k * k), events


def generator_check(
    state: Population,
    spec: ModelSpec,
    f: ProbeFunction,
    dt: float,
    replicates: int,
    streams: StreamFactory,
    cfg: ReflectConfig,
    mode: str | None = None,
) -> GeneratorCheck:
    """Compare the one-step mean and variance of <nu, f> / N_scale with the generator at ``state``.

    Every replicate restarts from the frozen state with its own child seed.
    """
    if not dt > 0:
        raise ConfigError(f"generator_check needs dt > 0 (got {dt})")
    if replicates < 2:
        raise ConfigError("generator_check needs at least two replicates")
    mode = mode or spec.mode
    if not f.neumann:
        logger.info("test function %s has a nonzero normal derivative; boundary reflection is not modelled", f.name)
    frozen = Population.from_points([(ind.x, ind.u) for ind in state.individuals], domain=spec.domain)
    k = spec.n_scale
    base = float(np.sum(f.value(frozen.positions(), frozen.traits()))) / k if frozen.size else 0.0
    predicted_drift, predicted_qv, event_rate = predicted_rates(frozen, spec, f)
    dt_flagged = event_rate * dt > 0.1 * max(frozen.size, 1)
    if dt_flagged:
        logger.warning("generator_check dt=%g: %.3g expected events per replicate bias the drift", dt, event_rate * dt)

    increments = np.empty(replicates)
    options = EngineOptions()
    for r in range(replicates):
        traj = run(frozen, spec, dt, [dt], cfg, mode=mode, streams=streams.spawn(r), options=options)
        snap = traj.snapshots[-1]
        value = float(np.sum(f.value(snap.x, snap.u))) / k if snap.size else 0.0
        increments[r] = value - base

    mean = float(increments.mean())
    centered = increments - mean
    var = float(np.mean(centered**2)) * replicates / (replicates - 1)
    m4 = float(np.mean(centered**4))
    empirical_drift = mean / dt
    drift_se = math.sqrt(var / replicates) / dt
    empirical_qv = var / dt
    qv_se = math.sqrt(max(m4 - var * var, 0.0) / replicates) / dt
    z_scores = {
        "drift": _z(empirical_drift, predicted_drift, drift_se),
        "qv": _z(empirical_qv, predicted_qv, qv_se),
    }
    logger.info(
        "generator_check f=%s drift %.4g vs %.4g (z=%.2f), qv %.4g vs %.4g (z=%.2f)",
        f.name, empirical_drift, predicted_drift, z_scores["drift"], empirical_qv, predicted_qv, z_scores["qv"],
    )
    return GeneratorCheck(
        function=f.name,
        empirical_drift=empirical_drift,
        predicted_drift=predicted_drift,
        drift_se=drift_se,
        empirical_qv_rate=empirical_qv,
        predicted_qv_rate=predicted_qv,
        qv_se=qv_se,
        replicates=replicates,
        dt=dt,
        dt_flagged=dt_flagged,
        z_scores=z_scores,
    )
