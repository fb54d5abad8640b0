"""Built-in scenarios and initial conditions.

``PRESETS`` holds the parameter values of each scenario in config-file form
(they sit between the built-in defaults and the user's file). The functional
forms of the rates live in the ``_build_*`` functions.
"""
from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np

from .analysis import density_on_grid
from .errors import ConfigError
from .model import (
    Constant,
    Domain,
    Gaussian,
    InteractionKernel,
    ModelSpec,
    MutationKernel,
    Polynomial,
    TraitKernel,
    rate_expr_from_dict,
)
from .pde import DensityGrid
from .rng import StreamFactory
from .state import Population
from .storage import read_grid_csv

if TYPE_CHECKING:
    from .config import RunConfig

logger = logging.getLogger(__name__)

SCENARIOS = ("example1", "example2_neutral", "example2_trait", "example3", "custom")
INITIAL_KINDS = ("point_mass", "trait_ladder", "grid_density")
RATE_KEYS = ("lambda", "mu0", "mu1", "mu_general", "m", "b")

_GEOMETRIC_SNAPSHOTS = [0.0, 1.0, 3.0, 10.0, 30.0, 100.0]

PRESETS: dict[str, dict] = {
    "example1": {
        "run": {"t_end": 100.0, "snapshot_times": _GEOMETRIC_SNAPSHOTS},
        "model": {
            "N": 3000, "N_scale": 3000, "delta": 0.3, "s": 0.01, "m": 0.01,
            "mutation_rate": 0.1, "normalization": "constant",
        },
        "initial": {"kind": "point_mass", "x": 0.5, "u": 0.5},
        "reflect": {"h": 0.1},
    },
    "example2_neutral": {
        "run": {"t_end": 100.0, "snapshot_times": _GEOMETRIC_SNAPSHOTS},
        "model": {
            "N": 1000, "N_scale": 1000, "delta": 0.9, "s": 0.003, "m": 0.003, "rho": 1.0,
            "mutation_rate": 0.1, "normalization": "constant",
        },
        "initial": {"kind": "point_mass", "x": 0.0, "u": 1.0},
        "reflect": {"h": 0.1},
    },
    "example2_trait": {
        "run": {"t_end": 100.0, "snapshot_times": _GEOMETRIC_SNAPSHOTS},
        "model": {
            "N": 1000, "N_scale": 1000, "delta": 1.0, "s": 0.003, "m": 0.003,
            "mutation_rate": 0.1, "normalization": "constant",
        },
        "initial": {"kind": "point_mass", "x": 0.0, "u": 1.0},
        "reflect": {"h": 0.1},
    },
    "example3": {
        "run": {"t_end": 50.0, "snapshot_times": [0.0, 5.0, 10.0, 20.0, 50.0]},
        "model": {
            "N": 100, "N_scale": 100, "delta": 0.1, "s": 0.03, "m": 0.003,
            "mutation_rate": 0.1, "normalization": "constant",
        },
        "initial": {"kind": "trait_ladder", "x": 0.0, "u": 0.0},
        "reflect": {"h": 0.1},
    },
    "custom": {},
}


def preset_values(scenario: str) -> dict:
    if scenario not in PRESETS:
        raise ConfigError(f"run.scenario: expected one of {list(SCENARIOS)} (got {scenario!r})")
    return PRESETS[scenario]


def _build_example1(p) -> dict:
    # lambda = 2 - 20 (x - u)^2, cut to zero outside |x - u| <= 1/sqrt(10)
    return {
        "domain": Domain(0.0, 1.0, 0.0, 1.0),
        "lambda": Polynomial("x-u", (2.0, 0.0, -20.0), floor=0.0),
        "mu0": Constant(1.0),
        "mu1": Constant(1.0),
        "m": Constant(p.m),
        "b": Constant(0.0),
        "W": TraitKernel(),
        "shape": "indicator",
    }


def _build_example2_neutral(p) -> dict:
    if p.rho is None or not p.rho > 0:
        raise ConfigError("model.rho: example2_neutral needs a positive growth width rho")
    return {
        "domain": Domain(-1.0, 1.0, 0.0, 2.0),
        "lambda": Gaussian("x", width_const=p.rho * p.rho),
        "mu0": Constant(1.0),
        "mu1": Constant(1.0),
        "m": Constant(p.m),
        "b": Constant(0.0),
        "W": TraitKernel(width=0.02),
        "shape": "gaussian",
    }


def _build_example2_trait(p) -> dict:
    out = _build_example2_neutral(p.replace(rho=1.0))
    out["lambda"] = Gaussian("x", width_const=0.1, width_trait_slope=1.0)
    return out


def _build_example3(p) -> dict:
    return {
        "domain": Domain(-1.0, 1.0, 0.0, 3.0),
        "lambda": Constant(1.0),
        "mu0": Constant(1.0),
        "mu1": Constant(1.0),
        "m": Polynomial("u", (0.1 * p.m, p.m)),
        "b": Constant(0.0),
        "W": TraitKernel(width=0.1),
        "shape": "indicator",
    }


def _build_custom(p) -> dict:
    if p.domain is None:
        raise ConfigError("model.domain: the custom scenario needs x_min, x_max, u_min and u_max")
    if "lambda" not in p.rates:
        raise ConfigError("model.rates.lambda: the custom scenario needs a birth rate")
    return {
        "domain": None,
        "lambda": None,
        "mu0": Constant(1.0),
        "mu1": Constant(1.0),
        "m": Constant(p.m),
        "b": Constant(0.0),
        "W": TraitKernel(),
        "shape": "indicator",
    }


_BUILDERS = {
    "example1": _build_example1,
    "example2_neutral": _build_example2_neutral,
    "example2_trait": _build_example2_trait,
    "example3": _build_example3,
    "custom": _build_custom,
}


def build_spec(cfg: RunConfig) -> ModelSpec:
    """Scenario forms, then the ``model.domain``/``model.rates``/``model.W`` overrides."""
    p = cfg.model
    parts = _BUILDERS[cfg.scenario](p)
    if p.domain is not None:
        parts["domain"] = Domain(**p.domain)
    for name in RATE_KEYS:
        if name in p.rates:
            parts[name] = rate_expr_from_dict(p.rates[name], key=f"model.rates.{name}")
    if p.W is not None:
        parts["W"] = TraitKernel(width=p.W.get("width"), amplitude=float(p.W.get("amplitude", 1.0)))
    if p.kernel_shape is not None:
        parts["shape"] = p.kernel_shape
    domain = parts["domain"]
    return ModelSpec(
        domain=domain,
        lam=parts["lambda"],
        mu0=parts["mu0"],
        mu1=parts["mu1"],
        m=parts["m"],
        b=parts["b"],
        mutation=MutationKernel(p.mutation_rate, p.s, domain.u_min, domain.u_max),
        interaction=InteractionKernel(parts["shape"], p.delta, p.normalization),
        competition_W=parts["W"],
        n_scale=float(p.N_scale),
        mu_general=parts.get("mu_general"),
        mu_lipschitz=p.mu_lipschitz,
        mu_star=p.mu_star,
        c_delta=p.c_delta,
    )


def initial_points(cfg: RunConfig, spec: ModelSpec, streams: StreamFactory | None = None) -> list[tuple[float, float]]:
    ic = cfg.initial
    n = ic.n if ic.n is not None else cfg.model.N
    domain = spec.domain
    if ic.kind == "point_mass":
        return [(ic.x, ic.u)] * n
    if ic.kind == "trait_ladder":
        # trait values u_min + L i / n for i = 1..n
        return [(ic.x, domain.u_min + domain.trait_length * i / n) for i in range(1, n + 1)]
    grid = read_grid_csv(ic.path, domain)
    rng = (streams or StreamFactory(cfg.seed)).aux_stream()
    return sample_from_grid(grid, n, rng)


def sample_from_grid(grid: DensityGrid, n: int, rng: np.random.Generator) -> list[tuple[float, float]]:
    """Draw ``n`` individuals: a node with probability proportional to its mass, then uniform in its cell."""
    weights = (grid.values * np.outer(grid.weights_x, grid.weights_u)).ravel()
    total = float(weights.sum())
    if n == 0:
        return []
    if total <= 0:
        raise ConfigError("initial.path: the grid density has no mass to sample from")
    cells = rng.choice(weights.size, size=n, p=weights / total)
    ix, iu = np.unravel_index(cells, grid.values.shape)
    xs, us = grid.x, grid.u
    x_lo = np.maximum(xs[ix] - 0.5 * grid.dx, grid.domain.x_min)
    x_hi = np.minimum(xs[ix] + 0.5 * grid.dx, grid.domain.x_max)
    u_lo = np.maximum(us[iu] - 0.5 * grid.du, grid.domain.u_min)
    u_hi = np.minimum(us[iu] + 0.5 * grid.du, grid.domain.u_max)
    x = x_lo + (x_hi - x_lo) * rng.random(n)
    u = u_lo + (u_hi - u_lo) * rng.random(n)
    return list(zip(x.tolist(), u.tolist()))


def initial_population(cfg: RunConfig, spec: ModelSpec, streams: StreamFactory) -> Population:
    return Population.from_points(initial_points(cfg, spec, streams), domain=spec.domain, streams=streams)


def initial_density(cfg: RunConfig, spec: ModelSpec) -> DensityGrid:
    """Solver start state with the same mass N / N_scale as the initial population."""
    ic = cfg.initial
    if ic.kind == "grid_density":
        return read_grid_csv(ic.path, spec.domain)
    like = DensityGrid.zeros(spec.domain, cfg.pde.nx, cfg.pde.nu)
    points = initial_points(cfg, spec)
    xs = np.array([p[0] for p in points])
    us = np.array([p[1] for p in points])
    return density_on_grid((xs, us), like, n_scale=cfg.model.N_scale)
