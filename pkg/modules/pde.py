"""Deterministic density solvers (nonlocal and local competition).

The state is a density g(x, u) on a tensor grid of nodes, integrated with
trapezoid weights. Transport is written in flux form between neighbouring
nodes with zero flux through both walls, which is the mirrored ghost cell
Neumann condition and conserves mass exactly:

    dg_i/dt = -(F_{i+1/2} - F_{i-1/2}) / w_i
    F_{i+1/2} = -((m g)_{i+1} - (m g)_i) / dx + upwind(b g)

with ``w_i`` the trapezoid cell volumes (dx inside, dx/2 at the ends).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .error_codes import NUMERIC_GRID_MISMATCH, NUMERIC_STABILITY_VIOLATED
from .errors import ConfigError, NumericalError
from .model import Domain, InteractionKernel, ModelSpec, TraitKernel

logger = logging.getLogger(__name__)

PDE_SCHEMES = ("explicit", "imex")
PDE_MODES = ("nonlocal", "local")
DEFAULT_NODES = 101
# clipped negative mass above this share of the total is a blowup, not round-off
_BLOWUP_SHARE = 1e-2
_CLIP_WARN_SHARE = 1e-12


def trapezoid_weights(n: int, step: float) -> np.ndarray:
    w = np.full(n, step)
    w[0] = w[-1] = 0.5 * step
    return w


@dataclass
class DensityGrid:
    domain: Domain
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 2:
            raise ConfigError(f"density grid needs at least 2x2 nodes (got shape {values.shape})")
        if not np.all(np.isfinite(values)):
            raise NumericalError("density grid holds NaN or infinite values")
        if np.any(values < 0.0):
            raise NumericalError("density grid holds negative values")
        self.values = values

    @classmethod
    def zeros(cls, domain: Domain, nx: int = DEFAULT_NODES, nu: int = DEFAULT_NODES, t: float = 0.0) -> DensityGrid:
        return cls(domain, np.zeros((nx, nu)), t)

    @classmethod
    def from_function(
        cls,
        domain: Domain,
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        nx: int = DEFAULT_NODES,
        nu: int = DEFAULT_NODES,
        t: float = 0.0,
    ) -> DensityGrid:
        x = np.linspace(domain.x_min, domain.x_max, nx)
        u = np.linspace(domain.u_min, domain.u_max, nu)
        gx, gu = np.meshgrid(x, u, indexing="ij")
        return cls(domain, np.broadcast_to(fn(gx, gu), (nx, nu)).astype(float), t)

    @property
    def nx(self) -> int:
        return int(self.values.shape[0])

    @property
    def nu(self) -> int:
        return int(self.values.shape[1])

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.domain.x_min, self.domain.x_max, self.nx)

    @property
    def u(self) -> np.ndarray:
        return np.linspace(self.domain.u_min, self.domain.u_max, self.nu)

    @property
    def dx(self) -> float:
        return self.domain.length / (self.nx - 1)

    @property
    def du(self) -> float:
        return self.domain.trait_length / (self.nu - 1)

    @property
    def weights_x(self) -> np.ndarray:
        return trapezoid_weights(self.nx, self.dx)

    @property
    def weights_u(self) -> np.ndarray:
        return trapezoid_weights(self.nu, self.du)

    def column_mass(self) -> np.ndarray:
        """Trait-integrated density n(x) at every x node."""
        return self.values @ self.weights_u

    def mass(self) -> float:
        return float(self.weights_x @ self.column_mass())

    def same_grid(self, other: DensityGrid) -> bool:
        return self.domain == other.domain and self.values.shape == other.values.shape

    def require_same_grid(self, other: DensityGrid) -> None:
        if not self.same_grid(other):
            raise NumericalError(
                f"grids differ: {self.values.shape} on {self.domain} vs {other.values.shape} on {other.domain}",
                code=NUMERIC_GRID_MISMATCH,
            )

    def with_values(self, values: np.ndarray, t: float | None = None) -> DensityGrid:
        return DensityGrid(self.domain, values, self.t if t is None else t)


@dataclass(frozen=True)
class PdeConfig:
    dt: float | None = None
    scheme: str = "explicit"
    mode: str = "nonlocal"
    safety: float = 0.9

    def __post_init__(self) -> None:
        if self.scheme not in PDE_SCHEMES:
            raise ConfigError(f"pde scheme must be one of {PDE_SCHEMES} (got {self.scheme!r})")
        if self.mode not in PDE_MODES:
            raise ConfigError(f"pde mode must be one of {PDE_MODES} (got {self.mode!r})")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"pde dt must be positive (got {self.dt})")
        if not 0 < self.safety <= 1:
            raise ConfigError(f"pde safety factor must lie in (0, 1] (got {self.safety})")


# ---------------------------------------------------------------------------
# Interaction terms
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _trait_matrix(W: TraitKernel, u_min: float, u_max: float, nu: int) -> np.ndarray:
    u = np.linspace(u_min, u_max, nu)
    wu = trapezoid_weights(nu, (u_max - u_min) / (nu - 1))
    return W.evaluate(u[:, None] - u[None, :]) * wu[None, :]


@lru_cache(maxsize=32)
def _space_matrix(domain: Domain, kernel: InteractionKernel, nx: int) -> np.ndarray:
    dx = domain.length / (nx - 1)
    if kernel.delta < 0.5 * dx:
        return np.eye(nx)
    wx = trapezoid_weights(nx, dx)
    # offsets in whole nodes so that every row sees the same kernel values
    offsets = np.arange(nx)[:, None] - np.arange(nx)[None, :]
    raw = kernel.profile_array(offsets * (dx / kernel.delta)) * wx[None, :]
    if kernel.normalization == "constant":
        if kernel.shape != "indicator":
            return kernel.interior_normalizer * raw
        # a full window away from the walls integrates to one, the grid version of 1/(2 delta)
        window = np.count_nonzero(kernel.profile_array(np.arange(-(nx - 1), nx) * (dx / kernel.delta)))
        return raw / (window * dx)
    # discrete rows integrate to one, the grid version of the boundary-aware normalizer
    return raw / raw.sum(axis=1, keepdims=True)


def local_interaction(g: DensityGrid, W: TraitKernel) -> np.ndarray:
    """rho(x, u) = sum_v W(u - v) g(x, v) w_v."""
    return g.values @ _trait_matrix(W, g.domain.u_min, g.domain.u_max, g.nu).T


def nonlocal_interaction(g: DensityGrid, kernel: InteractionKernel, W: TraitKernel) -> np.ndarray:
    """(I^delta W * g)(x, u): the space kernel matrix applied to ``local_interaction``."""
    return _space_matrix(g.domain, kernel, g.nx) @ local_interaction(g, W)


def _mutation_matrix(spec: ModelSpec, nu: int) -> np.ndarray:
    mk = spec.mutation
    domain = spec.domain
    u = np.linspace(domain.u_min, domain.u_max, nu)
    wu = trapezoid_weights(nu, domain.trait_length / (nu - 1))
    if mk.rate == 0:
        return np.zeros((nu, nu))
    # rows: parent trait v, columns: child trait u
    dens = mk.density_array(u[:, None], u[None, :])
    row_mass = dens @ wu
    dens = dens / row_mass[:, None]
    return mk.rate * dens * wu[:, None]


# ---------------------------------------------------------------------------
# Assembled operators
# ---------------------------------------------------------------------------


@dataclass
class _Operators:
    spec: ModelSpec
    cfg: PdeConfig
    nx: int
    nu: int
    dt: float
    lam: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    m: np.ndarray
    grid_x: np.ndarray
    grid_u: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray
    weights_x: np.ndarray
    dx: float
    mutation: np.ndarray
    lu: list = field(default_factory=list)

    def reaction(self, g: DensityGrid) -> np.ndarray:
        rho = competition_field(g, self.spec, self.cfg.mode)
        if self.spec.mu_general is None:
            mu = self.mu0 + self.mu1 * rho
        else:
            mu = self.spec.mu_general.evaluate(self.grid_x, self.grid_u, rho)
            if np.any(mu < 0):
                raise NumericalError("general death rate turned negative on the grid")
        return (self.lam - mu) * g.values + g.values @ self.mutation

    def transport(self, values: np.ndarray) -> np.ndarray:
        mg = self.m * values
        flux = -(mg[1:] - mg[:-1]) / self.dx + self.b_plus * values[:-1] + self.b_minus * values[1:]
        div = np.zeros_like(values)
        div[:-1] -= flux
        div[1:] += flux
        return div / self.weights_x[:, None]

    def column_operator(self, col: int) -> sparse.csc_matrix:
        m = self.m[:, col]
        a = m[:-1] / self.dx + self.b_plus[:, col]
        c = -m[1:] / self.dx + self.b_minus[:, col]
        w = self.weights_x
        main = np.zeros(self.nx)
        main[:-1] -= a / w[:-1]
        main[1:] += c / w[1:]
        upper = -c / w[:-1]
        lower = a / w[1:]
        return sparse.diags([lower, main, upper], [-1, 0, 1], format="csc")

    def implicit_solvers(self) -> list:
        if not self.lu:
            eye = sparse.identity(self.nx, format="csc")
            self.lu = [splu((eye - self.dt * self.column_operator(col)).tocsc()) for col in range(self.nu)]
        return self.lu


def _transport_limit(m_star: float, b_star: float, dx: float) -> float:
    rate = 2.0 * m_star / (dx * dx) + 2.0 * b_star / dx
    return math.inf if rate == 0 else 1.0 / rate


def assemble(g: DensityGrid, spec: ModelSpec, cfg: PdeConfig) -> _Operators:
    """Evaluate rates on the grid, choose or check dt, cache kernel matrices."""
    if g.domain != spec.domain:
        raise NumericalError("density grid and model use different boxes", code=NUMERIC_GRID_MISMATCH)
    x, u = g.x, g.u
    gx, gu = np.meshgrid(x, u, indexing="ij")
    m = spec.m.evaluate(gx, gu)
    b = spec.b.evaluate(gx, gu)
    b_mid = 0.5 * (b[1:] + b[:-1])
    dx = g.dx
    m_star = float(np.max(m))
    b_star = float(np.max(np.abs(b)))
    limit = _transport_limit(m_star, b_star, dx)
    lam = spec.lam.evaluate(gx, gu)
    mutation = _mutation_matrix(spec, g.nu)
    if spec.mu_general is None:
        mu0 = spec.mu0.evaluate(gx, gu)
        mu1 = spec.mu1.evaluate(gx, gu)
    else:
        mu0 = mu1 = np.zeros_like(gx)

    if cfg.dt is None:
        ops_rate = float(np.max(lam)) + spec.mutation.rate
        if spec.mu_general is None:
            # twice the initial competition leaves room for growth
            rho_max = float(np.max(competition_field(g, spec, cfg.mode)))
            ops_rate += float(np.max(mu0)) + 2.0 * float(np.max(mu1)) * max(rho_max, 1.0)
        else:
            ops_rate += spec.bounds.mu_star
        if cfg.scheme == "explicit":
            # transport and reaction share the diagonal, so their rates add up
            ops_rate += 0.0 if math.isinf(limit) else 1.0 / limit
        dt = math.inf if ops_rate == 0 else cfg.safety / ops_rate
        if not math.isfinite(dt):
            dt = 1.0
    else:
        dt = float(cfg.dt)
    if cfg.scheme == "explicit" and dt > limit * (1.0 + 1e-12):
        raise NumericalError(
            f"explicit dt={dt:g} breaks the stability bound dx^2/(2 m* + 2 b* dx)={limit:g}",
            code=NUMERIC_STABILITY_VIOLATED,
        )
    logger.debug("pde assembled: nx=%d nu=%d dt=%g scheme=%s mode=%s", g.nx, g.nu, dt, cfg.scheme, cfg.mode)
    return _Operators(
        spec=spec,
        cfg=cfg,
        nx=g.nx,
        nu=g.nu,
        dt=dt,
        lam=lam,
        mu0=mu0,
        mu1=mu1,
        m=m,
        grid_x=gx,
        grid_u=gu,
        b_plus=np.maximum(b_mid, 0.0),
        b_minus=np.minimum(b_mid, 0.0),
        weights_x=g.weights_x,
        dx=dx,
        mutation=mutation,
    )


def competition_field(g: DensityGrid, spec: ModelSpec, mode: str) -> np.ndarray:
    if mode == "local":
        return local_interaction(g, spec.competition_W)
    return nonlocal_interaction(g, spec.interaction, spec.competition_W)


def _clip(values: np.ndarray, g: DensityGrid, dt: float) -> tuple[np.ndarray, float]:
    if not np.all(np.isfinite(values)):
        raise NumericalError(
            f"solver produced NaN/inf at t={g.t:g}; dt={dt:g} breaks the stability bound",
            code=NUMERIC_STABILITY_VIOLATED,
        )
    negative = values < 0.0
    if not negative.any():
        return values, 0.0
    clipped = float(g.weights_x @ (np.where(negative, -values, 0.0) @ g.weights_u))
    total = float(g.weights_x @ (np.abs(values) @ g.weights_u))
    if total > 0 and clipped > _BLOWUP_SHARE * total:
        raise NumericalError(
            f"negative mass {clipped:g} of {total:g} at t={g.t:g}; dt={dt:g} breaks the reaction stability bound",
            code=NUMERIC_STABILITY_VIOLATED,
        )
    if total > 0 and clipped > _CLIP_WARN_SHARE * total:
        logger.warning("clipped negative mass %.3e (%.3e of total) at t=%g", clipped, clipped / total, g.t)
    else:
        logger.debug("clipped negative mass %.3e at t=%g", clipped, g.t)
    return np.maximum(values, 0.0), clipped


def _advance(g: DensityGrid, ops: _Operators, dt: float) -> tuple[DensityGrid, float]:
    reaction = ops.reaction(g)
    if ops.cfg.scheme == "explicit":
        values = g.values + dt * (ops.transport(g.values) + reaction)
    else:
        rhs = g.values + dt * reaction
        if dt == ops.dt:
            solvers = ops.implicit_solvers()
            values = np.column_stack([solvers[col].solve(rhs[:, col]) for col in range(ops.nu)])
        else:
            eye = sparse.identity(ops.nx, format="csc")
            values = np.column_stack(
                [splu((eye - dt * ops.column_operator(col)).tocsc()).solve(rhs[:, col]) for col in range(ops.nu)]
            )
    values, clipped = _clip(values, g, dt)
    return g.with_values(values, g.t + dt), clipped


def step(g: DensityGrid, spec: ModelSpec, cfg: PdeConfig) -> DensityGrid:
    """One time step of length ``cfg.dt`` (or the automatic stable dt)."""
    ops = assemble(g, spec, cfg)
    out, _ = _advance(g, ops, ops.dt)
    return out


@dataclass
class PdeSolution:
    snapshots: list[DensityGrid]
    times: list[float]
    mass_trace: list[tuple[float, float]]
    dt: float
    clipped_mass: float = 0.0

    def __iter__(self) -> Iterator[DensityGrid]:
        return iter(self.snapshots)

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, index: int) -> DensityGrid:
        return self.snapshots[index]

    def at(self, t: float) -> DensityGrid:
        for snap in self.snapshots:
            if abs(snap.t - t) <= 1e-9 * max(1.0, abs(t)):
                return snap
        raise KeyError(t)


def solve(
    g0: DensityGrid,
    spec: ModelSpec,
    cfg: PdeConfig,
    t_end: float,
    snapshot_times: Sequence[float] = (),
) -> PdeSolution:
    """Step from ``g0`` to ``t_end``; steps are shortened to land on every snapshot time.

    Without snapshot times the final state is the only snapshot.
    """
    times = sorted(float(t) for t in snapshot_times)
    if times and (times[0] < g0.t or times[-1] > t_end):
        raise ConfigError(f"snapshot_times must lie in [{g0.t}, t_end={t_end}]")
    ops = assemble(g0, spec, cfg)
    g = g0
    snapshots: list[DensityGrid] = []
    trace = [(g.t, g.mass())]
    clipped_total = 0.0
    targets = list(times) + ([t_end] if not times or times[-1] < t_end else [])
    eps = 1e-12 * max(1.0, t_end)
    steps = 0
    for target in targets:
        while g.t < target - eps:
            dt = min(ops.dt, target - g.t)
            g, clipped = _advance(g, ops, dt)
            clipped_total += clipped
            trace.append((g.t, g.mass()))
            steps += 1
        g = g.with_values(g.values, target)
        if target in times:
            snapshots.append(g)
    if not times:
        snapshots.append(g)
    logger.info(
        "pde solve done: steps=%d dt=%g mass0=%g mass_end=%g clipped=%.3e",
        steps, ops.dt, trace[0][1], trace[-1][1], clipped_total,
    )
    return PdeSolution(snapshots=snapshots, times=times, mass_trace=trace, dt=ops.dt, clipped_mass=clipped_total)
