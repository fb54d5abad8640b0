"""Model description: boxes, rate functions, kernels and the competition field.

Rates are built from a small closed algebra (constants, polynomials and
Gaussians) so that every preset and every custom model can be written in a
config file, evaluated cheaply on scalars inside the event loop and on whole
grids inside the PDE solver.
"""
from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .error_codes import CONFIG_UNKNOWN_KEY, MODEL_NEGATIVE_DEATH_RATE
from .errors import ConfigError, DomainError, RateBoundError

logger = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_2 = math.sqrt(2.0)
POSITION_TOL = 1e-12
ENVELOPE_SAFETY = 1.01
_C_DELTA_FLOOR = 1e-9
_MAX_ENVELOPE_BINS = 20000

VARIABLES = ("x", "u", "x-u", "r")


def _phi_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / SQRT_2))


@dataclass(frozen=True)
class Domain:
    x_min: float
    x_max: float
    u_min: float
    u_max: float

    def __post_init__(self) -> None:
        values = (self.x_min, self.x_max, self.u_min, self.u_max)
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("domain bounds must be finite")
        if not self.x_min < self.x_max:
            raise ConfigError(f"domain requires x_min < x_max (got {self.x_min}, {self.x_max})")
        if not self.u_min < self.u_max:
            raise ConfigError(f"domain requires u_min < u_max (got {self.u_min}, {self.u_max})")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def trait_length(self) -> float:
        return self.u_max - self.u_min

    def contains_x(self, x: float) -> bool:
        return self.x_min - POSITION_TOL <= x <= self.x_max + POSITION_TOL

    def contains_u(self, u: float) -> bool:
        return self.u_min - POSITION_TOL <= u <= self.u_max + POSITION_TOL

    def variable_range(self, variable: str) -> tuple[float, float]:
        if variable == "x":
            return self.x_min, self.x_max
        if variable == "u":
            return self.u_min, self.u_max
        if variable == "x-u":
            return self.x_min - self.u_max, self.x_max - self.u_min
        raise ConfigError(f"variable {variable!r} has no range over the boxes")


# ---------------------------------------------------------------------------
# Rate algebra
# ---------------------------------------------------------------------------


def _scalar_getter(variable: str) -> Callable[[float, float, float], float]:
    if variable == "x":
        return lambda x, u, r: x
    if variable == "u":
        return lambda x, u, r: u
    if variable == "x-u":
        return lambda x, u, r: x - u
    if variable == "r":
        return lambda x, u, r: r
    raise ConfigError(f"unknown rate variable {variable!r}; expected one of {VARIABLES}")


def _array_value(variable: str, x, u, r):
    if variable == "x":
        return x
    if variable == "u":
        return u
    if variable == "x-u":
        return x - u
    return r


class RateExpr:
    """Base class: ``expr(x, u)`` on floats, ``expr.evaluate(X, U)`` on arrays."""

    kind = "base"
    scalar: Callable[..., float]

    def __call__(self, x: float, u: float, r: float = 0.0) -> float:
        return self.scalar(x, u, r)

    def evaluate(self, x, u, r=0.0) -> np.ndarray:
        raise NotImplementedError

    def sup(self, domain: Domain) -> float:
        """Upper bound of |expr| over the boxes."""
        raise NotImplementedError

    def inf(self, domain: Domain) -> float:
        xs = np.linspace(domain.x_min, domain.x_max, 129)
        us = np.linspace(domain.u_min, domain.u_max, 129)
        grid_x, grid_u = np.meshgrid(xs, us, indexing="ij")
        return float(np.min(self.evaluate(grid_x, grid_u)))

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __reduce__(self):
        # closures in `scalar` do not pickle; rebuild from the fields instead
        return (self.__class__, tuple(getattr(self, f.name) for f in fields(self)))


@dataclass(frozen=True)
class Constant(RateExpr):
    value: float
    kind = "constant"

    def __post_init__(self) -> None:
        value = float(self.value)
        object.__setattr__(self, "scalar", lambda x, u, r=0.0: value)

    def evaluate(self, x, u, r=0.0) -> np.ndarray:
        return np.full(np.broadcast(np.asarray(x), np.asarray(u)).shape, float(self.value))

    def sup(self, domain: Domain) -> float:
        return abs(float(self.value))

    def inf(self, domain: Domain) -> float:
        return float(self.value)

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": float(self.value)}


@dataclass(frozen=True)
class Polynomial(RateExpr):
    """sum_k coeffs[k] * v**k in one variable, optionally floored (``max(floor, p)``)."""

    variable: str
    coeffs: tuple[float, ...]
    floor: float | None = None
    kind = "polynomial"

    def __post_init__(self) -> None:
        coeffs = tuple(float(c) for c in self.coeffs)
        if not coeffs:
            raise ConfigError("polynomial needs at least one coefficient")
        object.__setattr__(self, "coeffs", coeffs)
        get = _scalar_getter(self.variable)
        rev = coeffs[::-1]
        floor = self.floor

        def scalar(x: float, u: float, r: float = 0.0) -> float:
            v = get(x, u, r)
            acc = 0.0
            for c in rev:
                acc = acc * v + c
            if floor is not None and acc < floor:
                return floor
            return acc

        object.__setattr__(self, "scalar", scalar)

    def evaluate(self, x, u, r=0.0) -> np.ndarray:
        v = np.asarray(_array_value(self.variable, np.asarray(x, dtype=float), np.asarray(u, dtype=float), r))
        out = np.polynomial.polynomial.polyval(v, self.coeffs)
        out = np.broadcast_to(out, np.broadcast(np.asarray(x), np.asarray(u)).shape).astype(float)
        if self.floor is not None:
            out = np.maximum(out, self.floor)
        return out

    def _extrema_candidates(self, lo: float, hi: float) -> list[float]:
        points = [lo, hi]
        if len(self.coeffs) > 2:
            deriv = np.polynomial.polynomial.polyder(self.coeffs)
            for root in np.polynomial.polynomial.polyroots(deriv):
                if abs(root.imag) < 1e-12 and lo <= root.real <= hi:
                    points.append(float(root.real))
        return points

    def sup(self, domain: Domain) -> float:
        if self.variable == "r":
            raise ConfigError("a polynomial in r has no bound over the boxes; supply mu_star")
        lo, hi = domain.variable_range(self.variable)
        values = [np.polynomial.polynomial.polyval(p, self.coeffs) for p in self._extrema_candidates(lo, hi)]
        if self.floor is not None:
            values = [max(v, self.floor) for v in values]
        return float(max(abs(v) for v in values))

    def inf(self, domain: Domain) -> float:
        if self.variable == "r":
            lo, hi = 0.0, 1e6
        else:
            lo, hi = domain.variable_range(self.variable)
        values = [np.polynomial.polynomial.polyval(p, self.coeffs) for p in self._extrema_candidates(lo, hi)]
        if self.floor is not None:
            values = [max(v, self.floor) for v in values]
        return float(min(values))

    def to_dict(self) -> dict:
        out = {"kind": "polynomial", "variable": self.variable, "coeffs": list(self.coeffs)}
        if self.floor is not None:
            out["floor"] = float(self.floor)
        return out


@dataclass(frozen=True)
class Gaussian(RateExpr):
    """amplitude * exp(-(v - center)^2 / (2 (width_const + width_trait_slope * u)))."""

    variable: str
    amplitude: float = 1.0
    center: float = 0.0
    width_const: float = 1.0
    width_trait_slope: float = 0.0
    kind = "gaussian"

    def __post_init__(self) -> None:
        get = _scalar_getter(self.variable)
        amp = float(self.amplitude)
        center = float(self.center)
        w0 = float(self.width_const)
        w1 = float(self.width_trait_slope)
        exp = math.exp

        def scalar(x: float, u: float, r: float = 0.0) -> float:
            d = get(x, u, r) - center
            return amp * exp(-d * d / (2.0 * (w0 + w1 * u)))

        object.__setattr__(self, "scalar", scalar)

    def validate(self, domain: Domain) -> None:
        lowest = min(self.width_const + self.width_trait_slope * domain.u_min,
                     self.width_const + self.width_trait_slope * domain.u_max)
        if lowest <= 0.0:
            raise ConfigError("gaussian variance must stay positive over the trait box")

    def evaluate(self, x, u, r=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        d = np.asarray(_array_value(self.variable, x, u, r)) - self.center
        width = self.width_const + self.width_trait_slope * u
        out = self.amplitude * np.exp(-d * d / (2.0 * width))
        return np.broadcast_to(out, np.broadcast(x, u).shape).astype(float)

    def sup(self, domain: Domain) -> float:
        self.validate(domain)
        return abs(float(self.amplitude))

    def to_dict(self) -> dict:
        return {
            "kind": "gaussian",
            "variable": self.variable,
            "amplitude": float(self.amplitude),
            "center": float(self.center),
            "width_const": float(self.width_const),
            "width_trait_slope": float(self.width_trait_slope),
        }


_RATE_FIELDS = {
    "constant": {"kind", "value"},
    "polynomial": {"kind", "variable", "coeffs", "floor"},
    "gaussian": {"kind", "variable", "amplitude", "center", "width_const", "width_trait_slope"},
}


def rate_expr_from_dict(raw, *, key: str = "rate") -> RateExpr:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return Constant(float(raw))
    if not isinstance(raw, dict):
        raise ConfigError(f"{key}: expected a number or a mapping with 'kind'")
    kind = str(raw.get("kind", "")).strip().lower()
    if kind not in _RATE_FIELDS:
        raise ConfigError(f"{key}.kind: expected one of {sorted(_RATE_FIELDS)} (got {kind!r})")
    unknown = set(raw) - _RATE_FIELDS[kind]
    if unknown:
        raise ConfigError(f"{key}: unknown keys {sorted(unknown)} for kind {kind!r}", code=CONFIG_UNKNOWN_KEY)
    try:
        if kind == "constant":
            return Constant(float(str(raw["value"])))
        variable = str(raw.get("variable", "x"))
        _scalar_getter(variable)
        if kind == "polynomial":
            floor = raw.get("floor")
            return Polynomial(
                variable=variable,
                coeffs=tuple(float(str(c)) for c in raw["coeffs"]),
                floor=None if floor is None else float(str(floor)),
            )
        return Gaussian(
            variable=variable,
            amplitude=float(str(raw.get("amplitude", 1.0))),
            center=float(str(raw.get("center", 0.0))),
            width_const=float(str(raw.get("width_const", 1.0))),
            width_trait_slope=float(str(raw.get("width_trait_slope", 0.0))),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{key}: malformed {kind} expression ({exc})") from exc


@dataclass(frozen=True)
class TraitKernel:
    """Competition weight W(v): constant ``amplitude`` or ``amplitude * exp(-v^2 / width)``."""

    width: float | None = None
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise ConfigError("competition kernel W must be nonnegative")
        if self.width is not None and self.width <= 0:
            raise ConfigError("competition kernel width must be positive")
        amp = float(self.amplitude)
        if self.width is None:
            object.__setattr__(self, "scalar", lambda v: amp)
        else:
            width = float(self.width)
            exp = math.exp
            object.__setattr__(self, "scalar", lambda v: amp * exp(-v * v / width))

    def __reduce__(self):
        return (self.__class__, (self.width, self.amplitude))

    def __call__(self, v: float) -> float:
        return self.scalar(v)

    def evaluate(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.width is None:
            return np.full(v.shape, float(self.amplitude))
        return self.amplitude * np.exp(-v * v / self.width)

    @property
    def sup(self) -> float:
        return float(self.amplitude)

    def to_dict(self) -> dict:
        return {"width": self.width, "amplitude": float(self.amplitude)}


# ---------------------------------------------------------------------------
# Spatial interaction kernel
# ---------------------------------------------------------------------------

KERNEL_SHAPES = ("indicator", "gaussian")
KERNEL_NORMALIZATIONS = ("boundary_aware", "constant")
_wide_kernel_warned: set = set()


@dataclass(frozen=True)
class InteractionKernel:
    shape: str = "indicator"
    delta: float = 0.1
    normalization: str = "boundary_aware"

    def __post_init__(self) -> None:
        if self.shape not in KERNEL_SHAPES:
            raise ConfigError(f"interaction shape must be one of {KERNEL_SHAPES} (got {self.shape!r})")
        if self.normalization not in KERNEL_NORMALIZATIONS:
            raise ConfigError(
                f"interaction normalization must be one of {KERNEL_NORMALIZATIONS} (got {self.normalization!r})"
            )
        if not self.delta > 0:
            raise ConfigError(f"interaction range delta must be positive (got {self.delta})")

    def profile(self, z: float) -> float:
        """Unnormalized shape k(z), z = (x - y) / delta."""
        if self.shape == "indicator":
            return 1.0 if -1.0 <= z <= 1.0 else 0.0
        return math.exp(-0.5 * z * z)

    def profile_array(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.shape == "indicator":
            return (np.abs(z) <= 1.0).astype(float)
        return np.exp(-0.5 * z * z)

    @property
    def interior_normalizer(self) -> float:
        if self.shape == "indicator":
            return 1.0 / (2.0 * self.delta)
        return 1.0 / (self.delta * SQRT_2PI)


def _boundary_normalizer(domain: Domain, kernel: InteractionKernel, x: float) -> float:
    delta = kernel.delta
    if kernel.shape == "indicator":
        return 1.0 / (min(x + delta, domain.x_max) - max(x - delta, domain.x_min))
    mass = _phi_cdf((domain.x_max - x) / delta) - _phi_cdf((domain.x_min - x) / delta)
    return 1.0 / (delta * SQRT_2PI * mass)


def kernel_normalizer(domain: Domain, kernel: InteractionKernel, x: float) -> float:
    """C_delta(x) such that the kernel integrates to one over the domain at x."""
    if not domain.contains_x(x):
        raise DomainError(f"position {x} outside domain [{domain.x_min}, {domain.x_max}]")
    if kernel.delta >= domain.length:
        token = (domain, kernel)
        if token not in _wide_kernel_warned:
            _wide_kernel_warned.add(token)
            logger.warning(
                "interaction range delta=%g is not smaller than the domain length %g; normalizer is degenerate",
                kernel.delta,
                domain.length,
            )
    if kernel.normalization == "constant":
        return kernel.interior_normalizer
    return _boundary_normalizer(domain, kernel, min(max(x, domain.x_min), domain.x_max))


def kernel_normalizer_array(domain: Domain, kernel: InteractionKernel, x) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float), domain.x_min, domain.x_max)
    if kernel.normalization == "constant":
        return np.full(x.shape, kernel.interior_normalizer)
    delta = kernel.delta
    if kernel.shape == "indicator":
        return 1.0 / (np.minimum(x + delta, domain.x_max) - np.maximum(x - delta, domain.x_min))
    mass = ndtr((domain.x_max - x) / delta) - ndtr((domain.x_min - x) / delta)
    return 1.0 / (delta * SQRT_2PI * mass)


def kernel_sup(domain: Domain, kernel: InteractionKernel) -> float:
    """||I^delta||_inf; the boundary-aware normalizer peaks at the walls."""
    if kernel.normalization == "constant":
        return kernel.interior_normalizer
    xs = np.concatenate(([domain.x_min, domain.x_max], np.linspace(domain.x_min, domain.x_max, 257)))
    return float(np.max(kernel_normalizer_array(domain, kernel, xs)))


def interaction_weight(domain: Domain, kernel: InteractionKernel, x: float, y: float) -> float:
    """I^delta(x - y), normalized at the evaluation point x."""
    k = kernel.profile((x - y) / kernel.delta)
    if k == 0.0:
        return 0.0
    return kernel_normalizer(domain, kernel, x) * k


# ---------------------------------------------------------------------------
# Mutation kernel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MutationEnvelope:
    """Piecewise-constant M*(v) on bins, sampled exactly."""

    edges: tuple[float, ...]
    heights: tuple[float, ...]

    @cached_property
    def l1(self) -> float:
        widths = np.diff(np.asarray(self.edges))
        return float(np.dot(widths, np.asarray(self.heights)))

    @cached_property
    def _cumulative(self) -> list[float]:
        widths = np.diff(np.asarray(self.edges))
        mass = widths * np.asarray(self.heights)
        total = float(mass.sum())
        if total <= 0:
            return [1.0] * len(self.heights)
        cum = np.cumsum(mass) / total
        cum[-1] = 1.0
        return cum.tolist()

    def value(self, v: float) -> float:
        idx = bisect.bisect_right(self.edges, v) - 1
        idx = min(max(idx, 0), len(self.heights) - 1)
        return self.heights[idx]

    def sample(self, uniform_bin: float, uniform_pos: float) -> float:
        idx = bisect.bisect_left(self._cumulative, uniform_bin)
        idx = min(idx, len(self.heights) - 1)
        lo = self.edges[idx]
        hi = self.edges[idx + 1]
        return lo + (hi - lo) * uniform_pos


@dataclass(frozen=True)
class MutationKernel:
    """M(x, u, v) = rate * k_s(u, v), k_s the Gaussian N(u, s^2) conditioned on the trait box."""

    rate: float
    s: float
    u_min: float
    u_max: float

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise ConfigError(f"mutation rate must be nonnegative (got {self.rate})")
        if not self.s > 0:
            raise ConfigError(f"mutation standard deviation s must be positive (got {self.s})")
        if not self.u_min < self.u_max:
            raise ConfigError("mutation trait box must satisfy u_min < u_max")

    def conditioning_mass(self, u: float) -> float:
        return _phi_cdf((self.u_max - u) / self.s) - _phi_cdf((self.u_min - u) / self.s)

    def density(self, u: float, v: float) -> float:
        """k_s(u, v)."""
        if v < self.u_min or v > self.u_max:
            return 0.0
        z = (v - u) / self.s
        return math.exp(-0.5 * z * z) / (SQRT_2PI * self.s * self.conditioning_mass(u))

    def density_array(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        z = (v - u) / self.s
        mass = ndtr((self.u_max - u) / self.s) - ndtr((self.u_min - u) / self.s)
        out = np.exp(-0.5 * z * z) / (SQRT_2PI * self.s * mass)
        return np.where((v >= self.u_min) & (v <= self.u_max), out, 0.0)

    def __call__(self, u: float, v: float) -> float:
        return self.rate * self.density(u, v)

    @cached_property
    def envelope(self) -> MutationEnvelope:
        # M*(v) = sup_u M(u, v): grid max over u near v, 1.01 safety, bins of width s/4.
        box = self.u_max - self.u_min
        n_bins = int(min(_MAX_ENVELOPE_BINS, max(1, math.ceil(box / (self.s / 4.0)))))
        edges = np.linspace(self.u_min, self.u_max, n_bins + 1)
        probes = np.empty(2 * n_bins + 1)
        probes[0::2] = edges
        probes[1::2] = 0.5 * (edges[:-1] + edges[1:])
        offsets = self.s * np.linspace(-8.0, 8.0, 161)
        best = np.zeros(probes.shape)
        for start in range(0, probes.size, 2048):
            v = probes[start:start + 2048]
            u = np.clip(v[:, None] + offsets[None, :], self.u_min, self.u_max)
            vals = self.density_array(u, v[:, None])
            best[start:start + 2048] = vals.max(axis=1)
        per_bin = np.maximum(np.maximum(best[0:-1:2], best[1::2]), best[2::2])
        heights = ENVELOPE_SAFETY * self.rate * per_bin
        return MutationEnvelope(edges=tuple(edges.tolist()), heights=tuple(heights.tolist()))

    @property
    def envelope_l1(self) -> float:
        if self.rate == 0:
            return 0.0
        return self.envelope.l1


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateBounds:
    lambda_star: float
    mu_star: float
    m_star: float
    b_star: float
    M_star_l1: float
    kernel_sup: float
    C_delta: float


@dataclass(frozen=True)
class ModelSpec:
    domain: Domain
    lam: RateExpr
    mu0: RateExpr
    mu1: RateExpr
    m: RateExpr
    b: RateExpr
    mutation: MutationKernel
    interaction: InteractionKernel
    competition_W: TraitKernel = field(default_factory=TraitKernel)
    n_scale: float = 1.0
    mu_general: RateExpr | None = None
    mu_lipschitz: float | None = None
    mu_star: float | None = None
    c_delta: float | None = None

    def __post_init__(self) -> None:
        if not self.n_scale > 0:
            raise ConfigError(f"N_scale must be positive (got {self.n_scale})")
        for name in ("lam", "mu0", "mu1", "m"):
            expr = getattr(self, name)
            if isinstance(expr, Gaussian):
                expr.validate(self.domain)
            if self.mu_general is None or name in ("lam", "m"):
                if expr.inf(self.domain) < -1e-12:
                    raise ConfigError(f"rate {name} must be nonnegative over the boxes")
        if self.mu_general is not None and self.mu_star is None and self.mu_lipschitz is None:
            raise ConfigError("general death rate needs mu_star or mu_lipschitz to bound C_delta")

    @property
    def mode(self) -> str:
        return "logistic" if self.mu_general is None else "general"

    def replace(self, **changes) -> ModelSpec:
        return replace(self, **changes)

    @cached_property
    def bounds(self) -> RateBounds:
        return compute_bounds(self)

    @property
    def C_delta(self) -> float:
        return self.bounds.C_delta


def compute_bounds(spec: ModelSpec) -> RateBounds:
    domain = spec.domain
    lambda_star = spec.lam.sup(domain)
    m_star = spec.m.sup(domain)
    b_star = spec.b.sup(domain)
    m_l1 = spec.mutation.envelope_l1
    i_sup = kernel_sup(domain, spec.interaction)
    w_sup = spec.competition_W.sup
    if spec.mu_general is None:
        mu0_star = spec.mu0.sup(domain)
        mu1_star = spec.mu1.sup(domain)
        mu_star = max(mu0_star, mu1_star)
        c_delta = max(mu0_star + lambda_star + m_l1, mu1_star * i_sup * w_sup)
    else:
        if spec.mu_star is not None:
            mu_star = float(spec.mu_star)
        else:
            xs = np.linspace(domain.x_min, domain.x_max, 65)
            us = np.linspace(domain.u_min, domain.u_max, 65)
            gx, gu = np.meshgrid(xs, us, indexing="ij")
            at_zero = float(np.max(spec.mu_general.evaluate(gx, gu, 0.0)))
            mu_star = max(at_zero, float(spec.mu_lipschitz))
        c_delta = max(mu_star + lambda_star + m_l1, mu_star * i_sup * w_sup)
    if spec.c_delta is not None:
        if spec.c_delta < c_delta:
            logger.warning("configured C_delta=%g is below the derived bound %g", spec.c_delta, c_delta)
        c_delta = float(spec.c_delta)
    c_delta = max(c_delta, _C_DELTA_FLOOR)
    return RateBounds(
        lambda_star=lambda_star,
        mu_star=mu_star,
        m_star=m_star,
        b_star=b_star,
        M_star_l1=m_l1,
        kernel_sup=i_sup,
        C_delta=c_delta,
    )


def pair_weight(spec: ModelSpec, x: float, u: float, y: float, v: float) -> float:
    """I^delta(x - y) W(u - v)."""
    w = interaction_weight(spec.domain, spec.interaction, x, y)
    if w == 0.0:
        return 0.0
    return w * spec.competition_W.scalar(u - v)


def pair_weight_fn(spec: ModelSpec) -> Callable[[float, float, float, float], float]:
    """Scalar closure for ``pair_weight`` without the per-call checks (event loop use)."""
    domain = spec.domain
    kernel = spec.interaction
    delta = kernel.delta
    x_lo = domain.x_min
    x_hi = domain.x_max
    w_fn = spec.competition_W.scalar
    exp = math.exp
    if kernel.normalization == "constant":
        c = kernel.interior_normalizer

        def norm(x: float) -> float:
            return c
    elif kernel.shape == "indicator":
        def norm(x: float) -> float:
            return 1.0 / (min(x + delta, x_hi) - max(x - delta, x_lo))
    else:
        scale = 1.0 / (delta * SQRT_2PI)

        def norm(x: float) -> float:
            return scale / (_phi_cdf((x_hi - x) / delta) - _phi_cdf((x_lo - x) / delta))

    if kernel.shape == "indicator":
        def weight(x: float, u: float, y: float, v: float) -> float:
            z = (x - y) / delta
            if z > 1.0 or z < -1.0:
                return 0.0
            return norm(x) * w_fn(u - v)
    else:
        def weight(x: float, u: float, y: float, v: float) -> float:
            z = (x - y) / delta
            return norm(x) * exp(-0.5 * z * z) * w_fn(u - v)

    return weight


def _field_terms(spec: ModelSpec, x: float, u: float, xs, us) -> tuple[float, np.ndarray]:
    xs = np.asarray(xs, dtype=float)
    us = np.asarray(us, dtype=float)
    kernel = spec.interaction
    k = kernel.profile_array((x - xs) / kernel.delta)
    return kernel_normalizer(spec.domain, kernel, x), k * spec.competition_W.evaluate(u - us)


def interaction_contributions(spec: ModelSpec, x: float, u: float, xs, us) -> np.ndarray:
    """Per-individual terms I^delta(x - x_i) W(u - u_i) of the competition field."""
    if np.size(xs) == 0:
        return np.zeros(0)
    norm, raw = _field_terms(spec, x, u, xs, us)
    return norm * raw


def interaction_field_arrays(spec: ModelSpec, x: float, u: float, xs, us) -> float:
    if np.size(xs) == 0:
        return 0.0
    norm, raw = _field_terms(spec, x, u, xs, us)
    return norm * float(raw.sum())


def interaction_field(pop, x: float, u: float, spec: ModelSpec) -> float:
    """sum_i I^delta(x - x_i) W(u - u_i) over every living individual of ``pop``."""
    if pop.size == 0:
        return 0.0
    return interaction_field_arrays(spec, x, u, pop.positions(), pop.traits())


def death_rate(x: float, u: float, field_value: float, spec: ModelSpec) -> float:
    r = field_value / spec.n_scale
    if spec.mu_general is None:
        return spec.mu0.scalar(x, u, 0.0) + spec.mu1.scalar(x, u, 0.0) * r
    value = spec.mu_general.scalar(x, u, r)
    if value < 0.0:
        raise RateBoundError(
            f"general death rate is negative ({value:g}) at x={x:g}, u={u:g}, r={r:g}",
            code=MODEL_NEGATIVE_DEATH_RATE,
        )
    return value


def total_event_rate(spec: ModelSpec, x: float, u: float, field_value: float) -> float:
    """lambda + int M dv + mu at one individual."""
    return spec.lam.scalar(x, u, 0.0) + spec.mutation.rate + death_rate(x, u, field_value, spec)


def check_event_bound(spec: ModelSpec, x: float, u: float, field_value: float, n: int) -> None:
    """Per-event rate bound: total rate <= C_delta (N / N_scale + 1)."""
    total = total_event_rate(spec, x, u, field_value)
    limit = spec.C_delta * (n / spec.n_scale + 1.0)
    if total > limit * (1.0 + 1e-12):
        raise RateBoundError(f"event rate {total:g} exceeds C_delta bound {limit:g} at x={x:g}, u={u:g}")
