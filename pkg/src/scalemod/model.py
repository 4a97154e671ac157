"""Scenario domain types: prior, criterion densities, individual mean, scale.

A scenario describes a population whose latent parameter theta has prior
density ``mu`` on a finite support, two criteria X and Y that are
independent given theta, an individual mean m(theta, x, y) and a fixed
scale f(x, y) used by the authority to modulate the premium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Sequence

import numpy as np

from . import quadrature
from .errors import DivergentPartial, EvaluationError, SchemaError
from .functions import FunctionHandle, handle

PARTIAL_FLOOR = 1e-12
PRIOR_NORM_TOL = 1e-8

Interval = tuple[float, float]


def _interval(bounds, label) -> Interval:
    lo, hi = (float(b) for b in bounds)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise SchemaError(f"{label} must be finite, got [{lo}, {hi}]")
    if not hi > lo:
        raise SchemaError(f"{label} must have hi > lo, got [{lo}, {hi}]")
    return lo, hi


def _first_bad(values, *coords):
    values = np.asarray(values)
    bad = ~np.isfinite(values)
    if not bad.any():
        return None
    idx = np.unravel_index(np.argmax(bad), bad.shape)
    out = []
    for c in coords:
        c = np.broadcast_to(np.asarray(c, dtype=float), values.shape)
        out.append(float(c[idx]))
    return tuple(out)


def _finite(values, what, names, *coords):
    bad = _first_bad(values, *coords)
    if bad is not None:
        where = ", ".join(f"{n}={v:g}" for n, v in zip(names, bad))
        raise EvaluationError(f"non-finite {what}", f"({where})")
    return values


# --- prior ---------------------------------------------------------------

@dataclass(frozen=True)
class ThetaPrior:
    """Prior density of theta on a closed interval.

    The density is renormalized at construction when its integral over
    the support is off from one by more than ``PRIOR_NORM_TOL``.
    """

    density: FunctionHandle
    support: Interval
    norm: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "support", _interval(self.support, "prior support"))
        if self.density.arity != 1:
            raise SchemaError("prior density must be univariate")
        lo, hi = self.support
        grid = np.linspace(lo, hi, 1001)
        vals = np.asarray(self.density(grid), dtype=float)
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise SchemaError("prior density must be finite and non-negative on its support")
        total = quadrature.integrate_x(self.density, self.support)
        if not total > 0:
            raise SchemaError("prior density integrates to zero on its support")
        norm = total if abs(total - 1.0) > PRIOR_NORM_TOL else 1.0
        object.__setattr__(self, "norm", norm)

    def pdf(self, theta):
        return np.asarray(self.density(theta), dtype=float) / self.norm

    def log_pdf(self, theta):
        return np.asarray(self.density.log(theta), dtype=float) - math.log(self.norm)


# --- criterion densities -------------------------------------------------

class DensityFamily:
    """Conditional density of one criterion given theta.

    Subclasses supply the log-density, its x-derivative (score in x) and
    the mixed second derivative in (theta, x).  Arguments broadcast.
    """

    kind: ClassVar[str] = ""
    support: Interval

    def log_density(self, x, theta):
        raise NotImplementedError

    def dlog_dx(self, x, theta):
        raise NotImplementedError

    def mixed(self, x, theta):
        raise NotImplementedError

    def with_support(self, support: Interval) -> "DensityFamily":
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialFamily(DensityFamily):
    """alpha(theta) * r(x) * exp(c(theta) * a(x)), alpha = exp(-log_normalizer).

    ``log_normalizer`` is either a univariate handle or ``"numeric"``, in
    which case it is computed by quadrature over ``support``.
    """

    kind: ClassVar[str] = "exponential_family"

    carrier: FunctionHandle
    statistic: FunctionHandle
    natural_param: FunctionHandle
    log_normalizer: FunctionHandle | str = "numeric"
    support: Interval = (-6.0, 6.0)
    quad: quadrature.QuadratureConfig = field(
        default=quadrature.DEFAULT, repr=False, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "support", _interval(self.support, "criterion support"))
        if isinstance(self.log_normalizer, str) and self.log_normalizer != "numeric":
            raise SchemaError(
                f"log_normalizer must be a function or 'numeric', got {self.log_normalizer!r}"
            )

    def log_alpha(self, theta):
        if isinstance(self.log_normalizer, str):
            return -quadrature.log_normalizer(self, theta, self.quad)
        return -np.asarray(self.log_normalizer(theta), dtype=float)

    def unnormalized_log(self, x, theta):
        return self.carrier.log(x) + self.natural_param(theta) * self.statistic(x)

    def log_density(self, x, theta):
        return self.log_alpha(theta) + self.unnormalized_log(x, theta)

    def dlog_dx(self, x, theta):
        return self.carrier.dlog(x) + self.natural_param(theta) * self.statistic.derivative((1,), x)

    def mixed(self, x, theta):
        return self.natural_param.derivative((1,), theta) * self.statistic.derivative((1,), x)

    def with_support(self, support):
        return ExponentialFamily(
            self.carrier, self.statistic, self.natural_param, self.log_normalizer,
            support, self.quad,
        )


LOCATION_FAMILIES = ("gaussian_location", "cauchy_location")


@dataclass(frozen=True)
class LocationFamily(DensityFamily):
    """Named location family centred at theta with a fixed scale."""

    kind: ClassVar[str] = "named_location"

    family: str
    scale: float = 1.0
    support: Interval = (-6.0, 6.0)

    def __post_init__(self):
        if self.family not in LOCATION_FAMILIES:
            raise SchemaError(f"unknown location family {self.family!r}; known: {LOCATION_FAMILIES}")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "support", _interval(self.support, "criterion support"))
        object.__setattr__(self, "_fn", handle(self.family, self.scale))

    def log_density(self, x, theta):
        return self._fn(x, theta)

    def dlog_dx(self, x, theta):
        return self._fn.derivative((1, 0), x, theta)

    def mixed(self, x, theta):
        return self._fn.derivative((1, 1), x, theta)

    def with_support(self, support):
        return LocationFamily(self.family, self.scale, support)


@dataclass(frozen=True)
class CustomFamily(DensityFamily):
    """Log-density given directly as a bivariate handle l(x, theta)."""

    kind: ClassVar[str] = "custom"

    log_density_fn: FunctionHandle
    support: Interval = (-6.0, 6.0)

    def __post_init__(self):
        if self.log_density_fn.arity != 2:
            raise SchemaError("custom log_density must be bivariate (x, theta)")
        object.__setattr__(self, "support", _interval(self.support, "criterion support"))

    def log_density(self, x, theta):
        return self.log_density_fn(x, theta)

    def dlog_dx(self, x, theta):
        return self.log_density_fn.derivative((1, 0), x, theta)

    def mixed(self, x, theta):
        return self.log_density_fn.derivative((1, 1), x, theta)

    def with_support(self, support):
        return CustomFamily(self.log_density_fn, support)


def eval_log_density(family: DensityFamily, x, theta):
    """log p(x | theta); raises EvaluationError on any non-finite value."""
    return _finite(family.log_density(x, theta), "log-density", ("x", "theta"), x, theta)


def log_density_dx(family: DensityFamily, x, theta):
    return _finite(family.dlog_dx(x, theta), "log-density x-derivative", ("x", "theta"), x, theta)


def mixed_log_derivative(family: DensityFamily, x, theta):
    return _finite(family.mixed(x, theta), "mixed log-derivative", ("x", "theta"), x, theta)


# --- individual mean -----------------------------------------------------

class MeanFunction:
    kind: ClassVar[str] = ""

    def value(self, theta, x, y):
        raise NotImplementedError

    def dx(self, theta, x, y):
        raise NotImplementedError

    def dy(self, theta, x, y):
        raise NotImplementedError


IDENTITY = handle("identity")


@dataclass(frozen=True)
class AffineMean(MeanFunction):
    """m = c1(theta) + c2(theta) * (a(x) + b(y))."""

    kind: ClassVar[str] = "affine_in_scale"

    c1: FunctionHandle
    c2: FunctionHandle
    a: FunctionHandle = IDENTITY
    b: FunctionHandle = IDENTITY

    def value(self, theta, x, y):
        return self.c1(theta) + self.c2(theta) * (self.a(x) + self.b(y))

    def dx(self, theta, x, y):
        return self.c2(theta) * self.a.derivative((1,), x) + 0.0 * np.asarray(y, dtype=float)

    def dy(self, theta, x, y):
        return self.c2(theta) * self.b.derivative((1,), y) + 0.0 * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class CustomMean(MeanFunction):
    kind: ClassVar[str] = "custom"

    fn: FunctionHandle

    def __post_init__(self):
        if self.fn.arity != 3:
            raise SchemaError("custom mean must be trivariate (theta, x, y)")

    def value(self, theta, x, y):
        return self.fn(theta, x, y)

    def dx(self, theta, x, y):
        return self.fn.derivative((0, 1, 0), theta, x, y)

    def dy(self, theta, x, y):
        return self.fn.derivative((0, 0, 1), theta, x, y)


_TXY = ("theta", "x", "y")


def eval_mean(mean: MeanFunction, theta, x, y):
    return _finite(mean.value(theta, x, y), "mean", _TXY, theta, x, y)


def eval_mean_dx(mean: MeanFunction, theta, x, y):
    return _finite(mean.dx(theta, x, y), "mean x-partial", _TXY, theta, x, y)


def eval_mean_dy(mean: MeanFunction, theta, x, y):
    return _finite(mean.dy(theta, x, y), "mean y-partial", _TXY, theta, x, y)


def is_isotropic(mean: MeanFunction, thetas, xs, ys, tol=1e-12) -> bool:
    """True when m does not vary with theta anywhere on the grid."""
    th, x, y = np.meshgrid(thetas, xs, ys, indexing="ij")
    vals = eval_mean(mean, th, x, y)
    return bool(np.max(np.abs(vals - vals[:1])) <= tol)


# --- scale ---------------------------------------------------------------

class ScaleFunction:
    kind: ClassVar[str] = ""

    def value(self, x, y):
        raise NotImplementedError

    def dx(self, x, y):
        raise NotImplementedError

    def dy(self, x, y):
        raise NotImplementedError

    def dxdy(self, x, y):
        raise NotImplementedError


@dataclass(frozen=True)
class SemilinearScale(ScaleFunction):
    """f = a(x) + b(y)."""

    kind: ClassVar[str] = "semilinear"

    a: FunctionHandle = IDENTITY
    b: FunctionHandle = IDENTITY

    def value(self, x, y):
        return self.a(x) + self.b(y)

    def dx(self, x, y):
        return self.a.derivative((1,), x) + 0.0 * np.asarray(y, dtype=float)

    def dy(self, x, y):
        return self.b.derivative((1,), y) + 0.0 * np.asarray(x, dtype=float)

    def dxdy(self, x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


@dataclass(frozen=True)
class ProductScale(ScaleFunction):
    """f = x * y."""

    kind: ClassVar[str] = "product"

    def value(self, x, y):
        return np.asarray(x, dtype=float) * y

    def dx(self, x, y):
        return np.asarray(y, dtype=float) + 0.0 * np.asarray(x, dtype=float)

    def dy(self, x, y):
        return np.asarray(x, dtype=float) + 0.0 * np.asarray(y, dtype=float)

    def dxdy(self, x, y):
        return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape)


@dataclass(frozen=True)
class CustomScale(ScaleFunction):
    kind: ClassVar[str] = "custom"

    fn: FunctionHandle

    def __post_init__(self):
        if self.fn.arity != 2:
            raise SchemaError("custom scale must be bivariate (x, y)")

    def value(self, x, y):
        return self.fn(x, y)

    def dx(self, x, y):
        return self.fn.derivative((1, 0), x, y)

    def dy(self, x, y):
        return self.fn.derivative((0, 1), x, y)

    def dxdy(self, x, y):
        return self.fn.derivative((1, 1), x, y)


def eval_scale(scale: ScaleFunction, x, y):
    return _finite(scale.value(x, y), "scale", ("x", "y"), x, y)


def eval_scale_dx(scale: ScaleFunction, x, y):
    return _finite(scale.dx(x, y), "scale x-partial", ("x", "y"), x, y)


def eval_scale_dy(scale: ScaleFunction, x, y):
    return _finite(scale.dy(x, y), "scale y-partial", ("x", "y"), x, y)


def eval_scale_dxdy(scale: ScaleFunction, x, y):
    return _finite(scale.dxdy(x, y), "scale mixed partial", ("x", "y"), x, y)


def inverse_partials(scale: ScaleFunction, x, y):
    """Return (1/f'_x, 1/f'_y); DivergentPartial if either is below the floor."""
    fx = np.asarray(eval_scale_dx(scale, x, y), dtype=float)
    fy = np.asarray(eval_scale_dy(scale, x, y), dtype=float)
    for which, vals in (("x", fx), ("y", fy)):
        if np.any(np.abs(vals) < PARTIAL_FLOOR):
            raise DivergentPartial(which, (x, y) if np.ndim(vals) == 0 else None)
    return 1.0 / fx, 1.0 / fy


# --- subsets and scenario ------------------------------------------------

@dataclass(frozen=True)
class SubsetOmega:
    """Finite union of disjoint closed theta-intervals, sorted ascending."""

    intervals: tuple[Interval, ...]

    def __post_init__(self):
        ivs = tuple(_interval(iv, "omega interval") for iv in self.intervals)
        if not ivs:
            raise SchemaError("omega must contain at least one interval")
        ivs = tuple(sorted(ivs))
        for (_, hi), (lo, _) in zip(ivs, ivs[1:]):
            if lo <= hi:
                raise SchemaError(f"omega intervals overlap or touch at {lo}")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def full(cls, support: Interval) -> "SubsetOmega":
        return cls((tuple(support),))

    @classmethod
    def parse(cls, text: str) -> "SubsetOmega":
        """Parse ``"lo:hi[,lo:hi...]"``."""
        ivs = []
        for part in text.split(","):
            bits = part.strip().split(":")
            if len(bits) != 2:
                raise SchemaError(f"bad omega interval {part!r}, expected lo:hi")
            try:
                ivs.append((float(bits[0]), float(bits[1])))
            except ValueError:
                raise SchemaError(f"bad omega interval {part!r}, expected lo:hi") from None
        return cls(tuple(ivs))

    @property
    def length(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)

    def within(self, support: Interval) -> bool:
        lo, hi = support
        return all(lo <= a and b <= hi for a, b in self.intervals)

    def contains(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        inside = np.zeros(theta.shape, dtype=bool)
        for lo, hi in self.intervals:
            inside |= (theta >= lo) & (theta <= hi)
        return inside

    def __str__(self):
        return " U ".join(f"[{lo:g}, {hi:g}]" for lo, hi in self.intervals)


@dataclass(frozen=True)
class Scenario:
    prior: ThetaPrior
    family_x: DensityFamily
    family_y: DensityFamily
    mean: MeanFunction
    scale: ScaleFunction
    x_support: Interval
    y_support: Interval
    name: str = ""
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x_support", _interval(self.x_support, "box x_support"))
        object.__setattr__(self, "y_support", _interval(self.y_support, "box y_support"))
        if tuple(self.family_x.support) != self.x_support:
            raise SchemaError("family_x support differs from box x_support")
        if tuple(self.family_y.support) != self.y_support:
            raise SchemaError("family_y support differs from box y_support")
        xs = np.linspace(*self.x_support, 15)
        ys = np.linspace(*self.y_support, 15)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        f = eval_scale(self.scale, gx, gy)
        if np.ptp(f) <= 1e-9:
            raise SchemaError("scale is constant on the scenario box")

    @property
    def theta_support(self) -> Interval:
        return self.prior.support

    @property
    def omega_full(self) -> SubsetOmega:
        return SubsetOmega.full(self.prior.support)

    def check_omega(self, omega: SubsetOmega) -> SubsetOmega:
        if not omega.within(self.prior.support):
            raise SchemaError(f"omega {omega} is not inside prior support {self.prior.support}")
        return omega

    def replace(self, **changes) -> "Scenario":
        from dataclasses import replace
        return replace(self, **changes)


def grid(support: Sequence[float], n: int) -> np.ndarray:
    return np.linspace(float(support[0]), float(support[1]), int(n))
