"""Registry of named, differentiable scalar functions.

Scenario documents refer to functions by name plus a parameter list, e.g.
``{"form": "linear", "params": [2.0, 0.0]}``.  Each registered form knows
its value and a set of closed-form partial derivatives; any other partial
is obtained by central finite differences (step ``FD_STEP``) applied to the
next lower derivative.

All forms are vectorized: arguments may be numpy arrays that broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product as _cartesian
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial import polynomial as _poly

from .errors import SchemaError

FD_STEP = 1e-5

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

Order = tuple[int, ...]


@dataclass(frozen=True)
class Form:
    """One registered functional form.

    ``n_params`` is the exact parameter count, or ``None`` for variadic
    forms whose parameters come in groups of ``param_group``.
    ``sample_domain`` and ``sample_params`` describe where the closed-form
    derivatives are exercised by the derivative-hygiene checks.
    """

    name: str
    arity: int
    n_params: int | None
    value: Callable
    derivs: Mapping[Order, Callable] = field(default_factory=dict)
    log_value: Callable | None = None
    dlog: Callable | None = None
    param_group: int = 1
    validate: Callable | None = None
    sample_domain: tuple[tuple[float, float], ...] = ((-3.0, 3.0),)
    sample_params: tuple[float, ...] = ()


REGISTRY: dict[str, Form] = {}


def register(form: Form) -> Form:
    if form.name in REGISTRY:
        raise ValueError(f"form {form.name!r} already registered")
    REGISTRY[form.name] = form
    return form


@dataclass(frozen=True)
class FunctionHandle:
    """A registry form bound to concrete parameters."""

    registry_id: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        form = REGISTRY.get(self.registry_id)
        if form is None:
            raise SchemaError(
                f"unknown form {self.registry_id!r}; known: {sorted(REGISTRY)}"
            )
        n = len(self.params)
        if form.n_params is not None:
            if n != form.n_params:
                raise SchemaError(
                    f"form {self.registry_id!r} takes {form.n_params} params, got {n}"
                )
        elif n == 0 or n % form.param_group:
            raise SchemaError(
                f"form {self.registry_id!r} takes a non-empty multiple of "
                f"{form.param_group} params, got {n}"
            )
        if form.validate is not None:
            form.validate(self.params)

    @property
    def form(self) -> Form:
        return REGISTRY[self.registry_id]

    @property
    def arity(self) -> int:
        return self.form.arity

    def __call__(self, *args):
        self._check_arity(args)
        return self.form.value(self.params, *args)

    def log(self, *args):
        """Natural log of the value (closed form when the form provides one)."""
        self._check_arity(args)
        if self.form.log_value is not None:
            return self.form.log_value(self.params, *args)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.form.value(self.params, *args))

    def dlog(self, *args):
        """Derivative of the log of a univariate form."""
        self._check_arity(args)
        if self.form.dlog is not None:
            return self.form.dlog(self.params, *args)
        return self.derivative((1,), *args) / self(*args)

    def has_closed_form(self, order: Order) -> bool:
        return tuple(order) in self.form.derivs

    def derivative(self, order: Sequence[int], *args):
        """Partial derivative of the given multi-index order.

        ``order`` has one entry per argument, e.g. ``(1, 1)`` is the mixed
        second partial of a bivariate form.
        """
        order = tuple(int(o) for o in order)
        self._check_arity(args)
        if len(order) != self.form.arity or min(order) < 0:
            raise ValueError(f"bad derivative order {order} for {self.registry_id}")
        if not any(order):
            return self(*args)
        closed = self.form.derivs.get(order)
        if closed is not None:
            return closed(self.params, *args)
        return self.finite_difference(order, *args)

    def finite_difference(self, order: Sequence[int], *args):
        """Central difference along the first differentiated axis."""
        order = tuple(order)
        axis = next(i for i, o in enumerate(order) if o > 0)
        lower = order[:axis] + (order[axis] - 1,) + order[axis + 1:]
        plus = list(args)
        minus = list(args)
        plus[axis] = np.asarray(args[axis], dtype=float) + FD_STEP
        minus[axis] = np.asarray(args[axis], dtype=float) - FD_STEP
        return (self.derivative(lower, *plus) - self.derivative(lower, *minus)) / (
            2.0 * FD_STEP
        )

    def to_doc(self) -> dict:
        return {"form": self.registry_id, "params": list(self.params)}

    def _check_arity(self, args):
        if len(args) != self.form.arity:
            raise TypeError(
                f"{self.registry_id} takes {self.form.arity} argument(s), got {len(args)}"
            )


def handle(registry_id: str, *params: float) -> FunctionHandle:
    return FunctionHandle(registry_id, tuple(params))


def from_doc(doc) -> FunctionHandle:
    return FunctionHandle(doc["form"], tuple(doc.get("params", ())))


def _zeros(t):
    return np.zeros_like(np.asarray(t, dtype=float))


# --- univariate ---------------------------------------------------------

register(Form(
    name="constant",
    arity=1,
    n_params=1,
    value=lambda p, t: p[0] + _zeros(t),
    derivs={(1,): lambda p, t: _zeros(t), (2,): lambda p, t: _zeros(t)},
    sample_params=(1.5,),
))

register(Form(
    name="identity",
    arity=1,
    n_params=0,
    value=lambda p, t: np.asarray(t, dtype=float) + 0.0,
    derivs={(1,): lambda p, t: 1.0 + _zeros(t), (2,): lambda p, t: _zeros(t)},
))

register(Form(
    name="linear",
    arity=1,
    n_params=2,
    value=lambda p, t: p[0] * np.asarray(t, dtype=float) + p[1],
    derivs={(1,): lambda p, t: p[0] + _zeros(t), (2,): lambda p, t: _zeros(t)},
    sample_params=(2.0, -0.5),
))


def _polyder_eval(p, t, m):
    return _poly.polyval(np.asarray(t, dtype=float), _poly.polyder(p, m)) + _zeros(t)


# coefficients in ascending order: c0 + c1 t + c2 t^2 + ...
register(Form(
    name="polynomial",
    arity=1,
    n_params=None,
    value=lambda p, t: _poly.polyval(np.asarray(t, dtype=float), p) + _zeros(t),
    derivs={
        (1,): lambda p, t: _polyder_eval(p, t, 1),
        (2,): lambda p, t: _polyder_eval(p, t, 2),
    },
    sample_params=(0.5, -1.0, 0.25, 0.1),
))

# scale * exp(rate * t)
register(Form(
    name="exp",
    arity=1,
    n_params=2,
    value=lambda p, t: p[0] * np.exp(p[1] * np.asarray(t, dtype=float)),
    derivs={
        (1,): lambda p, t: p[0] * p[1] * np.exp(p[1] * np.asarray(t, dtype=float)),
        (2,): lambda p, t: p[0] * p[1] ** 2 * np.exp(p[1] * np.asarray(t, dtype=float)),
    },
    sample_params=(1.2, 0.7),
))


def _log_form(p, t):
    with np.errstate(divide="ignore", invalid="ignore"):
        return p[0] * np.log(np.asarray(t, dtype=float) + p[1])


# scale * log(t + shift), defined for t > -shift
register(Form(
    name="log",
    arity=1,
    n_params=2,
    value=_log_form,
    derivs={
        (1,): lambda p, t: p[0] / (np.asarray(t, dtype=float) + p[1]),
        (2,): lambda p, t: -p[0] / (np.asarray(t, dtype=float) + p[1]) ** 2,
    },
    sample_domain=((0.5, 5.0),),
    sample_params=(1.5, 0.0),
))


def _check_positive_scale(index, label):
    def check(params):
        if not params[index] > 0:
            raise SchemaError(f"{label} must be > 0, got {params[index]}")
    return check


def _normal_log(p, t):
    z = (np.asarray(t, dtype=float) - p[0]) / p[1]
    return -0.5 * z * z - math.log(p[1]) - _LOG_SQRT_2PI


def _normal_pdf(p, t):
    return np.exp(_normal_log(p, t))


# N(mean, sd^2) density
register(Form(
    name="normal_pdf",
    arity=1,
    n_params=2,
    value=_normal_pdf,
    log_value=_normal_log,
    dlog=lambda p, t: -(np.asarray(t, dtype=float) - p[0]) / p[1] ** 2,
    derivs={
        (1,): lambda p, t: -(np.asarray(t, dtype=float) - p[0]) / p[1] ** 2 * _normal_pdf(p, t),
        (2,): lambda p, t: (
            ((np.asarray(t, dtype=float) - p[0]) ** 2 / p[1] ** 2 - 1.0) / p[1] ** 2
        ) * _normal_pdf(p, t),
    },
    validate=_check_positive_scale(1, "normal_pdf sd"),
    sample_params=(0.3, 1.1),
))


def _cauchy_log(p, t):
    u = (np.asarray(t, dtype=float) - p[0]) / p[1]
    return -np.log1p(u * u) - math.log(math.pi * p[1])


def _cauchy_pdf(p, t):
    u = (np.asarray(t, dtype=float) - p[0]) / p[1]
    return 1.0 / (math.pi * p[1] * (1.0 + u * u))


register(Form(
    name="cauchy_pdf",
    arity=1,
    n_params=2,
    value=_cauchy_pdf,
    log_value=_cauchy_log,
    dlog=lambda p, t: (
        -2.0 * ((np.asarray(t, dtype=float) - p[0]) / p[1])
        / (p[1] * (1.0 + ((np.asarray(t, dtype=float) - p[0]) / p[1]) ** 2))
    ),
    derivs={
        (1,): lambda p, t: -2.0 * ((np.asarray(t, dtype=float) - p[0]) / p[1]) / (
            math.pi * p[1] ** 2 * (1.0 + ((np.asarray(t, dtype=float) - p[0]) / p[1]) ** 2) ** 2
        ),
        (2,): lambda p, t: (
            (6.0 * ((np.asarray(t, dtype=float) - p[0]) / p[1]) ** 2 - 2.0)
            / (math.pi * p[1] ** 3 * (1.0 + ((np.asarray(t, dtype=float) - p[0]) / p[1]) ** 2) ** 3)
        ),
    },
    validate=_check_positive_scale(1, "cauchy_pdf scale"),
    sample_params=(-0.2, 0.8),
))


# --- bivariate log-densities, argument order (x, theta) -----------------

def _gauss_loc(p, x, th):
    z = (np.asarray(x, dtype=float) - th) / p[0]
    return -0.5 * z * z - math.log(p[0]) - _LOG_SQRT_2PI


def _gauss_d(scale):
    return lambda p, x, th: scale * (np.asarray(x, dtype=float) - th) / p[0] ** 2


register(Form(
    name="gaussian_location",
    arity=2,
    n_params=1,
    value=_gauss_loc,
    derivs={
        (1, 0): _gauss_d(-1.0),
        (0, 1): _gauss_d(1.0),
        (1, 1): lambda p, x, th: 1.0 / p[0] ** 2 + _zeros(np.asarray(x) - th),
        (2, 0): lambda p, x, th: -1.0 / p[0] ** 2 + _zeros(np.asarray(x) - th),
        (0, 2): lambda p, x, th: -1.0 / p[0] ** 2 + _zeros(np.asarray(x) - th),
    },
    validate=_check_positive_scale(0, "gaussian_location scale"),
    sample_domain=((-3.0, 3.0), (-3.0, 3.0)),
    sample_params=(1.3,),
))


def _cauchy_u(p, x, th):
    return (np.asarray(x, dtype=float) - th) / p[0]


def _cauchy_loc(p, x, th):
    u = _cauchy_u(p, x, th)
    return -np.log1p(u * u) - math.log(math.pi * p[0])


def _cauchy_score(sign):
    def f(p, x, th):
        u = _cauchy_u(p, x, th)
        return sign * 2.0 * u / (p[0] * (1.0 + u * u))
    return f


def _cauchy_curv(sign):
    def f(p, x, th):
        u = _cauchy_u(p, x, th)
        return sign * (2.0 - 2.0 * u * u) / (p[0] ** 2 * (1.0 + u * u) ** 2)
    return f


register(Form(
    name="cauchy_location",
    arity=2,
    n_params=1,
    value=_cauchy_loc,
    derivs={
        (1, 0): _cauchy_score(-1.0),
        (0, 1): _cauchy_score(1.0),
        (1, 1): _cauchy_curv(1.0),
        (2, 0): _cauchy_curv(-1.0),
        (0, 2): _cauchy_curv(-1.0),
    },
    validate=_check_positive_scale(0, "cauchy_location scale"),
    sample_domain=((-3.0, 3.0), (-3.0, 3.0)),
    sample_params=(0.9,),
))


# --- monomial sums (bivariate and trivariate) ----------------------------

def _falling(power, k):
    out = 1.0
    for i in range(k):
        out *= power - i
    return out


def _monomial_eval(p, order, args):
    arity = len(args)
    group = arity + 1
    arrs = [np.asarray(a, dtype=float) for a in args]
    total = _zeros(sum(arrs))
    for i in range(0, len(p), group):
        coef = p[i]
        powers = p[i + 1:i + group]
        term = coef
        for pw, k, a in zip(powers, order, arrs):
            pw = int(pw)
            if k > pw:
                term = 0.0
                break
            term = term * _falling(pw, k) * a ** (pw - k)
        total = total + term
    return total


def _monomial_form(name, arity, sample_params, sample_domain):
    def value(p, *args):
        return _monomial_eval(p, (0,) * arity, args)

    def make(order):
        return lambda p, *args: _monomial_eval(p, order, args)

    derivs = {
        order: make(order)
        for order in _cartesian(range(3), repeat=arity)
        if 0 < sum(order) <= 2
    }

    def validate(params):
        for i in range(0, len(params), arity + 1):
            for pw in params[i + 1:i + arity + 1]:
                if pw < 0 or pw != int(pw):
                    raise SchemaError(f"{name}: powers must be non-negative integers, got {pw}")

    return Form(
        name=name,
        arity=arity,
        n_params=None,
        param_group=arity + 1,
        value=value,
        derivs=derivs,
        validate=validate,
        sample_domain=sample_domain,
        sample_params=sample_params,
    )


# groups [coef, pu, pv]: sum of coef * u^pu * v^pv
register(_monomial_form(
    "monomials2", 2, (1.0, 1, 0, 0.5, 1, 2, -0.3, 2, 1), ((-2.0, 2.0), (-2.0, 2.0))
))
# groups [coef, p_theta, p_x, p_y]
register(_monomial_form(
    "monomials3", 3, (1.0, 1, 0, 0, 0.4, 2, 1, 0, -0.2, 1, 1, 2),
    ((-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)),
))

register(Form(
    name="sum",
    arity=2,
    n_params=0,
    value=lambda p, u, v: np.asarray(u, dtype=float) + v,
    derivs={
        (1, 0): lambda p, u, v: 1.0 + _zeros(np.asarray(u) + v),
        (0, 1): lambda p, u, v: 1.0 + _zeros(np.asarray(u) + v),
        (1, 1): lambda p, u, v: _zeros(np.asarray(u) + v),
    },
    sample_domain=((-3.0, 3.0), (-3.0, 3.0)),
))

register(Form(
    name="product",
    arity=2,
    n_params=0,
    value=lambda p, u, v: np.asarray(u, dtype=float) * v,
    derivs={
        (1, 0): lambda p, u, v: np.asarray(v, dtype=float) + _zeros(u),
        (0, 1): lambda p, u, v: np.asarray(u, dtype=float) + _zeros(v),
        (1, 1): lambda p, u, v: 1.0 + _zeros(np.asarray(u) * v),
    },
    sample_domain=((-3.0, 3.0), (-3.0, 3.0)),
))
