"""Fixed Gauss-Legendre quadrature over interval unions.

Every integral in the package goes through this module.  Integrands are
called once per estimate with the full array of nodes, so they must be
vectorized.  Per-interval estimates are summed in interval order, which
makes integrals over a union exactly the sum of the per-interval ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Callable

import numpy as np

from .errors import NoConvergence, NonFiniteIntegrand

if TYPE_CHECKING:
    from .model import ExponentialFamily


@dataclass(frozen=True)
class QuadratureConfig:
    """Gauss-Legendre settings.

    With ``refine`` on, the node count is doubled (at most
    ``max_doublings`` times) until successive estimates agree to
    ``rel_tol`` relative (plus ``abs_tol`` absolute).
    """

    nodes_per_interval: int = 64
    refine: bool = False
    rel_tol: float = 1e-10
    abs_tol: float = 0.0
    max_doublings: int = 4

    def __post_init__(self):
        if self.nodes_per_interval < 2:
            raise ValueError("nodes_per_interval must be >= 2")
        if self.rel_tol <= 0 or self.abs_tol < 0 or self.max_doublings < 0:
            raise ValueError("tolerances must be positive and max_doublings >= 0")


DEFAULT = QuadratureConfig()


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]; cached, returned read-only."""
    nodes, weights = np.polynomial.legendre.leggauss(int(n))
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def intervals_of(region) -> tuple[tuple[float, float], ...]:
    """Accept a SubsetOmega, a single (lo, hi) pair or a list of pairs."""
    ivs = getattr(region, "intervals", region)
    if len(ivs) == 2 and np.ndim(ivs[0]) == 0:
        ivs = (ivs,)
    return tuple((float(lo), float(hi)) for lo, hi in ivs)


def region_nodes(region, n: int):
    """Concatenated nodes and weights for all intervals, plus split offsets."""
    x, w = gauss_legendre(n)
    nodes, weights = [], []
    for lo, hi in intervals_of(region):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def refined(evaluate: Callable[[int], object], cfg: QuadratureConfig = DEFAULT):
    """Run ``evaluate(n)`` at the configured node count, doubling if asked."""
    n = cfg.nodes_per_interval
    est = evaluate(n)
    if not cfg.refine:
        return est
    for _ in range(cfg.max_doublings):
        n *= 2
        new = evaluate(n)
        new_a = np.asarray(new, dtype=float)
        est_a = np.asarray(est, dtype=float)
        close = np.abs(new_a - est_a) <= cfg.rel_tol * np.abs(new_a) + cfg.abs_tol
        if np.all(close | (np.isnan(new_a) & np.isnan(est_a))):
            return new
        est = new
    raise NoConvergence(
        f"quadrature did not reach rel_tol={cfg.rel_tol} after {cfg.max_doublings} doublings"
    )


def _checked(values, nodes):
    values = np.asarray(values, dtype=float)
    values = np.broadcast_to(values, nodes.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        raise NonFiniteIntegrand(float(nodes[np.argmax(bad)]))
    return values


def _per_interval_sum(weights, values, n_intervals, n):
    total = 0.0
    for k in range(n_intervals):
        sl = slice(k * n, (k + 1) * n)
        total += float(np.dot(weights[sl], values[sl]))
    return total


def integrate_theta(integrand: Callable, region, cfg: QuadratureConfig = DEFAULT) -> float:
    """Integral of ``integrand`` over a union of intervals."""
    n_iv = len(intervals_of(region))

    def evaluate(n):
        t, w = region_nodes(region, n)
        return _per_interval_sum(w, _checked(integrand(t), t), n_iv, n)

    return refined(evaluate, cfg)


def integrate_x(integrand: Callable, support, cfg: QuadratureConfig = DEFAULT) -> float:
    """Integral over a single criterion interval."""
    return integrate_theta(integrand, (tuple(support),), cfg)


def integrate_pair(integrand: Callable, region, cfg: QuadratureConfig = DEFAULT) -> float:
    """Tensor-product integral of ``integrand(t, t1)`` over region x region.

    ``integrand`` receives ``t`` as a column and ``t1`` as a row.
    """

    def evaluate(n):
        t, w = region_nodes(region, n)
        vals = np.asarray(integrand(t[:, None], t[None, :]), dtype=float)
        vals = np.broadcast_to(vals, (t.size, t.size))
        bad = ~np.isfinite(vals)
        if bad.any():
            i, _ = np.unravel_index(np.argmax(bad), bad.shape)
            raise NonFiniteIntegrand(float(t[i]))
        return float(w @ vals @ w)

    return refined(evaluate, cfg)


def log_integrate(log_integrand: Callable, region, cfg: QuadratureConfig = DEFAULT) -> float:
    """log of the integral of exp(log_integrand), immune to underflow."""

    def evaluate(n):
        t, w = region_nodes(region, n)
        ls = np.asarray(log_integrand(t), dtype=float)
        return _logsumexp_weighted(ls, w, axis=-1)

    return float(refined(evaluate, cfg))


def _logsumexp_weighted(log_values, weights, axis=-1):
    if np.any(np.isnan(log_values)) or np.any(log_values == np.inf):
        raise NonFiniteIntegrand(float("nan"))
    top = np.max(log_values, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    s = np.sum(weights * np.exp(log_values - top), axis=axis)
    with np.errstate(divide="ignore"):
        return np.log(s) + np.squeeze(top, axis=axis)


def log_normalizer(family: "ExponentialFamily", theta, cfg: QuadratureConfig = DEFAULT):
    """log of the integral of r(x) exp(c(theta) a(x)) over the criterion support."""
    theta = np.asarray(theta, dtype=float)

    def evaluate(n):
        x, w = region_nodes((family.support,), n)
        ls = family.unnormalized_log(x, theta[..., None])
        return _logsumexp_weighted(np.asarray(ls, dtype=float), w, axis=-1)

    out = refined(evaluate, cfg)
    if not np.all(np.isfinite(out)):
        raise NonFiniteIntegrand(float("nan"))
    return out


def normalize_family(family: "ExponentialFamily", theta, cfg: QuadratureConfig = DEFAULT):
    """alpha(theta) = 1 / integral of r(x) exp(c(theta) a(x)) dx."""
    return np.exp(-log_normalizer(family, theta, cfg))


LOG_TINY = math.log(1e-300)
