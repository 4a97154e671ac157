"""Bayesian subset premium m_omega(x, y) and the posterior of theta.

With dsigma = p(x|theta) q(y|theta) mu(theta) dtheta, the premium of a
portfolio omega at criteria (x, y) is the dsigma-weighted average of the
individual mean over omega.  The marginal densities of the criteria cancel,
so only unnormalized weights are needed.  Ratios are evaluated with
log-shifted weights so that remote portfolios do not underflow.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import EvaluationError, ZeroMass
from .model import (
    Scenario,
    SubsetOmega,
    eval_log_density,
    eval_mean,
)
from .quadrature import DEFAULT, LOG_TINY, QuadratureConfig, refined, region_nodes


def log_sigma(scn: Scenario, theta, x, y):
    """log of p(x|theta) q(y|theta) mu(theta)."""
    return (
        eval_log_density(scn.family_x, x, theta)
        + eval_log_density(scn.family_y, y, theta)
        + scn.prior.log_pdf(theta)
    )


def sigma_weight(scn: Scenario, theta, x, y):
    """Unnormalized posterior weight at theta for observed (x, y)."""
    return np.exp(log_sigma(scn, theta, x, y))


def _log_mass_and_ratio(scn, omega, x, y, n, numerator=True):
    t, w = region_nodes(omega, n)
    ls = log_sigma(scn, t, x, y)
    top = float(np.max(ls))
    shifted = w * np.exp(ls - top)
    denom = float(np.sum(shifted))
    log_mass = top + math.log(denom) if denom > 0 else -math.inf
    if not numerator:
        return log_mass, None
    m = eval_mean(scn.mean, t, x, y)
    return log_mass, float(np.dot(shifted, m)) / denom


def log_posterior_mass(scn: Scenario, omega: SubsetOmega, x, y,
                       cfg: QuadratureConfig = DEFAULT) -> float:
    """log of the integral of dsigma over omega."""
    return refined(lambda n: _log_mass_and_ratio(scn, omega, x, y, n, False)[0], cfg)


def posterior_expectation(scn: Scenario, omega: SubsetOmega, x, y,
                          cfg: QuadratureConfig = DEFAULT) -> float:
    """m_omega(x, y): posterior mean of m(theta, x, y) given theta in omega.

    Raises ZeroMass when the integral of dsigma over omega is below 1e-300.
    """
    x = float(x)
    y = float(y)

    def evaluate(n):
        log_mass, ratio = _log_mass_and_ratio(scn, omega, x, y, n)
        if log_mass < LOG_TINY:
            raise ZeroMass(omega, x, y)
        return ratio

    return refined(evaluate, cfg)


def posterior_density(scn: Scenario, omega: SubsetOmega, theta, x, y,
                      cfg: QuadratureConfig = DEFAULT):
    """Density of theta given (x, y) and theta in omega; zero outside omega."""
    log_mass = log_posterior_mass(scn, omega, x, y, cfg)
    if log_mass < LOG_TINY:
        raise ZeroMass(omega, x, y)
    theta = np.asarray(theta, dtype=float)
    dens = np.exp(log_sigma(scn, theta, x, y) - log_mass)
    return np.where(omega.contains(theta), dens, 0.0)


def posterior_expectation_batch(scn: Scenario, omega: SubsetOmega, xs, ys,
                                cfg: QuadratureConfig = DEFAULT,
                                zero_mass: str = "raise",
                                chunk: int = 4096) -> np.ndarray:
    """Vectorized m_omega over many criteria points.

    ``zero_mass="nan"`` returns NaN for points without posterior mass
    instead of raising.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.shape != ys.shape:
        raise ValueError("xs and ys must have the same length")

    def evaluate(n):
        t, w = region_nodes(omega, n)
        out = np.empty(xs.size)
        mass_ok = np.empty(xs.size, dtype=bool)
        for start in range(0, xs.size, chunk):
            sl = slice(start, start + chunk)
            xc = xs[sl, None]
            yc = ys[sl, None]
            ls = log_sigma(scn, t[None, :], xc, yc)
            top = np.max(ls, axis=1, keepdims=True)
            shifted = w * np.exp(ls - top)
            denom = shifted.sum(axis=1)
            m = np.broadcast_to(eval_mean(scn.mean, t[None, :], xc, yc), shifted.shape)
            out[sl] = np.einsum("ij,ij->i", shifted, m) / denom
            with np.errstate(divide="ignore"):
                mass_ok[sl] = top[:, 0] + np.log(denom) >= LOG_TINY
        if not mass_ok.all():
            if zero_mass == "raise":
                i = int(np.argmin(mass_ok))
                raise ZeroMass(omega, float(xs[i]), float(ys[i]))
            out[~mass_ok] = np.nan
        return out

    result = refined(evaluate, cfg)
    if not np.all(np.isfinite(result[~np.isnan(result)])):
        raise EvaluationError("non-finite posterior expectation")
    return result
