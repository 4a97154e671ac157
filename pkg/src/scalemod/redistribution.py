"""Organisms sharing a population under a fixed tariff.

A population is sampled from the scenario, split among ``k`` organisms,
and each individual pays the premium set by the authority's rule.  Each
organism's account compares what it collects with the expected cost of
its members; a systematic gap is the advantage or penalty conferred by
the scale.

Random numbers are counter-based: individual ``j`` of stream ``s`` always
consumes Philox block ``j`` under key ``(seed, s)``, so a population is a
pure function of the seed and the individual index.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .bayes import posterior_expectation_batch
from .errors import TabulationError
from .model import Scenario, eval_log_density, eval_mean, eval_scale
from .quadrature import gauss_legendre

CDF_POINTS = 1024
THETA_NODES = 64
CELL_NODES = 4

STREAM_POPULATION = 0
STREAM_CALIBRATION = 1
STREAM_ASSIGNMENT = 2

CLAIM_MODELS = ("deterministic_mean", "gamma_noise")
ASSIGNMENT_RULES = ("random", "theta_stratified", "x_stratified")
PREMIUM_KINDS = ("global_bayes", "scale_table", "flat")


@dataclass(frozen=True)
class PopulationConfig:
    n_individuals: int = 10_000
    rng_seed: int = 0
    claim_model: str = "deterministic_mean"
    cv: float = 0.5
    # condition x and y on each individual's own theta instead of the nearest table node
    exact_conditioning: bool = False

    def __post_init__(self):
        if self.n_individuals < 1:
            raise ValueError("n_individuals must be >= 1")
        if self.claim_model not in CLAIM_MODELS:
            raise ValueError(f"claim_model must be one of {CLAIM_MODELS}")
        if self.claim_model == "gamma_noise" and not self.cv > 0:
            raise ValueError("cv must be > 0 for gamma_noise")


@dataclass(frozen=True)
class OrganismAssignment:
    k: int = 5
    rule: str = "random"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.rule not in ASSIGNMENT_RULES:
            raise ValueError(f"rule must be one of {ASSIGNMENT_RULES}")


@dataclass(frozen=True)
class PremiumRule:
    kind: str = "global_bayes"
    bins: int = 20
    # size of the independent sample the tariff is fitted on
    calibration_n: int = 10_000

    def __post_init__(self):
        if self.kind not in PREMIUM_KINDS:
            raise ValueError(f"premium kind must be one of {PREMIUM_KINDS}")
        if self.bins < 1 or self.calibration_n < 1:
            raise ValueError("bins and calibration_n must be >= 1")


@dataclass
class Population:
    theta: np.ndarray
    x: np.ndarray
    y: np.ndarray
    expected: np.ndarray
    claim: np.ndarray

    def __len__(self):
        return self.theta.size


# --- counter-based uniforms ------------------------------------------------

def uniforms(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """(count, 4) uniforms in (0, 1) for individuals start .. start+count-1."""
    bitgen = np.random.Philox(key=[int(seed) % 2**64, int(stream)])
    if start:
        bitgen.advance(int(start))
    raw = bitgen.random_raw(4 * int(count)).reshape(-1, 4)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


# --- tabulated inverse CDFs ----------------------------------------------

def cdf_tables(log_density, lo: float, hi: float, rows: int):
    """Quadrature-tabulated CDFs on ``CDF_POINTS`` equally spaced abscissae.

    ``log_density(z)`` gets z of shape (1, m) and returns (rows, m); each
    cell mass is a ``CELL_NODES``-point Gauss-Legendre estimate.
    """
    edges = np.linspace(lo, hi, CDF_POINTS)
    u, w = gauss_legendre(CELL_NODES)
    half = 0.5 * np.diff(edges)
    z = (edges[:-1, None] + half[:, None] * (u[None, :] + 1.0)).ravel()
    ls = np.broadcast_to(np.asarray(log_density(z[None, :]), dtype=float), (rows, z.size))
    top = np.max(ls, axis=1, keepdims=True)
    dens = np.exp(ls - top).reshape(rows, -1, CELL_NODES)
    mass = np.einsum("rck,k->rc", dens, w) * half[None, :]
    if not np.all(np.isfinite(mass)) or np.any(mass < 0):
        raise TabulationError("negative or non-finite density while tabulating a CDF")
    cdf = np.concatenate([np.zeros((rows, 1)), np.cumsum(mass, axis=1)], axis=1)
    if np.any(cdf[:, -1] <= 0):
        raise TabulationError("density has no mass on its support")
    cdf /= cdf[:, -1:]
    if np.any(np.diff(cdf, axis=1) < 0):
        raise TabulationError("CDF table is not monotone")
    return edges, cdf


def _sample_theta(scn, u):
    lo, hi = scn.theta_support
    edges, cdf = cdf_tables(lambda z: scn.prior.log_pdf(z), lo, hi, 1)
    return np.interp(u, cdf[0], edges)


def _sample_criterion(scn, family, theta, u, exact):
    lo, hi = family.support
    out = np.empty_like(theta)
    if exact:
        chunk = 256
        for start in range(0, theta.size, chunk):
            th = theta[start:start + chunk, None]
            edges, cdf = cdf_tables(lambda z: eval_log_density(family, z, th), lo, hi, th.shape[0])
            for i in range(th.shape[0]):
                out[start + i] = np.interp(u[start + i], cdf[i], edges)
        return out
    tlo, thi = scn.theta_support
    nodes = np.linspace(tlo, thi, THETA_NODES)
    edges, cdf = cdf_tables(
        lambda z: eval_log_density(family, z, nodes[:, None]), lo, hi, THETA_NODES
    )
    idx = np.clip(np.rint((theta - tlo) / (nodes[1] - nodes[0])).astype(int), 0, THETA_NODES - 1)
    for k in np.unique(idx):
        sel = idx == k
        out[sel] = np.interp(u[sel], cdf[k], edges)
    return out


def sample_population(scn: Scenario, pop_cfg: PopulationConfig,
                      stream: int = STREAM_POPULATION) -> Population:
    """Draw theta from the prior and (x, y) given theta by tabulated inverse CDFs."""
    u = uniforms(pop_cfg.rng_seed, stream, 0, pop_cfg.n_individuals)
    theta = _sample_theta(scn, u[:, 0])
    x = _sample_criterion(scn, scn.family_x, theta, u[:, 1], pop_cfg.exact_conditioning)
    y = _sample_criterion(scn, scn.family_y, theta, u[:, 2], pop_cfg.exact_conditioning)
    expected = np.asarray(eval_mean(scn.mean, theta, x, y), dtype=float) + np.zeros_like(theta)
    if pop_cfg.claim_model == "deterministic_mean":
        claim = expected.copy()
    else:
        # mean-one gamma multiplier, so E[claim] = m for either sign of m
        shape = 1.0 / pop_cfg.cv ** 2
        claim = expected * stats.gamma.ppf(u[:, 3], a=shape, scale=1.0 / shape)
    return Population(theta, x, y, expected, claim)


# --- tariffs ------------------------------------------------------------

@dataclass(frozen=True)
class ScaleTariff:
    """Piecewise-constant premium as a function of the scale value."""

    edges: tuple[float, ...]
    premiums: tuple[float, ...]

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        e = np.asarray(self.edges)
        idx = np.clip(np.searchsorted(e, f, side="right") - 1, 0, len(self.premiums) - 1)
        return np.asarray(self.premiums)[idx]

    @property
    def centers(self) -> np.ndarray:
        e = np.asarray(self.edges)
        return 0.5 * (e[1:] + e[:-1])


def global_premiums(scn: Scenario, x, y, cfg=None) -> np.ndarray:
    """m over the full support at each (x, y)."""
    kwargs = {} if cfg is None else {"cfg": cfg}
    return posterior_expectation_batch(scn, scn.omega_full, x, y, **kwargs)


def fit_scale_table(scn: Scenario, calibration: Population, bins: int) -> ScaleTariff:
    """Equal-width bins over the observed scale range; bin premium = mean of m_Theta."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if len(calibration) == 0:
        raise ValueError("calibration sample is empty")
    f = np.asarray(eval_scale(scn.scale, calibration.x, calibration.y), dtype=float)
    m = global_premiums(scn, calibration.x, calibration.y)
    lo, hi = float(f.min()), float(f.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, f, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    sums = np.bincount(idx, weights=m, minlength=bins)
    filled = np.flatnonzero(counts)
    premiums = np.empty(bins)
    premiums[filled] = sums[filled] / counts[filled]
    for b in np.flatnonzero(counts == 0):
        nearest = filled[np.argmin(np.abs(filled - b))]
        premiums[b] = premiums[nearest]
    return ScaleTariff(tuple(edges.tolist()), tuple(premiums.tolist()))


def premiums_for(scn: Scenario, pop: Population, rule: PremiumRule, seed: int) -> np.ndarray:
    if rule.kind == "global_bayes":
        return global_premiums(scn, pop.x, pop.y)
    calib = sample_population(
        scn, PopulationConfig(rule.calibration_n, seed), stream=STREAM_CALIBRATION
    )
    bins = rule.bins if rule.kind == "scale_table" else 1
    tariff = fit_scale_table(scn, calib, bins)
    return tariff(eval_scale(scn.scale, pop.x, pop.y))


# --- organisms ------------------------------------------------------------

def assign_organisms(pop: Population, assignment: OrganismAssignment, seed: int) -> np.ndarray:
    """Organism id per individual; stratified rules give equal-sized rank bands."""
    n = len(pop)
    k = assignment.k
    if assignment.rule == "random":
        u = uniforms(seed, STREAM_ASSIGNMENT, 0, n)[:, 0]
        return np.minimum((u * k).astype(int), k - 1)
    key = pop.theta if assignment.rule == "theta_stratified" else pop.x
    order = np.argsort(key, kind="stable")
    ids = np.empty(n, dtype=int)
    ids[order] = (np.arange(n) * k) // n
    return ids


@dataclass
class OrganismAccount:
    organism: int
    members: int
    collected: float
    collected_gross: float
    expected_cost: float
    realized_cost: float
    imbalance: float
    relative_imbalance: float


@dataclass
class RedistributionOutcome:
    organisms: list[OrganismAccount]
    total_collected: float
    total_expected_cost: float
    total_realized_cost: float
    total_imbalance: float
    relative_imbalance: float
    distortion_index: float
    n_individuals: int


def _relative(imbalance, gross):
    return imbalance / gross if gross > 0 else (0.0 if imbalance == 0 else math.inf)


def account(ids: np.ndarray, premiums, expected, realized, k: int) -> RedistributionOutcome:
    """Aggregate individual premiums and costs into per-organism accounts."""
    accounts = []
    for i in range(k):
        sel = ids == i
        collected = math.fsum(premiums[sel])
        gross = math.fsum(np.abs(premiums[sel]))
        exp_cost = math.fsum(expected[sel])
        imbalance = collected - exp_cost
        accounts.append(OrganismAccount(
            organism=i,
            members=int(sel.sum()),
            collected=collected,
            collected_gross=gross,
            expected_cost=exp_cost,
            realized_cost=math.fsum(realized[sel]),
            imbalance=imbalance,
            relative_imbalance=_relative(imbalance, gross),
        ))
    total_collected = math.fsum(a.collected for a in accounts)
    total_expected = math.fsum(a.expected_cost for a in accounts)
    total_gross = math.fsum(a.collected_gross for a in accounts)
    total_imbalance = total_collected - total_expected
    return RedistributionOutcome(
        organisms=accounts,
        total_collected=total_collected,
        total_expected_cost=total_expected,
        total_realized_cost=math.fsum(a.realized_cost for a in accounts),
        total_imbalance=total_imbalance,
        relative_imbalance=_relative(total_imbalance, total_gross),
        distortion_index=max(abs(a.relative_imbalance) for a in accounts),
        n_individuals=int(ids.size),
    )


def simulate(scn: Scenario, pop_cfg: PopulationConfig, assignment: OrganismAssignment,
             premium_rule: PremiumRule) -> RedistributionOutcome:
    pop = sample_population(scn, pop_cfg)
    ids = assign_organisms(pop, assignment, pop_cfg.rng_seed)
    premiums = premiums_for(scn, pop, premium_rule, pop_cfg.rng_seed)
    return account(ids, np.asarray(premiums, dtype=float), pop.expected, pop.claim, assignment.k)


# --- reporting ------------------------------------------------------------

CSV_FIELDS = (
    "organism", "members", "collected", "collected_gross", "expected_cost",
    "realized_cost", "imbalance", "relative_imbalance",
)


def distortion_report(outcome: RedistributionOutcome) -> dict:
    """JSON-ready summary, organisms ordered by id."""
    orgs = sorted(outcome.organisms, key=lambda a: a.organism)
    body = asdict(outcome)
    body["organisms"] = [asdict(a) for a in orgs]
    return {"format": 1, **body}


def organisms_csv(outcome: RedistributionOutcome) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for a in sorted(outcome.organisms, key=lambda a: a.organism):
        row = asdict(a)
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
