"""Modulability diagnostics.

Two independent routes answer "is this risk modulable by the scale f?":

* ``check_modulability`` prices random portfolios at pairs of criteria
  points lying on the same level set of f and measures the premium gap;
* ``check_theorem_conditions`` measures, on grids, how far the scenario is
  from the three structural conditions (semilinear scale, exponential
  family criteria sharing one natural parameter, mean affine in the scale)
  together with the psi/phi identities they imply.

The double-integral functionals F and F1 are provided both factorized
and as a direct tensor-product quadrature.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .bayes import log_sigma, posterior_expectation_batch
from .errors import (
    DivergentPartial,
    InsufficientCoverage,
    LevelSetExhausted,
    MeanShapeError,
    ZeroMass,
)
from .model import (
    PARTIAL_FLOOR,
    Scenario,
    ScaleFunction,
    SubsetOmega,
    eval_mean,
    eval_mean_dx,
    eval_mean_dy,
    eval_scale,
    eval_scale_dx,
    eval_scale_dy,
    eval_scale_dxdy,
    grid,
    inverse_partials,
    log_density_dx,
    mixed_log_derivative,
)
from .quadrature import DEFAULT, LOG_TINY, QuadratureConfig, refined, region_nodes

log = logging.getLogger(__name__)

LEVEL_TOL = 1e-10
BISECTION_STEPS = 40
MAX_ATTEMPTS = 50
MIN_FRACTION = 0.05

CONDITIONS = ("semilinearity", "exponential_family", "psi_theta", "phi", "mean_affine")


@dataclass(frozen=True)
class DiagnosticsConfig:
    n_subsets: int = 50
    n_pairs: int = 20
    grid: int = 15
    tol_modulable: float = 1e-6
    tol_condition: float = 1e-5
    rng_seed: int = 0
    # extra level-set pairs priced on the full support, e.g. known witnesses
    probe_pairs: tuple = ()
    quad: QuadratureConfig = DEFAULT

    def __post_init__(self):
        if min(self.n_subsets, self.n_pairs, self.grid) < 1:
            raise ValueError("n_subsets, n_pairs and grid must be >= 1")
        if self.tol_modulable <= 0 or self.tol_condition <= 0:
            raise ValueError("tolerances must be > 0")


# --- psi and phi ---------------------------------------------------------

def psi(scn: Scenario, theta, x, y):
    """(f'_x)^-1 g'/g - (f'_y)^-1 h'/h."""
    ifx, ify = inverse_partials(scn.scale, x, y)
    return ifx * log_density_dx(scn.family_x, x, theta) - ify * log_density_dx(scn.family_y, y, theta)


def psi_dtheta(scn: Scenario, theta, x, y):
    """Theta-derivative of psi, through the mixed log-derivatives."""
    ifx, ify = inverse_partials(scn.scale, x, y)
    return (ifx * mixed_log_derivative(scn.family_x, x, theta)
            - ify * mixed_log_derivative(scn.family_y, y, theta))


def phi(scn: Scenario, theta, x, y):
    """(f'_x)^-1 m'_x - (f'_y)^-1 m'_y."""
    ifx, ify = inverse_partials(scn.scale, x, y)
    return ifx * eval_mean_dx(scn.mean, theta, x, y) - ify * eval_mean_dy(scn.mean, theta, x, y)


# --- the F functionals ---------------------------------------------------

def _node_values(scn, omega, x, y, n):
    t, w = region_nodes(omega, n)
    ls = log_sigma(scn, t, x, y)
    if np.max(ls) + np.log(np.sum(w * np.exp(ls - np.max(ls)))) < LOG_TINY:
        raise ZeroMass(omega, x, y)
    ws = w * np.exp(ls)
    m = np.broadcast_to(eval_mean(scn.mean, t, x, y), t.shape)
    ps = np.broadcast_to(psi(scn, t, x, y), t.shape)
    return t, ws, m, ps


def F_factorized(scn: Scenario, omega: SubsetOmega, x, y, cfg: QuadratureConfig = DEFAULT) -> float:
    """A*B - C*D with A = int m, B = int psi, C = int (m psi + phi), D = int 1, all d sigma."""

    def evaluate(n):
        t, ws, m, ps = _node_values(scn, omega, x, y, n)
        ph = np.broadcast_to(phi(scn, t, x, y), t.shape)
        A = ws @ m
        B = ws @ ps
        C = ws @ (m * ps + ph)
        D = ws.sum()
        return np.array([A, B, C, D])

    A, B, C, D = refined(evaluate, cfg)
    return float(A * B - C * D)


def F_direct(scn: Scenario, omega: SubsetOmega, x, y, cfg: QuadratureConfig = DEFAULT) -> float:
    """Double integral of m(t)[psi(t1) - psi(t)] + phi(t) over omega x omega."""

    def evaluate(n):
        t, ws, m, ps = _node_values(scn, omega, x, y, n)
        ph = np.broadcast_to(phi(scn, t, x, y), t.shape)
        kernel = m[:, None] * (ps[None, :] - ps[:, None]) + ph[:, None]
        return float(ws @ kernel @ ws)

    return refined(evaluate, cfg)


def _require_no_y(scn, x, y):
    th = grid(scn.theta_support, 9)
    ys = grid(scn.y_support, 9)
    dy = eval_mean_dy(scn.mean, th[:, None], x, ys[None, :])
    if np.max(np.abs(dy)) > PARTIAL_FLOOR:
        raise MeanShapeError("F1 needs a mean m(theta, x) that does not depend on y")


def F1(scn: Scenario, omega: SubsetOmega, x, y, cfg: QuadratureConfig = DEFAULT) -> float:
    """Variant of F when (R, X) is independent of Y given theta, factorized.

    A'*B - C'*D with A' = int m, C' = int (m psi + m'_x / f'_x).
    """
    _require_no_y(scn, x, y)
    ifx, _ = inverse_partials(scn.scale, x, y)

    def evaluate(n):
        t, ws, m, ps = _node_values(scn, omega, x, y, n)
        mx = np.broadcast_to(eval_mean_dx(scn.mean, t, x, y), t.shape)
        return np.array([ws @ m, ws @ ps, ws @ (m * ps + ifx * mx), ws.sum()])

    A, B, C, D = refined(evaluate, cfg)
    return float(A * B - C * D)


def F1_direct(scn: Scenario, omega: SubsetOmega, x, y, cfg: QuadratureConfig = DEFAULT) -> float:
    """Tensor-product form of F1."""
    _require_no_y(scn, x, y)
    ifx, _ = inverse_partials(scn.scale, x, y)

    def evaluate(n):
        t, ws, m, ps = _node_values(scn, omega, x, y, n)
        mx = np.broadcast_to(eval_mean_dx(scn.mean, t, x, y), t.shape)
        kernel = m[:, None] * (ps[None, :] - ps[:, None]) - ifx * mx[:, None]
        return float(ws @ kernel @ ws)

    return refined(evaluate, cfg)


# --- sampling portfolios and level-set pairs -----------------------------

def sample_subsets(prior_support, n: int, rng_seed) -> list[SubsetOmega]:
    """``n`` random unions of 1-3 disjoint intervals, each >= 5% of the support."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = (float(v) for v in prior_support)
    width = hi - lo
    min_len = MIN_FRACTION * width
    rng = np.random.default_rng(rng_seed)
    out = []
    while len(out) < n:
        k = int(rng.integers(1, 4))
        for _ in range(1000):
            cuts = np.sort(rng.uniform(lo, hi, size=2 * k))
            ivs = cuts.reshape(k, 2)
            if np.all(ivs[:, 1] - ivs[:, 0] >= min_len) and np.all(ivs[1:, 0] > ivs[:-1, 1]):
                out.append(SubsetOmega(tuple(map(tuple, ivs))))
                break
        else:
            continue
    return out


def _bisect(g, a, b, ga, gb):
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (a + b)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm > 0) == (ga > 0):
            a, ga = mid, gm
        else:
            b, gb = mid, gm
    return a if abs(ga) <= abs(gb) else b


def level_set_pairs(scale: ScaleFunction, box, n: int, rng_seed) -> list[tuple]:
    """Pairs of distinct points with equal scale value, found by bisection in y.

    ``box`` is ``(x_support, y_support)``.
    """
    (xlo, xhi), (ylo, yhi) = box
    rng = np.random.default_rng(rng_seed)
    pairs = []
    for _ in range(n):
        for _attempt in range(MAX_ATTEMPTS):
            x1 = rng.uniform(xlo, xhi)
            y1 = rng.uniform(ylo, yhi)
            x2 = rng.uniform(xlo, xhi)
            target = float(eval_scale(scale, x1, y1))

            def g(y, x2=x2, target=target):
                return float(eval_scale(scale, x2, y)) - target

            ga, gb = g(ylo), g(yhi)
            if ga == 0.0:
                y2 = ylo
            elif gb == 0.0:
                y2 = yhi
            elif (ga > 0) == (gb > 0):
                continue
            else:
                y2 = _bisect(g, ylo, yhi, ga, gb)
            if abs(g(y2)) <= LEVEL_TOL and (x1, y1) != (x2, y2):
                pairs.append(((x1, y1), (x2, y2)))
                break
        else:
            raise LevelSetExhausted(
                f"no level-set partner found after {MAX_ATTEMPTS} attempts; "
                "the scale's level sets rarely cross the box"
            )
    return pairs


# --- report --------------------------------------------------------------

@dataclass
class Witness:
    omega: list
    p1: tuple
    p2: tuple
    m1: float
    m2: float
    discrepancy: float


@dataclass
class DiagnosticsReport:
    scenario: str = ""
    # theorem conditions
    semilinearity_residual: float | None = None
    expfam_residual_x: float | None = None
    expfam_residual_y: float | None = None
    psi_theta_residual: float | None = None
    phi_residual: float | None = None
    mean_affine_residual: float | None = None
    conditions: dict = field(default_factory=dict)
    skip_fraction: float | None = None
    psi_lambda: list = field(default_factory=list)
    # F sweep
    F_values: list = field(default_factory=list)
    # modulability
    modulable: bool | None = None
    max_discrepancy: float | None = None
    worst_witness: Witness | None = None
    probes: list = field(default_factory=list)
    n_evaluated: int = 0
    n_skipped: int = 0

    @property
    def expfam_residual(self):
        if self.expfam_residual_x is None:
            return None
        return max(self.expfam_residual_x, self.expfam_residual_y)

    @property
    def all_conditions_pass(self) -> bool:
        return bool(self.conditions) and all(c["pass"] for c in self.conditions.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["expfam_residual"] = self.expfam_residual
        return {"format": 1, **d}


# --- modulability checker -------------------------------------------------

def _discrepancies(scn, omega, pairs, cfg):
    pts = np.array([p for pair in pairs for p in pair], dtype=float)
    m = posterior_expectation_batch(scn, omega, pts[:, 0], pts[:, 1], cfg.quad, zero_mass="nan")
    m1, m2 = m[0::2], m[1::2]
    return m1, m2, np.abs(m1 - m2)


def check_modulability(scn: Scenario, cfg: DiagnosticsConfig = DiagnosticsConfig(),
                       report: DiagnosticsReport | None = None) -> DiagnosticsReport:
    """Largest premium gap between equal-scale points over sampled portfolios."""
    report = report or DiagnosticsReport(scenario=scn.name)
    box = (scn.x_support, scn.y_support)
    worst = None
    n_eval = n_skip = 0
    omegas = sample_subsets(scn.theta_support, cfg.n_subsets, cfg.rng_seed)
    for i, omega in enumerate(omegas):
        pairs = level_set_pairs(scn.scale, box, cfg.n_pairs, [cfg.rng_seed, i + 1])
        m1, m2, delta = _discrepancies(scn, omega, pairs, cfg)
        ok = np.isfinite(delta)
        n_eval += int(ok.sum())
        n_skip += int((~ok).sum())
        if ok.any():
            j = int(np.nanargmax(np.where(ok, delta, -1.0)))
            if worst is None or delta[j] > worst.discrepancy:
                worst = Witness([list(iv) for iv in omega.intervals], pairs[j][0], pairs[j][1],
                                float(m1[j]), float(m2[j]), float(delta[j]))
    if n_skip > n_eval:
        raise InsufficientCoverage(
            f"{n_skip} of {n_skip + n_eval} level-set pairs carried no posterior mass"
        )
    probes = []
    if cfg.probe_pairs:
        full = scn.omega_full
        pairs = [tuple(tuple(map(float, p)) for p in pair) for pair in cfg.probe_pairs]
        m1, m2, delta = _discrepancies(scn, full, pairs, cfg)
        for pair, a, b, d in zip(pairs, m1, m2, delta):
            w = Witness([list(iv) for iv in full.intervals], pair[0], pair[1],
                        float(a), float(b), float(d))
            probes.append(w)
            if np.isfinite(d) and (worst is None or d > worst.discrepancy):
                worst = w
    report.probes = probes
    report.worst_witness = worst
    report.max_discrepancy = worst.discrepancy if worst else 0.0
    report.modulable = report.max_discrepancy <= cfg.tol_modulable
    report.n_evaluated = n_eval
    report.n_skipped = n_skip
    log.info("modulability: max gap %.3e over %d pairs (%d skipped)",
             report.max_discrepancy, n_eval, n_skip)
    return report


# --- theorem conditions ---------------------------------------------------

def rank_one_residual(M: np.ndarray) -> float:
    """Largest |2x2 minor| of M divided by max|M|^2; zero iff M has rank <= 1."""
    scale = np.max(np.abs(M))
    if scale == 0.0:
        return 0.0
    A = M / scale
    minors = A[:, None, :, None] * A[None, :, None, :] - A[:, None, None, :] * A[None, :, :, None]
    return float(np.max(np.abs(minors)))


def check_theorem_conditions(scn: Scenario, cfg: DiagnosticsConfig = DiagnosticsConfig(),
                             report: DiagnosticsReport | None = None) -> DiagnosticsReport:
    """Grid residuals for the structural conditions behind modulability."""
    report = report or DiagnosticsReport(scenario=scn.name)
    th = grid(scn.theta_support, cfg.grid)
    xs = grid(scn.x_support, cfg.grid)
    ys = grid(scn.y_support, cfg.grid)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")

    report.semilinearity_residual = float(np.max(np.abs(eval_scale_dxdy(scn.scale, gx, gy))))

    Mx = mixed_log_derivative(scn.family_x, xs[None, :], th[:, None])
    My = mixed_log_derivative(scn.family_y, ys[None, :], th[:, None])
    report.expfam_residual_x = rank_one_residual(np.broadcast_to(Mx, (th.size, xs.size)))
    report.expfam_residual_y = rank_one_residual(np.broadcast_to(My, (th.size, ys.size)))

    fx = eval_scale_dx(scn.scale, gx, gy)
    fy = eval_scale_dy(scn.scale, gx, gy)
    ok = (np.abs(fx) >= PARTIAL_FLOOR) & (np.abs(fy) >= PARTIAL_FLOOR)
    report.skip_fraction = float(1.0 - ok.mean())
    if not ok.any():
        raise DivergentPartial("x/y", "every grid point")
    px, py = gx[ok], gy[ok]
    T = th[:, None]
    psi_vals = psi(scn, T, px[None, :], py[None, :])
    report.psi_theta_residual = float(np.max(np.abs(psi_dtheta(scn, T, px[None, :], py[None, :]))))
    report.phi_residual = float(np.max(np.abs(phi(scn, T, px[None, :], py[None, :]))))
    report.psi_lambda = [
        {"x": float(a), "y": float(b), "lambda": float(np.mean(col)), "spread": float(np.ptp(col))}
        for a, b, col in zip(px, py, np.broadcast_to(psi_vals, (th.size, px.size)).T)
    ]

    ifx, ify = 1.0 / fx[ok], 1.0 / fy[ok]
    slope_x = np.broadcast_to(eval_mean_dx(scn.mean, T, px[None, :], py[None, :]) * ifx,
                              (th.size, px.size))
    slope_y = np.broadcast_to(eval_mean_dy(scn.mean, T, px[None, :], py[None, :]) * ify,
                              (th.size, px.size))
    report.mean_affine_residual = float(
        np.max(np.abs(slope_x - slope_y)) + np.max(np.var(slope_x, axis=1))
    )

    residuals = {
        "semilinearity": report.semilinearity_residual,
        "exponential_family": report.expfam_residual,
        "psi_theta": report.psi_theta_residual,
        "phi": report.phi_residual,
        "mean_affine": report.mean_affine_residual,
    }
    report.conditions = {
        name: {"residual": r, "tol": cfg.tol_condition, "pass": bool(r <= cfg.tol_condition)}
        for name, r in residuals.items()
    }
    return report


def F_sweep(scn: Scenario, cfg: DiagnosticsConfig = DiagnosticsConfig(),
                 report: DiagnosticsReport | None = None) -> DiagnosticsReport:
    """F over sampled portfolios and a 3x3 grid of criteria at box quartiles."""
    report = report or DiagnosticsReport(scenario=scn.name)
    qs = (0.25, 0.5, 0.75)
    (xlo, xhi), (ylo, yhi) = scn.x_support, scn.y_support
    points = [(xlo + a * (xhi - xlo), ylo + b * (yhi - ylo)) for a in qs for b in qs]
    values = []
    for omega in sample_subsets(scn.theta_support, cfg.n_subsets, cfg.rng_seed):
        for x, y in points:
            try:
                val = F_factorized(scn, omega, x, y, cfg.quad)
            except (ZeroMass, DivergentPartial):
                continue
            values.append({"omega": [list(iv) for iv in omega.intervals], "x": x, "y": y, "F": val})
    report.F_values = values
    return report


def diagnose(scn: Scenario, cfg: DiagnosticsConfig = DiagnosticsConfig()) -> DiagnosticsReport:
    report = DiagnosticsReport(scenario=scn.name)
    check_theorem_conditions(scn, cfg, report)
    check_modulability(scn, cfg, report)
    F_sweep(scn, cfg, report)
    return report
