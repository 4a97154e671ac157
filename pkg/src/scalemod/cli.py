"""Command-line front end: check | verify | simulate | premium.

Exit codes: 0 on success (or a positive verdict), 2 when the run succeeded
but the verdict is negative, 1 on any error.  Report files are written
only when the run succeeds.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .bayes import posterior_expectation
from .config import load_scenario
from .diagnostics import (
    DiagnosticsConfig,
    check_modulability,
    check_theorem_conditions,
    F_sweep,
    DiagnosticsReport,
)
from .errors import ModulationError
from .model import SubsetOmega
from .redistribution import (
    ASSIGNMENT_RULES,
    PREMIUM_KINDS,
    OrganismAssignment,
    PopulationConfig,
    PremiumRule,
    distortion_report,
    organisms_csv,
    simulate,
)

log = logging.getLogger("scalemod")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NEGATIVE = 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors, which here means "negative verdict"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    # JSON has no inf/nan
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(payload), indent=2, default=_json_default)
    path.write_text(text + "\n", encoding="utf-8")


def _parse_pair(text: str):
    try:
        a, b = text.split(":")
        p1 = tuple(float(v) for v in a.split(","))
        p2 = tuple(float(v) for v in b.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad pair {text!r}, expected x1,y1:x2,y2") from None
    if len(p1) != 2 or len(p2) != 2:
        raise argparse.ArgumentTypeError(f"bad pair {text!r}, expected x1,y1:x2,y2")
    return (p1, p2)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _diag_cfg(args) -> DiagnosticsConfig:
    kwargs = {"rng_seed": args.seed, "probe_pairs": tuple(args.probe or ())}
    if args.tol is not None:
        kwargs["tol_modulable"] = args.tol
        kwargs["tol_condition"] = args.tol
    if args.grid is not None:
        kwargs["grid"] = args.grid
    if args.subsets is not None:
        kwargs["n_subsets"] = args.subsets
    if args.pairs is not None:
        kwargs["n_pairs"] = args.pairs
    return DiagnosticsConfig(**kwargs)


def cmd_check(args) -> int:
    scn = load_scenario(args.scenario)
    cfg = _diag_cfg(args)
    report = DiagnosticsReport(scenario=scn.name)
    check_modulability(scn, cfg, report)
    if not args.no_sweep:
        F_sweep(scn, cfg, report)
    write_json(args.out / "check_report.json", report.to_dict())
    verdict = "modulable" if report.modulable else "NOT modulable"
    print(f"{scn.name or args.scenario}: {verdict} (max gap {report.max_discrepancy:.3e})")
    return EXIT_OK if report.modulable else EXIT_NEGATIVE


def cmd_verify(args) -> int:
    scn = load_scenario(args.scenario)
    report = check_theorem_conditions(scn, _diag_cfg(args))
    payload = report.to_dict()
    write_json(args.out / "verify_report.json", payload)
    for name, c in report.conditions.items():
        print(f"{name:20s} residual={c['residual']:.3e}  {'pass' if c['pass'] else 'FAIL'}")
    return EXIT_OK if report.all_conditions_pass else EXIT_NEGATIVE


def cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario)
    claims = args.claims
    try:
        pop_cfg = PopulationConfig(
            n_individuals=args.n,
            rng_seed=args.seed,
            claim_model=claims,
            cv=args.cv,
            exact_conditioning=args.exact_conditioning,
        )
        assignment = OrganismAssignment(args.k, args.assignment)
        rule = PremiumRule(args.premium, args.bins, args.calibration_n)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    outcome = simulate(scn, pop_cfg, assignment, rule)
    summary = distortion_report(outcome)
    summary["config"] = {
        "scenario": scn.name, "n": args.n, "k": args.k, "assignment": args.assignment,
        "premium": args.premium, "bins": args.bins, "seed": args.seed, "claims": claims,
    }
    write_json(args.out / "outcome.json", summary)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "organisms.csv").write_text(organisms_csv(outcome), encoding="utf-8")
    print(f"distortion index {outcome.distortion_index:.4f} over {args.k} organisms")
    return EXIT_OK


def cmd_premium(args) -> int:
    scn = load_scenario(args.scenario)
    omega = scn.omega_full if args.omega is None else scn.check_omega(SubsetOmega.parse(args.omega))
    value = posterior_expectation(scn, omega, args.x, args.y)
    print(f"{value:.12g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="scalemod",
        description="Bayesian subset premiums and modulability checks for a fixed scale.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", type=Path, help="scenario JSON file")
    common.add_argument("--out", type=Path, default=Path("."), help="directory for reports")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=_positive_float, default=None,
                        help="pass threshold for discrepancies / residuals")
    common.add_argument("--grid", type=_positive_int, default=None, help="grid size per axis")

    diag = argparse.ArgumentParser(add_help=False)
    diag.add_argument("--subsets", type=_positive_int, default=None)
    diag.add_argument("--pairs", type=_positive_int, default=None)
    diag.add_argument("--probe", type=_parse_pair, action="append",
                      help="extra pair x1,y1:x2,y2 priced on the full support (repeatable)")

    p = sub.add_parser("check", parents=[common, diag], help="level-set modulability check")
    p.add_argument("--no-sweep", action="store_true", help="skip the F sweep")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("verify", parents=[common, diag], help="theorem-condition scorecard")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", parents=[common], help="redistribution simulation")
    p.add_argument("--n", type=_positive_int, default=10_000)
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--assignment", choices=ASSIGNMENT_RULES, default="random")
    p.add_argument("--premium", choices=PREMIUM_KINDS, default="global_bayes")
    p.add_argument("--bins", type=_positive_int, default=20)
    p.add_argument("--calibration-n", type=_positive_int, default=10_000)
    p.add_argument("--claims", choices=("deterministic_mean", "gamma_noise"),
                   default="deterministic_mean")
    p.add_argument("--cv", type=_positive_float, default=0.5, help="gamma_noise coefficient of variation")
    p.add_argument("--exact-conditioning", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("premium", parents=[common], help="print m_omega(x, y)")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--omega", default=None,
                   help='portfolio "lo:hi[,lo:hi...]" (default: full support); '
                        "write --omega=-2:0 when it starts with a minus")
    p.set_defaults(func=cmd_premium)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ModulationError, CliError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
