"""Command-line front end.

Exit codes: 0 success, 2 usage / invalid input, 3 solver failure,
4 I/O error, 5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

from dpforward.accounting import (
    LedgerFormatError,
    compose_basic,
    compose_gaussian_self,
    parse_ledger,
    verify_gaussian,
)
from dpforward.errors import BracketError, ConvergenceError
from dpforward.forward import format_recall_table, run_inversion_demo
from dpforward.mechanisms import (
    MvgParams,
    PrivacyBudget,
    amgm_calibrate,
    amgm_sample,
    calibration_report,
    classical_gm_sigma,
    mvg_iid_sigma,
)
from dpforward.numerics import RandomStream, format_matrix
from dpforward.sensitivity import NOTIONS, SEQUENCE_LEVEL, SensitivityBound

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_IO = 4
EXIT_VERIFY_FAIL = 5


class _IOFailure(Exception):
    pass


def _round12(value):
    if isinstance(value, float) and math.isfinite(value):
        return float(f"{value:.12g}")
    if isinstance(value, list):
        return [_round12(v) for v in value]
    return value


def _dump_report(report: dict) -> str:
    return json.dumps({k: _round12(v) for k, v in report.items()}, indent=2) + "\n"


def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise _IOFailure(str(exc)) from exc


def _parse_epsilons(text: str):
    out = []
    for tok in text.replace(",", " ").split():
        out.append(math.inf if tok.lower() in ("inf", "infinity") else float(tok))
    return out


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="64-bit RNG seed (default 42)")
    p.add_argument("--out", default=None, help="output path (default: standard output)")
    p.add_argument("--config", default=None, help="JSON file with default values for any flag")


def _budget_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--s2", type=float, help="L2 sensitivity")
    p.add_argument("--notion", choices=NOTIONS, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpforward", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="calibrate a Gaussian mechanism")
    p.add_argument("--mechanism", choices=("amgm", "gm", "mvg"))
    _budget_flags(p)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--gamma", type=float)
    _common(p)

    p = sub.add_parser("sample", help="draw an aMGM noise matrix")
    _budget_flags(p)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    _common(p)

    p = sub.add_parser("verify", help="Monte-Carlo check of an aMGM calibration")
    _budget_flags(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--sigma-override", type=float, dest="sigma_override")
    _common(p)

    p = sub.add_parser("compose", help="compose Gaussian runs or a budget ledger")
    p.add_argument("--k", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--s2", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--ledger")
    _common(p)

    p = sub.add_parser("demo-invert", help="nearest-neighbor inversion recall vs epsilon")
    p.add_argument("--vocab", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--len", type=int, dest="length")
    p.add_argument("--epsilons", type=str)
    p.add_argument("--seeds", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--C", type=float, dest="clip_norm")
    _common(p)
    return parser


DEFAULTS = {
    "seed": 42,
    "notion": SEQUENCE_LEVEL,
    "trials": 1_000_000,
    "delta_demo": 1e-5,
    "clip_norm": 1.0,
}


def _merge_config(args, parser) -> None:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise _IOFailure(str(exc)) from exc
        except json.JSONDecodeError as exc:
            parser.error(f"bad config file: {exc}")
        for key, value in cfg.items():
            key = key.replace("-", "_")
            if key in ("len",):
                key = "length"
            if key in ("C",):
                key = "clip_norm"
            if not hasattr(args, key):
                parser.error(f"unknown config key {key!r} for {args.command}")
            if getattr(args, key) is None:
                setattr(args, key, value)
    if args.seed is None:
        args.seed = DEFAULTS["seed"]
    if getattr(args, "notion", "absent") is None:
        args.notion = DEFAULTS["notion"]


def _require(parser, args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flag_names = {"length": "len", "clip_norm": "C"}
        flags = ", ".join("--" + flag_names.get(n, n.replace("_", "-")) for n in missing)
        parser.error(f"{args.command}: missing required {flags}")


def _budget(parser, args) -> PrivacyBudget:
    try:
        return PrivacyBudget(float(args.epsilon), float(args.delta))
    except ValueError as exc:
        parser.error(str(exc))


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_calibrate(args, parser) -> int:
    _require(parser, args, "mechanism", "epsilon", "delta", "s2")
    budget = _budget(parser, args)
    if not args.s2 > 0:
        parser.error("--s2 must be positive")
    sens = SensitivityBound(args.s2, args.notion, "command line")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.mechanism == "amgm":
            calib = amgm_calibrate(sens, budget)
            sigma, B = calib.sigma, calib.B
        elif args.mechanism == "gm":
            if budget.epsilon == 0:
                parser.error("gm needs --epsilon > 0")
            sigma, B = classical_gm_sigma(args.s2, budget), None
        else:
            _require(parser, args, "n", "d", "gamma")
            if budget.epsilon == 0:
                parser.error("mvg needs --epsilon > 0")
            try:
                params = MvgParams(args.n, args.d, args.gamma, args.s2, budget)
            except ValueError as exc:
                parser.error(str(exc))
            sigma, B = mvg_iid_sigma(params), None
    notes = [str(w.message) for w in caught]
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    report = calibration_report(args.mechanism, budget, sens, sigma, B, tuple(notes))
    _emit(_dump_report(report), args.out)
    return EXIT_OK


def _amgm_from_flags(parser, args):
    _require(parser, args, "epsilon", "delta", "s2")
    budget = _budget(parser, args)
    if not args.s2 > 0:
        parser.error("--s2 must be positive")
    return amgm_calibrate(SensitivityBound(args.s2, args.notion, "command line"), budget)


def cmd_sample(args, parser) -> int:
    _require(parser, args, "rows", "cols")
    if args.rows < 1 or args.cols < 1:
        parser.error("--rows and --cols must be >= 1")
    calib = _amgm_from_flags(parser, args)
    noise = amgm_sample(calib, args.rows, args.cols, RandomStream(args.seed))
    _emit(format_matrix(noise), args.out)
    return EXIT_OK


def cmd_verify(args, parser) -> int:
    if args.trials is None:
        args.trials = DEFAULTS["trials"]
    if args.trials < 10_000:
        parser.error("--trials must be at least 10000")
    calib = _amgm_from_flags(parser, args)
    sigma = calib.sigma if args.sigma_override is None else args.sigma_override
    if not sigma > 0:
        parser.error("--sigma-override must be positive")
    result = verify_gaussian(sigma, args.s2, calib.budget, args.trials, RandomStream(args.seed))
    report = calibration_report("amgm", calib.budget, calib.sensitivity, sigma, calib.B)
    report.update(
        closed_form_delta=result.closed_form_delta,
        delta_hat=result.delta_hat,
        std_err=result.std_err,
        trials=args.trials,
        verdict=result.verdict,
    )
    _emit(_dump_report(report), args.out)
    return EXIT_OK if result.passed else EXIT_VERIFY_FAIL


def cmd_compose(args, parser) -> int:
    if args.ledger is not None:
        try:
            with open(args.ledger, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise _IOFailure(str(exc)) from exc
        try:
            ledger = parse_ledger(text)
        except LedgerFormatError as exc:
            parser.error(f"malformed ledger: {exc}")
        if not ledger.entries:
            parser.error("malformed ledger: no entries")
        total = compose_basic(ledger)
        report = {
            "epsilon": total.epsilon,
            "delta": total.delta,
            "sensitivity": None,
            "notion": None,
            "B": None,
            "sigma": None,
            "mechanism": "basic-composition",
            "warnings": [],
            "entries": len(ledger),
        }
    else:
        _require(parser, args, "k", "sigma", "s2", "delta")
        if args.k < 1 or not (args.sigma > 0 and args.s2 > 0) or not 0 < args.delta < 1:
            parser.error("need --k >= 1, positive --sigma and --s2, --delta in (0, 1)")
        eps = compose_gaussian_self(args.k, args.sigma, args.s2, args.delta)
        report = {
            "epsilon": eps,
            "delta": args.delta,
            "sensitivity": args.s2,
            "notion": None,
            "B": math.sqrt(args.k) * args.s2 / args.sigma,
            "sigma": args.sigma,
            "mechanism": "gaussian-self-composition",
            "warnings": [],
            "k": args.k,
        }
    _emit(_dump_report(report), args.out)
    return EXIT_OK


def cmd_demo_invert(args, parser) -> int:
    _require(parser, args, "vocab", "dim", "length", "epsilons", "seeds")
    try:
        eps = _parse_epsilons(str(args.epsilons))
    except ValueError:
        parser.error(f"bad --epsilons {args.epsilons!r}")
    delta = DEFAULTS["delta_demo"] if args.delta is None else args.delta
    C = DEFAULTS["clip_norm"] if args.clip_norm is None else args.clip_norm
    try:
        rows = run_inversion_demo(args.vocab, args.dim, args.length, eps, args.seeds, delta=delta, C=C, seed=args.seed)
    except ValueError as exc:
        parser.error(str(exc))
    _emit(format_recall_table(rows), args.out)
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "sample": cmd_sample,
    "verify": cmd_verify,
    "compose": cmd_compose,
    "demo-invert": cmd_demo_invert,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _merge_config(args, parser)
        return COMMANDS[args.command](args, parser)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (ConvergenceError, BracketError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
