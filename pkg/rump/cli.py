"""Command line front end: ``rump validate | audit | solve | reproduce ID``."""
import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path as FilePath
from typing import List, Optional

import numpy as np
import pandas as pd

from .checks import check_ae, check_negativity, check_type_a
from .custom_exceptions import (
    AssumptionFailureError,
    GuardExceededError,
    InvalidArgumentError,
    InvalidCertificateError,
    MarketSpecError,
    UnknownNodeError,
    UtilitySpecError,
)
from .dp import DynamicProgram, SolverSettings
from .market import path_str, reachable_nodes, reachable_paths, read_market
from .one_period import k_bounds
from .reproduce import EXAMPLES, reproduce
from .structure import find_h_kernel
from .utility import read_utility

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"

EXIT_OK = 0
EXIT_ASSUMPTION = 1
EXIT_SCHEMA = 2
EXIT_IO = 3
EXIT_USAGE = 4

COMMANDS = ("validate", "audit", "solve", "reproduce")

# Bracket width accepted as collapsed for usc type-(A) inputs.
COLLAPSE_TOLERANCE = 1e-6


class UsageError(Exception):
    def __init__(self, message):
        self.message = message
        super().__init__(self.message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    """One CLI run: command, inputs and numeric parameters."""

    command: str
    market: Optional[str] = None
    utility: Optional[str] = None
    x0: float = 0.0
    grid: int = 2000
    eta: Optional[float] = None
    tol: float = 1e-10
    seed: int = 0
    out: Optional[str] = None
    force: bool = False
    verbose: bool = False
    example_id: Optional[str] = None
    q: float = 0.6

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command '{self.command}'")
        if self.command != "reproduce" and (self.market is None or self.utility is None):
            raise UsageError(f"{self.command} needs --market and --utility")
        if self.command == "reproduce" and self.example_id is None:
            raise UsageError("reproduce needs an example id")
        if not self.tol > 0:
            raise UsageError("--tol must be positive")
        if self.grid < 1:
            raise UsageError("--grid must be positive")

    def settings(self) -> SolverSettings:
        return SolverSettings(resolution=self.grid, eta=self.eta, tol=self.tol, seed=self.seed)

    @classmethod
    def from_args(cls, argv: Optional[List[str]] = None) -> "RunConfig":
        args = build_parser().parse_args(argv)
        return cls(
            command=args.command,
            market=args.market,
            utility=args.utility,
            x0=args.x0,
            grid=args.grid,
            eta=args.eta,
            tol=args.tol,
            seed=args.seed,
            out=args.out,
            force=args.force,
            verbose=args.verbose,
            example_id=args.example_id,
            q=args.q,
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rump", description="Robust maxmin utility maximization on scenario trees.")
    parser.add_argument("command", choices=COMMANDS, help="what to run")
    parser.add_argument("example_id", nargs="?", default=None, help=f"for reproduce: one of {sorted(EXAMPLES)}")
    parser.add_argument("--market", help="market specification (JSON)")
    parser.add_argument("--utility", help="utility specification (JSON)")
    parser.add_argument("--x0", type=float, default=0.0, help="initial wealth (default: 0)")
    parser.add_argument("--grid", type=int, default=2000, help="grid points per basis direction (default: 2000)")
    parser.add_argument("--eta", type=float, default=None, help="override of the certificate's eta")
    parser.add_argument("--tol", type=float, default=1e-10, help="refinement tolerance (default: 1e-10)")
    parser.add_argument("--seed", type=int, default=0, help="seed of randomized sweeps (default: 0)")
    parser.add_argument("--q", type=float, default=0.6, help="up probability for reproduce ce-no-cl")
    parser.add_argument("--out", help="write the JSON report here instead of stdout")
    parser.add_argument("--force", action="store_true", help="solve even when the audit fails")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def _jsonable(value):
    if isinstance(value, pd.DataFrame):
        return _jsonable(value.to_dict(orient="records"))
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=1) + "\n"


def write_report(report: dict, out: Optional[str]) -> None:
    """Write the report to stdout, or atomically to a file."""
    text = dumps_report(report)
    if out is None:
        sys.stdout.write(text)
        return
    target = FilePath(out)
    fd, tmp = tempfile.mkstemp(dir=target.parent if str(target.parent) else ".", prefix=".rump-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _load(config: RunConfig):
    tree, priors = read_market(config.market)
    utility, assumptions = read_utility(config.utility)
    utility.validate_for(tree.terminal_paths())
    return tree, priors, utility, assumptions


def _header(config: RunConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": config.command,
        "seed": config.seed,
        "parameters": {k: v for k, v in asdict(config).items() if k not in ("command", "seed", "out", "verbose")},
    }


def cmd_validate(config: RunConfig):
    tree, priors, utility, assumptions = _load(config)
    report = _header(config)
    report.update(
        {
            "valid": True,
            "horizon": tree.horizon,
            "assets": tree.assets,
            "nodes": len(tree.nodes),
            "reachable_terminal_paths": sorted(path_str(p) for p in reachable_paths(tree, priors)),
            "ae_certificate": assumptions.certificate.to_dict() if assumptions.certificate else None,
        }
    )
    return EXIT_OK, report


def _verdict(passed: Optional[bool]) -> str:
    if passed is None:
        return "skipped"
    return "pass" if passed else "fail"


def _audit(config: RunConfig, tree, priors, utility, assumptions):
    """Assumption verdicts, the audit details and the program when one can be built."""
    terminal = sorted(reachable_paths(tree, priors))
    settings = config.settings()
    verdicts, details, messages = {}, {}, []
    search = find_h_kernel(tree, priors, n_jobs=settings.n_jobs)
    verdicts["H_nonempty"] = _verdict(search.found)
    if not search.found:
        messages.append("H-kernel not found")
        details["failing_nodes"] = [path_str(p) for p in search.failing_nodes]

    certificate = assumptions.certificate
    if certificate is not None:
        ae = check_ae(utility, certificate, terminal)
        verdicts["AE"] = _verdict(ae.passed)
        details["AE"] = ae.to_dict()
    else:
        verdicts["AE"] = _verdict(None)
        messages.append("utility has no ae_certificate")
    if certificate is not None and assumptions.x_low is not None:
        x_low = {p: assumptions.x_low_at(p) for p in terminal}
        neg = check_negativity(utility, x_low, certificate, terminal)
        verdicts["negativity"] = _verdict(neg.passed)
        details["negativity"] = neg.to_dict()
    else:
        verdicts["negativity"] = _verdict(None)
    if assumptions.c1 is not None:
        type_a = check_type_a(utility, assumptions.c1, assumptions.p_exp, terminal)
        verdicts["type_A"] = _verdict(type_a.passed)
        details["type_A"] = type_a.to_dict()
    else:
        verdicts["type_A"] = _verdict(None)

    program = None
    if search.found and certificate is not None:
        program = DynamicProgram(tree, priors, utility, certificate, kernel=search.kernel, settings=settings)
        reached = reachable_nodes(tree, priors)
        details["alpha"] = {
            path_str(p): program.alpha(p) for p in tree.non_terminal_paths() if p in reached
        }
        audit = program.audit(x_ref=1.0)
        verdicts["U0"] = _verdict(audit.u0_finite)
        verdicts["well_defined"] = _verdict(audit.well_defined)
        details["dp_audit"] = audit.to_dict()
    else:
        verdicts["U0"] = verdicts["well_defined"] = _verdict(None)
    return verdicts, details, messages, program


def _required_pass(verdicts: dict) -> bool:
    return all(verdicts[k] == "pass" for k in ("H_nonempty", "AE", "U0", "well_defined")) and verdicts["negativity"] != "fail"


def cmd_audit(config: RunConfig):
    tree, priors, utility, assumptions = _load(config)
    verdicts, details, messages, _ = _audit(config, tree, priors, utility, assumptions)
    report = _header(config)
    report.update({"verdicts": verdicts, "passed": _required_pass(verdicts), "messages": messages, "details": details})
    return EXIT_OK, report


def cmd_solve(config: RunConfig):
    tree, priors, utility, assumptions = _load(config)
    verdicts, _, messages, program = _audit(config, tree, priors, utility, assumptions)
    report = _header(config)
    report.update({"verdicts": verdicts, "messages": messages})
    passed = _required_pass(verdicts)
    if program is None or not (passed or config.force):
        report["status"] = "assumption_failure"
        return EXIT_ASSUMPTION, report
    if not passed:
        logger.warning("Solving under failed assumptions, guarantees are diagnostic only")

    policy = program.synthesize_strategy(config.x0)
    floor, bound = program.gap_bound(policy)
    u_cl, _ = program.u_cl_value((), config.x0)
    upper_estimate = program.robust_value((), config.x0)
    nodes = []
    for path in tree.non_terminal_paths():
        if path not in program.reached:
            continue
        x = policy.wealth[path]
        h = policy.positions[path]
        _, k1 = k_bounds(program.problem(path), program.constants(path), x)
        norm = float(np.linalg.norm(h))
        nodes.append({"node": path_str(path), "wealth": x, "h": h, "norm_h": norm, "K1": k1, "K1_margin": k1 - norm})
    collapsed = None
    if verdicts["type_A"] == "pass" and bound == 0:
        collapsed = bool(abs(u_cl - floor) <= COLLAPSE_TOLERANCE * max(1.0, abs(u_cl)))
        if not collapsed:
            logger.warning("Bracket did not collapse for a usc type-(A) utility: [%g, %g]", floor, u_cl)
    report.update(
        {
            "status": "ok" if passed else "forced",
            "x0": config.x0,
            "bracket": {"lower_value": floor, "u_cl_root": u_cl},
            "value_estimate": upper_estimate,
            "gap_bound": bound,
            "bracket_collapsed": collapsed,
            "policy": policy.to_dict(),
            "nodes": nodes,
            "diagnostics": program.diagnostics,
        }
    )
    return EXIT_OK, report


def cmd_reproduce(config: RunConfig):
    if config.example_id not in EXAMPLES:
        raise UsageError(f"unknown example '{config.example_id}', expected one of {sorted(EXAMPLES)}")
    claims = reproduce(config.example_id, q=config.q, settings=config.settings())
    for row in claims.itertuples():
        print(f"{'PASS' if row.passed else 'FAIL'} {row.claim}: expected {row.expected}, observed {row.observed}", file=sys.stderr)
    report = _header(config)
    report.update({"example": config.example_id, "claims": claims, "passed": bool(claims["passed"].all())})
    return (EXIT_OK if report["passed"] else EXIT_ASSUMPTION), report


HANDLERS = {"validate": cmd_validate, "audit": cmd_audit, "solve": cmd_solve, "reproduce": cmd_reproduce}


def run(config: RunConfig) -> int:
    """Run one command and write its report; returns the exit status."""
    try:
        status, report = HANDLERS[config.command](config)
    except UsageError as e:
        logger.error("%s", e.message)
        return EXIT_USAGE
    except OSError as e:
        logger.error("%s", e)
        return EXIT_IO
    except (MarketSpecError, UtilitySpecError, InvalidCertificateError, UnknownNodeError) as e:
        logger.error("%s", e.message)
        return EXIT_SCHEMA
    except (AssumptionFailureError, GuardExceededError, InvalidArgumentError) as e:
        logger.error("%s", e.message)
        return EXIT_ASSUMPTION
    try:
        write_report(report, config.out)
    except OSError as e:
        logger.error("%s", e)
        return EXIT_IO
    return status


def main(argv: Optional[List[str]] = None) -> int:
    try:
        config = RunConfig.from_args(argv)
    except UsageError as e:
        print(f"rump: {e.message}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if config.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    return run(config)
