"""Command line interface.

Every subcommand reads the same JSON setup descriptor and emits JSON
(stdout or ``--out``).  Exit codes: 0 all checks pass, 2 framework
preconditions unmet or checks failed, 1 tool error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .channels import bb84_qubit_measurement
from .feasibility import choi_feasibility, verify_choi_witness
from .postprocessing import bb84_qubit_squasher, dark_count_matrix, solve_swap_lp
from .report import (
    EXIT_NOT_REDUCIBLE,
    EXIT_OK,
    EXIT_TOOL_ERROR,
    DescriptorError,
    canonical_json,
    emit_certificate,
    load_descriptor,
    run_analysis,
    run_weight,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detcert",
        description=(
            "Construct and certify the post-processing maps and noise channels "
            "that reduce an imperfect threshold-detector setup to an ideal one."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("analyze", "run the full build/squash/channel/certify pipeline"),
        ("swap-lp", "solve the swap equation for the dark-count post-processing"),
        ("verify-channel", "construct the noise channels and report residuals"),
        ("weight", "bound the weight outside the preserved blocks"),
        ("choi-check", "probe noise-channel existence via Choi feasibility"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("descriptor", help="path to the JSON setup descriptor")
        cmd.add_argument("--tol", type=float, default=None, help="certification tolerance")
        cmd.add_argument("--seed", type=int, default=None, help="seed override")
        cmd.add_argument("--eta-star", type=float, default=None, help="common efficiency")
        cmd.add_argument(
            "--coarse-grain", choices=("none", "multiclick"), default=None,
            help="coarse graining of the click patterns",
        )
        cmd.add_argument("--out", default=None, help="output file (default stdout)")
    return parser


def _apply_overrides(desc, args):
    updates = {}
    if args.tol is not None:
        updates["tol"] = args.tol
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.eta_star is not None:
        updates["eta_star"] = args.eta_star
    if args.coarse_grain is not None:
        updates["coarse_grain"] = args.coarse_grain
    return replace(desc, **updates) if updates else desc


def _emit(payload: dict, out_path) -> None:
    text = canonical_json(payload) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w") as fh:
            fh.write(text)


def _cmd_analyze(desc, args) -> int:
    cert = run_analysis(desc)
    if args.out is None:
        _emit(cert.to_dict(), None)
    else:
        emit_certificate(cert, args.out)
    return cert.exit_code


def _cmd_swap_lp(desc, args) -> int:
    if desc.setup != "active-bb84":
        raise DescriptorError("swap-lp: supported for the active-bb84 qubit squasher")
    d_vec = np.array(desc.dark_point) if desc.dark_point is not None else desc.dark_max
    result = solve_swap_lp(dark_count_matrix(d_vec), bb84_qubit_squasher(), tol=desc.tol)
    payload = {
        "dark": d_vec.tolist(),
        "feasible": result.feasible,
        "residual": result.residual,
        "tolerance": result.tolerance,
        "matrix": result.matrix.entries.tolist() if result.matrix is not None else None,
    }
    _emit(payload, args.out)
    return EXIT_OK if result.feasible else EXIT_NOT_REDUCIBLE


def _cmd_verify_channel(desc, args) -> int:
    cert = run_analysis(desc)
    payload = {
        "checks": [c for c in cert.checks if "channel" in c["name"]],
        "status": cert.status,
        "failed_requirement": cert.failed_requirement,
    }
    _emit(payload, args.out)
    return cert.exit_code


def _cmd_weight(desc, args) -> int:
    payload = run_weight(desc)
    _emit(payload, args.out)
    return EXIT_OK


def _cmd_choi_check(desc, args) -> int:
    if desc.setup != "active-bb84":
        raise DescriptorError(
            "choi-check: supported for the active-bb84 qubit squasher "
            "(larger layouts exceed the desk-scale projection solver)"
        )
    d_vec = np.array(desc.dark_point) if desc.dark_point is not None else desc.dark_max
    result = solve_swap_lp(dark_count_matrix(d_vec), bb84_qubit_squasher(), tol=desc.tol)
    if not result.feasible:
        _emit(
            {
                "verdict": "swap equation infeasible",
                "residual": result.residual,
                "dark": d_vec.tolist(),
            },
            args.out,
        )
        return EXIT_NOT_REDUCIBLE
    payload = {"dark": d_vec.tolist(), "bases": {}}
    ok = True
    for basis in ("Z", "X"):
        povm = bb84_qubit_measurement(basis)
        feas = choi_feasibility(
            result.matrix, povm, povm, tol=desc.feas_tol, seed=desc.seed
        )
        entry = {
            "verdict": feas.verdict,
            "residual": feas.residual,
            "iterations": feas.iterations,
        }
        if feas.witness is not None:
            report = verify_choi_witness(
                feas.witness, result.matrix, povm, povm, desc.feas_tol
            )
            entry["witness_report"] = {
                "hermiticity_dev": report.hermiticity_dev,
                "psd_residual": report.psd_residual,
                "trace_preservation_dev": report.trace_preservation_dev,
                "linear_residual": report.linear_residual,
                "passed": report.passed,
            }
            ok = ok and report.passed
        else:
            ok = False
        payload["bases"][basis] = entry
    _emit(payload, args.out)
    return EXIT_OK if ok else EXIT_NOT_REDUCIBLE


_COMMANDS = {
    "analyze": _cmd_analyze,
    "swap-lp": _cmd_swap_lp,
    "verify-channel": _cmd_verify_channel,
    "weight": _cmd_weight,
    "choi-check": _cmd_choi_check,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        desc = _apply_overrides(load_descriptor(args.descriptor), args)
        return _COMMANDS[args.command](desc, args)
    except DescriptorError as exc:
        print(f"descriptor error: {exc}", file=sys.stderr)
        return EXIT_TOOL_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOOL_ERROR


if __name__ == "__main__":
    sys.exit(main())
