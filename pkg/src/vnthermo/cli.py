"""Command-line front end: ``run``, ``audit`` and ``compare`` over protocol files or builtins."""

from __future__ import annotations

import argparse
import io
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import protocol_io
from .engine import Ledger, Protocol, Step, audit, run
from .errors import ProtocolError, ProtocolParseError, StepError
from .protocols import BUILTINS, RESETS, builtin
from .qcore import TAU_EIG

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_STEP = 0, 2, 3, 4
EXIT_VIOLATION, EXIT_NONPHYSICAL, EXIT_MODES_DISAGREE = 10, 11, 1

CSV_COLUMNS = ("cycle", "step_id", "step_kind", "branch", "probability", "S_vN_system", "S_vN_joint",
               "H_cond_classical", "dS_bath", "Q", "W", "S_total_running", "flags")


def fmt(x: float) -> str:
    """12 significant digits; negative zero and sub-1e-13 noise print as 0."""
    if abs(x) < 1e-13:
        return "0"
    return f"{x:.12g}"


def ledger_csv(ledger: Ledger) -> str:
    """One row per branch then an AVG row for each (cycle, step)."""
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in ledger.rows:
        flags = ";".join(r.flags)
        labels = r.branch_labels or tuple(f"b{i}" for i in range(len(r.branches)))
        metrics = list(zip(labels, r.branches)) + [("AVG", r.avg)]
        for label, m in metrics:
            fields = [str(r.cycle), r.step_id, r.step_kind, label, fmt(m.probability), fmt(m.S_system),
                      fmt(m.S_joint), fmt(m.H_cond), fmt(m.dS_bath), fmt(m.Q), fmt(m.W),
                      fmt(r.S_total_running), flags]
            buf.write(",".join(fields) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------- argument handling

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("protocol", help="path to a JSON protocol file, or builtin:<name>")
    p.add_argument("--mode", choices=("collapse", "no-collapse"), default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--kb", type=float, default=None)
    p.add_argument("--cycles", type=int, default=None)
    p.add_argument("--reset", choices=tuple(RESETS), default=None)
    p.add_argument("--permit-infeasible-reset", action="store_true", default=False)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--w1sq", type=float, default=None, help="builtin:vn-cycle squared amplitude w1^2")
    p.add_argument("--n", type=int, default=None, help="builtin:vn-cycle particle count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vnthermo", description=__doc__)
    parser.add_argument("--list", action="store_true", help="list builtin protocols and exit")
    sub = parser.add_subparsers(dest="command")
    for name, help_ in (("run", "execute and write the ledger CSV"),
                        ("audit", "execute and audit against the second law"),
                        ("compare", "run collapse and no-collapse modes side by side")):
        _common(sub.add_parser(name, help=help_))
    return parser


def _reset_choice(args) -> str | None:
    # an explicit --reset wins; permitting an infeasible reset only makes sense with a unitary attempt
    if args.reset is not None:
        return args.reset
    if args.permit_infeasible_reset:
        return "unitary-attempt"
    return None


def load_protocol(args) -> Protocol:
    reset = _reset_choice(args)
    if args.protocol.startswith("builtin:"):
        name = args.protocol.removeprefix("builtin:")
        if name not in BUILTINS:
            raise ProtocolParseError(f"unknown builtin {args.protocol!r}")
        params = {}
        if name == "vn-cycle":
            if args.w1sq is not None:
                params["w1sq"] = args.w1sq
            if args.n is not None:
                params["n"] = args.n
        elif args.w1sq is not None or args.n is not None:
            raise ProtocolError("--w1sq and --n apply only to builtin:vn-cycle")
        else:
            params["reset"] = reset or "landauer"
        try:
            proto = builtin(name, **params)
        except ValueError as exc:
            raise ProtocolError(str(exc)) from exc
    else:
        try:
            proto = protocol_io.load(args.protocol)
        except OSError as exc:
            raise ProtocolParseError(f"{args.protocol}: {exc.strerror or exc}") from exc
        if reset is not None:
            kind = RESETS[reset]
            proto = replace(proto, steps=tuple(
                Step(kind, s.id, s.params) if s.kind in RESETS.values() else s for s in proto.steps))
    overrides = {k: getattr(args, k) for k in ("mode", "temperature", "kb", "cycles", "seed")
                 if getattr(args, k) is not None}
    if args.permit_infeasible_reset:
        overrides["permit_infeasible_reset"] = True
    try:
        proto = proto.with_config(**overrides)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(str(exc)) from exc
    proto.validate()
    return proto


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8", newline="\n")


# ---------------------------------------------------------------- commands

def cmd_run(args) -> int:
    proto = load_protocol(args)
    result = run(proto)
    _emit(ledger_csv(result.ledger), args.out)
    return EXIT_OK


def render_audit(proto: Protocol, report) -> str:
    lines = [f"protocol: {proto.name}", f"mode: {proto.config.mode}", f"cycles: {proto.config.cycles}",
             f"temperature: {fmt(proto.config.temperature)}  kb: {fmt(proto.config.kb)}"]
    c = report.closure
    lines.append(f"cycle closure: {'closed' if c.closed else 'OPEN'} "
                 f"(trace distance {c.distance:.3g}, volumes {'match' if c.volumes_match else 'differ'})")
    lines.append(f"net work extracted: {fmt(report.net_work)} kT")
    lines.append(f"net bath entropy change: {fmt(report.net_bath_entropy)} k_B")
    lines.append(f"Kelvin-Planck: {report.kelvin_planck}")
    for v in report.violations:
        lines.append(f"VIOLATION: {v}")
    for v in report.nonphysical:
        lines.append(f"NONPHYSICAL: {v}")
    lines.append(f"status: {report.status}")
    machine = {
        "protocol": proto.name,
        "mode": proto.config.mode,
        "cycles": proto.config.cycles,
        "status": report.status,
        "kelvin_planck": report.kelvin_planck,
        "closed": c.closed,
        "trace_distance": float(fmt(c.distance)),
        "net_work": float(fmt(report.net_work)),
        "net_bath_entropy": float(fmt(report.net_bath_entropy)),
        "violations": list(report.violations),
        "nonphysical": list(report.nonphysical),
        "min_margin": float(fmt(min((m for _, _, m in report.margins), default=0.0))),
    }
    lines.append("--- machine-readable ---")
    lines.append(json.dumps(machine, sort_keys=True))
    return "\n".join(lines) + "\n"


def cmd_audit(args) -> int:
    proto = load_protocol(args)
    report = audit(run(proto))
    _emit(render_audit(proto, report), args.out)
    if report.violations:
        return EXIT_VIOLATION
    if report.nonphysical:
        return EXIT_NONPHYSICAL
    return EXIT_OK


@dataclass(frozen=True)
class CompareRow:
    cycle: int
    step_id: str
    joint: tuple[float, float]
    marginal: tuple[float, float]  # branch-mean S_vN(system)
    h_cond: tuple[float, float]

    @property
    def joint_agree(self) -> bool:
        return abs(self.joint[0] - self.joint[1]) <= TAU_EIG


def compare(proto: Protocol) -> list[CompareRow]:
    a = run(proto.with_config(mode="collapse")).ledger.rows
    b = run(proto.with_config(mode="no-collapse")).ledger.rows
    return [CompareRow(x.cycle, x.step_id, (x.avg.S_joint, y.avg.S_joint),
                       (x.S_system_branch_mean, y.S_system_branch_mean), (x.avg.H_cond, y.avg.H_cond))
            for x, y in zip(a, b)]


def render_compare(rows: list[CompareRow]) -> str:
    out = [",".join(("cycle", "step_id", "S_joint_collapse", "S_joint_no_collapse", "joint_agree",
                     "S_system_collapse", "S_system_no_collapse", "H_cond_collapse", "H_cond_no_collapse"))]
    for r in rows:
        out.append(",".join((str(r.cycle), r.step_id, fmt(r.joint[0]), fmt(r.joint[1]),
                             "yes" if r.joint_agree else "NO", fmt(r.marginal[0]), fmt(r.marginal[1]),
                             fmt(r.h_cond[0]), fmt(r.h_cond[1]))))
    return "\n".join(out) + "\n"


def cmd_compare(args) -> int:
    proto = load_protocol(args)
    rows = compare(proto)
    _emit(render_compare(rows), args.out)
    return EXIT_OK if all(r.joint_agree for r in rows) else EXIT_MODES_DISAGREE


COMMANDS = {"run": cmd_run, "audit": cmd_audit, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list:
        for name in BUILTINS:
            sys.stdout.write(f"builtin:{name}\n")
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_PARSE
    try:
        return COMMANDS[args.command](args)
    except ProtocolParseError as exc:
        sys.stderr.write(f"parse error: {exc}\n")
        return EXIT_PARSE
    except ProtocolError as exc:
        sys.stderr.write(f"validation error: {exc}\n")
        return EXIT_VALIDATION
    except StepError as exc:
        sys.stderr.write(f"step error: {exc}\n")
        return EXIT_STEP


if __name__ == "__main__":
    sys.exit(main())
