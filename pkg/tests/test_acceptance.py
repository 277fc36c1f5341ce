"""Acceptance checks; each prints one PASS/FAIL line.

Run standalone with ``python3 tests/test_acceptance.py`` for the summary alone.
"""

import contextlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vnthermo import protocols  # noqa: E402
from vnthermo.channels import ResetProblem, unitary_reset_feasible  # noqa: E402
from vnthermo.cli import EXIT_OK, EXIT_VIOLATION, compare, main  # noqa: E402
from vnthermo.engine import Protocol, audit, run  # noqa: E402
from vnthermo.entropy import von_neumann_entropy  # noqa: E402
from vnthermo.qcore import partial_trace  # noqa: E402

import test_properties  # noqa: E402

LN2 = math.log(2)


def avg_row(result, step_id):
    row, = [r for r in result.ledger.rows if r.step_id == step_id]
    return row.avg


def cli(*argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(list(argv))
    return code, buf.getvalue()


def vn_cycle_entropy_balance():
    worst = 0.0
    for w1sq in (0.5, 0.64, 0.9):
        h = -(w1sq * math.log(w1sq) + (1 - w1sq) * math.log(1 - w1sq))
        for n in (1, 10, 1000):
            result = run(protocols.vn_cycle(n, w1sq))
            body = [r.dS_total for r in result.ledger.rows if r.step_id not in ("I-prepare", "II-measure")]
            gap = abs(math.fsum(body))
            gas = avg_row(result, "III-separate").S_system
            assert gap < 1e-9, f"w1sq={w1sq} N={n}: dS(gas+bath) over II-VII = {gap:.3g}"
            assert abs(gas - n * h) < 1e-9, f"w1sq={w1sq} N={n}: gas entropy {gas} != {n * h}"
            worst = max(worst, gap)
    return f"9 cases, max |dS| = {worst:.2g}"


def spin_marginal_rises():
    p = protocols.hs_cycle()
    before = run(Protocol(p.name, p.layout, p.steps[:1], p.config)).averaged_state()
    after = run(Protocol(p.name, p.layout, p.steps[:2], p.config)).averaged_state()
    s0 = von_neumann_entropy(partial_trace(before, {"spin"}))
    s1 = von_neumann_entropy(partial_trace(after, {"spin"}))
    assert abs(s0) < 1e-12 and abs(s1 - LN2) < 1e-12, (s0, s1)
    return f"S(spin) {s0:.6g} -> {s1:.12g}"


def location_step_both_modes():
    parts = []
    for mode in ("collapse", "no-collapse"):
        result = run(protocols.hs_cycle().with_config(mode=mode))
        sep, loc = avg_row(result, "3-separate"), avg_row(result, "4-locate")
        d_joint = loc.S_joint - sep.S_joint
        assert abs(d_joint) < 1e-9, f"{mode}: dS_joint = {d_joint}"
        assert abs(sep.H_cond - LN2) < 1e-9 and abs(loc.H_cond) < 1e-9, (mode, sep.H_cond, loc.H_cond)
        parts.append(f"{mode}: dS_joint={d_joint:.2g}, H {sep.H_cond:.6f}->{loc.H_cond:.2g}")
    return "; ".join(parts)


def amended_cycle_violation():
    for k in (1, 10, 100):
        code, out = cli("audit", "builtin:amended-cycle", "--permit-infeasible-reset", "--cycles", str(k))
        block = json.loads(out.split("--- machine-readable ---\n", 1)[1])
        assert code == EXIT_VIOLATION, f"k={k}: exit {code}"
        assert abs(block["net_work"] - k * LN2) < 1e-9, f"k={k}: W={block['net_work']}"
        assert block["closed"] and block["kelvin_planck"] == "VIOLATION", block
    return "k=1,10,100: W = k ln 2, closed, VIOLATION, exit 10"


def landauer_reset_clean():
    for k in (1, 10):
        result = run(protocols.amended_cycle("landauer").with_config(cycles=k))
        report = audit(result)
        assert abs(report.net_work) < 1e-9, report.net_work
        assert report.status == "CLEAN" and report.closure.closed, report.status
        gains = [r.avg.dS_bath for r in result.ledger.rows if r.step_id == "6d-reset"]
        assert len(gains) == k and all(abs(g - LN2) < 1e-12 for g in gains), gains
    return "net W = 0, CLEAN, reset dS_bath = ln 2 each cycle"


def reset_feasibility():
    e = np.eye(3)
    verdict = unitary_reset_feasible(ResetProblem((e[1], e[2]), (e[0], e[0])))
    assert not verdict.feasible and verdict.discrepancy == 1.0, verdict
    test_properties.test_reset_feasibility_matches_gram_oracle()
    return "{|+>,|->} -> (ready, ready) infeasible, discrepancy 1.0; 1000 random problems agree with Gram oracle"


def mode_comparison():
    code, _ = cli("compare", "builtin:hs-cycle")
    rows = compare(protocols.hs_cycle())
    assert code == EXIT_OK, code
    assert all(r.joint_agree for r in rows)
    return f"exit 0, {len(rows)} rows with agreeing joint columns"


def property_suites():
    start = time.perf_counter()
    names = ["test_subadditivity", "test_measurement_does_not_lower_entropy",
             "test_selective_outcomes_average_to_nonselective", "test_unitary_invariance",
             "test_chain_rule_quantum_and_classical"]
    for name in names:
        getattr(test_properties, name)()
    elapsed = time.perf_counter() - start
    assert elapsed < 30, f"{elapsed:.1f} s"
    return f"5 suites x {test_properties.SAMPLES} samples in {elapsed:.1f} s"


def redundancy_variant():
    base, alt = run(protocols.hs_cycle()), run(protocols.hs_cycle_record_conditioned())
    a, b = audit(base), audit(alt)
    gaps = [abs(a.net_work - b.net_work), abs(a.net_bath_entropy - b.net_bath_entropy),
            abs(base.ledger.rows[-1].S_total_running - alt.ledger.rows[-1].S_total_running)]
    assert max(gaps) < 1e-9, gaps
    return f"W, bath and total entropy agree within {max(gaps):.2g}"


CRITERIA = [
    ("1 von Neumann gas cycle entropy balance", vn_cycle_entropy_balance),
    ("2 spin marginal entropy after measurement", spin_marginal_rises),
    ("3 location step in both modes", location_step_both_modes),
    ("4 amended cycle with infeasible reset", amended_cycle_violation),
    ("5 Landauer reset closes cleanly", landauer_reset_clean),
    ("6 unitary reset feasibility", reset_feasibility),
    ("7 mode comparison", mode_comparison),
    ("8 property suites", property_suites),
    ("9 record-conditioned variant", redundancy_variant),
]


def check(label, fn):
    try:
        detail = fn()
    except AssertionError as exc:
        return False, f"FAIL criterion {label}: {exc}"
    return True, f"PASS criterion {label}: {detail}"


@pytest.mark.parametrize("label, fn", CRITERIA, ids=[c[0].split()[0] for c in CRITERIA])
def test_criterion(label, fn, capsys):
    ok, line = check(label, fn)
    with capsys.disabled():
        print(f"\n{line}")
    assert ok, line


if __name__ == "__main__":
    results = [check(label, fn) for label, fn in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
