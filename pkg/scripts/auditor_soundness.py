"""Audit randomly generated physical protocols; a sound auditor reports no VIOLATION."""

import argparse
import sys
import time

import numpy as np

from vnthermo import protocols
from vnthermo.engine import audit, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--length", type=int, default=8)
    args = ap.parse_args(argv)

    seeds = np.random.default_rng(args.seed).integers(0, 2**31, size=args.count)
    start = time.perf_counter()
    flagged, margins, steps = [], [], 0
    for i, s in enumerate(seeds):
        p = protocols.random_protocol(int(s), length=args.length, mode="collapse" if i % 2 else "no-collapse")
        report = audit(run(p))
        steps += len(p.steps)
        margins.extend(m for _, _, m in report.margins)
        if report.status != "CLEAN":
            flagged.append((int(s), report.violations + report.nonphysical))
    print(f"protocols: {args.count}  steps: {steps}  time: {time.perf_counter() - start:.1f} s")
    print(f"min margin: {min(margins):.3g}  flagged: {len(flagged)}")
    for s, why in flagged:
        print(f"  seed {s}: {why}")
    return 1 if flagged else 0


if __name__ == "__main__":
    sys.exit(main())
