"""Run the single-particle measurement cycle in both modes and tabulate the entropy columns side by side."""

import argparse
import sys

from vnthermo import protocols
from vnthermo.cli import compare, render_compare


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cycles", type=int, default=1)
    ap.add_argument("--record-conditioned", action="store_true",
                    help="drop the location measurement and condition compression on the spin record")
    args = ap.parse_args(argv)
    proto = protocols.hs_cycle_record_conditioned() if args.record_conditioned else protocols.hs_cycle()
    rows = compare(proto.with_config(cycles=args.cycles))
    sys.stdout.write(render_compare(rows))
    return 0 if all(r.joint_agree for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
