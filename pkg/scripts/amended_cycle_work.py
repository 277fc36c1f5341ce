"""Net work and audit verdict of the work-extracting cycle versus cycle count, for both reset strategies."""

import argparse

from vnthermo import protocols
from vnthermo.engine import audit, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cycles", type=int, nargs="+", default=[1, 10, 100])
    args = ap.parse_args(argv)
    print("reset,cycles,W_net,dS_bath_net,closed,kelvin_planck,status")
    for reset in ("landauer", "unitary-attempt"):
        for k in args.cycles:
            p = protocols.amended_cycle(reset).with_config(
                cycles=k, permit_infeasible_reset=reset == "unitary-attempt")
            r = audit(run(p))
            print(f"{reset},{k},{r.net_work:.12g},{r.net_bath_entropy:.12g},"
                  f"{r.closure.closed},{r.kelvin_planck},{r.status}")


if __name__ == "__main__":
    main()
