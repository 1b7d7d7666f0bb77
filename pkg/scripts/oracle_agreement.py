"""Tangency certificate versus brute-force tangent oracle on random LICQ systems.

    python3 scripts/oracle_agreement.py [--systems 10] [--directions 20]

Prints the confusion table (certificate verdict x oracle verdict) and the
wall time; under LICQ every non-abstaining pair should agree.
"""

import argparse
import collections
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from helpers import random_licq_system  # noqa: E402

from cqa import tangent  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--systems", type=int, default=10)
    ap.add_argument("--directions", type=int, default=20)
    args = ap.parse_args()
    t0 = time.perf_counter()
    table = collections.Counter()
    for seed in range(args.systems):
        sys_, x0, dirs = random_licq_system(seed, args.directions)
        for d in dirs:
            cert = tangent.tangency_test(sys_, x0, d, seed=seed)
            orc = tangent.brute_force_tangent_oracle(sys_, x0, d, seed=seed)
            table[cert.verdict, orc.verdict] += 1
    for (c, o), count in sorted(table.items()):
        print(f"{c:14s} {o:8s} {count:5d}")
    bad = sum(v for (c, o), v in table.items() if o != "abstain" and (c == "tangent") != (o == "accept"))
    print(f"disagreements: {bad}   time: {time.perf_counter() - t0:.1f}s")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
