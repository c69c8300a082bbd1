"""Run the acceptance criteria and print one PASS/FAIL line each.

    python3 scripts/run_acceptance.py            # all
    python3 scripts/run_acceptance.py 1 3 8      # a subset
"""

import sys

from stablelab.acceptance import run_all


def main(argv):
    numbers = [int(a) for a in argv] or None
    results = run_all(numbers, echo=print)
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
