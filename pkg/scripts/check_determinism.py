"""Rerun every validation suite with 1 and 8 workers and compare the outcomes bitwise.

    python scripts/check_determinism.py [--seed N] [--suite NAME ...]

Exit status 0 when every suite reproduces exactly, 1 otherwise.
"""

import argparse
import sys
import warnings

from fwis.harness.mc import DEFAULT_SEED
from fwis.harness.suites import SUITES, SuiteConfig, validate_suite
from fwis.spde import _riccati_core


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ap.add_argument("--suite", action="append", choices=sorted(SUITES))
    ap.add_argument("--n-paths", type=int)
    args = ap.parse_args(argv)
    ok = True
    for name in args.suite or list(SUITES):
        runs = []
        for workers in (1, 8):
            _riccati_core.cache_clear()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                runs.append(validate_suite(name, SuiteConfig(args.seed, workers, n_paths=args.n_paths)).results())
        same = runs[0] == runs[1]
        ok &= same
        print(f"{'SAME' if same else 'DIFF'}  {name}", flush=True)
    print("determinism:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
