"""Run the acceptance suite and print one pass/fail line per criterion.

Usage: python scripts/run_acceptance.py [pytest -k expression]
"""

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    args = [str(ROOT / "tests" / "test_acceptance.py"), "-q", "-s"]
    if len(sys.argv) > 1:
        args += ["-k", sys.argv[1]]
    return pytest.main(args)


if __name__ == "__main__":
    sys.exit(main())
