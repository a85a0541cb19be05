#!/usr/bin/env python3
"""Run the confluence/termination smoke test over every bundled ruleset
with a larger sample budget than the CLI default."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from stepcalc.cli import run_check_groups
from stepcalc.knowledge import load_bundle


def main():
    store = load_bundle(Path(__file__).resolve().parent.parent / "content")
    return run_check_groups(store, sys.stdout)


if __name__ == "__main__":
    sys.exit(main())
