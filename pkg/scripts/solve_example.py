#!/usr/bin/env python3
"""Solve a bundled example and print the justified trace.

Usage: python scripts/solve_example.py [example-id] [--content DIR]
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from stepcalc.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:] or ["biegelinie-1", "--audit"]
    sys.exit(main(argv))
