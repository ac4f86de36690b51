#!/usr/bin/env python3
"""
SUNSET simulator entry point.
Usage: python sunset.py <command> [options]   (see --help)
"""

import sys

from sunset_sim.cli import main

if __name__ == "__main__":
    sys.exit(main())
