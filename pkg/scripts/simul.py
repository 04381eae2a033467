#!/usr/bin/env python3
"""Simulation entry point with the historical flag set.

    simul.py --time-interval 30 --start-time '2008-12-16 02:13:50 CET' \\
            --max-vms 512 --cluster-size 100 --csv-file accounting.csv

Same as ``burstd simulate``.
"""

import sys

from burstd.cli import main

if __name__ == "__main__":
    sys.exit(main(["simulate", *sys.argv[1:]]))
