#!/usr/bin/env python3
"""
Entry point for the triad_da module.
"""

import sys

from triad_da.cli.cli import main

if __name__ == "__main__":
    sys.exit(main())
