#!/usr/bin/env python3
"""
Launcher for running lipsol from a checkout without installing it.

Usage:
    python lipsol.py solve --problem example2 --x 0,0 --method socp
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "src"))

from lipsol.cli import main  # noqa: E402

if __name__ == "__main__":
    main()
