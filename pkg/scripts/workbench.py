#!/usr/bin/env python3
"""Workbench CLI without `python -m`.

Usage:
  python scripts/workbench.py report table1a --format md

This repo isn't packaged (no pyproject), so the repo root is put on sys.path here.
"""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.cli import main  # noqa: E402

if __name__ == "__main__":
    main()
