#!/usr/bin/env python3
"""Relaxation sweep on the desk phantom: iteration counts, final
objectives, relative errors, and wall times per solver and weight.

Usage: python scripts/desk_sweep.py [config] [output_dir]
Defaults to configs/desk_sweep.cfg and out/desk_sweep.
"""

import sys
from pathlib import Path

from ripgn.harness import parse_config, run_sweep


def main():
    root = Path(__file__).resolve().parent.parent
    config = sys.argv[1] if len(sys.argv) > 1 else root / "configs" / "desk_sweep.cfg"
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else None
    cfg = parse_config(config)
    results = run_sweep(cfg, output_dir=out)
    out_dir = results[0].output_dir.parent
    print((out_dir / "sweep_summary.txt").read_text(), end="")


if __name__ == "__main__":
    main()
