#!/usr/bin/env python3
"""Run every built-in preset (or a chosen subset) and print one status line per preset."""

import argparse
import json
import sys
import time
from pathlib import Path

from aronsson_lab import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("presets", nargs="*", default=sorted(cli.PRESETS), help="preset names (default: all)")
    ap.add_argument("--out", type=Path, default=Path("runs"), help="parent output directory")
    args = ap.parse_args()

    failed = 0
    for name in args.presets:
        cfg = cli.parse_config(cli.preset_config(name))
        t0 = time.perf_counter()
        code = cli.run_config(cfg, args.out / name)
        report = json.loads((args.out / name / "report.json").read_text())
        bad = [e["name"] for e in report["experiments"] if not e["passed"]]
        print(f"{name:26s} exit={code} {time.perf_counter() - t0:7.2f}s" + (f"  failed: {', '.join(bad)}" if bad else ""))
        failed += code != 0
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
