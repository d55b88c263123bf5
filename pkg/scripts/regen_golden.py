"""Regenerate the CLI golden files under tests/golden/.

Run only after a deliberate, reviewed change to numerical output:

    python3 scripts/regen_golden.py
"""
import shutil
import sys
from pathlib import Path

from prhpg.cli import main

ROOT = Path(__file__).resolve().parents[1] / "tests" / "golden"


def run():
    for cfg in sorted((ROOT / "configs").glob("*.json")):
        command = cfg.stem
        if command == "eval_gains":
            continue
        out = ROOT / command
        shutil.rmtree(out, ignore_errors=True)
        code = main([command, "--config", str(cfg), "--out", str(out)])
        print(f"{command}: exit {code}")
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run())
