"""Run every example config in scripts/configs through the CLI.

Usage: python scripts/run_all.py [OUT_ROOT]

Each config writes report.json, scaling.csv and scaling.dat under
OUT_ROOT/<config name>/ (default OUT_ROOT is ./runs).
"""

import sys
from pathlib import Path

from sl2lab.cli import main

COMMANDS = {
    "volume_sl2_net": "volume",
    "volume_planar_L0": "volume",
    "cordoba": "cordoba",
    "curves_parabola": "curves",
    "dichotomy": "dichotomy",
}


def run(out_root: Path) -> int:
    configs = Path(__file__).parent / "configs"
    worst = 0
    for name, command in COMMANDS.items():
        code = main([command, "--config", str(configs / f"{name}.json"),
                     "--out", str(out_root / name)])
        print(f"{name}: exit {code}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs")))
