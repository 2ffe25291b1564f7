"""Run the demo configurations and print the two comparison tables.

Usage: python demos/run_demos.py [output_dir]
"""
import sys
from pathlib import Path

from magshape.cli import main

HERE = Path(__file__).resolve().parent


def run(out: Path):
    pairs = {"die_press": ("die_press_sqp", "die_press_pso"),
             "pmsm": ("pmsm_nominal", "pmsm_robust")}
    for label, names in pairs.items():
        reports = []
        for name in names:
            code = main(["optimize", str(HERE / f"{name}.json"), "-o", str(out / name)])
            if code != 0:
                raise SystemExit(f"{name} exited with status {code}")
            reports.append(str(out / name / "report.json"))
        print(f"\n{label}")
        main(["compare", *reports, "-o", str(out / f"compare_{label}")])


if __name__ == "__main__":
    run(Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output"))
