#!/usr/bin/env python3
"""End-to-end demo of the batch CLI against simulated data.

Writes a run configuration into a work directory, simulates a dataset,
runs the full prediction chain, the kriging baseline, diagnostics, and
the method comparison, then prints a file listing.

    python scripts/demo_run.py [workdir]
"""

import sys
from pathlib import Path

from stfield.cli import main as cli

CONFIG = """\
stations_path = "data/stations.csv"
observations_path = "data/observations.csv"
output_dir = "out"
trend_mode = "interaction"
n_train = 24
split_seed = 7
sim_p = 36
sim_g = 24
sim_n_days = 90
sim_seed = 11
sim_delta = 720.0
sim_warp_strength = 1.8
sim_sd_min = 0.7
sim_sd_max = 2.0
"""


def main(argv) -> int:
    workdir = Path(argv[1]) if len(argv) > 1 else Path("demo_out")
    workdir.mkdir(parents=True, exist_ok=True)
    conf = workdir / "run.toml"
    conf.write_text(CONFIG, encoding="utf-8")

    steps = [
        ["simulate", str(conf), "--output-dir", str(workdir / "data")],
        ["pipeline", str(conf), "--output-dir", str(workdir / "out")],
        ["diagnostics", str(conf), "--output-dir", str(workdir / "out")],
        ["krige", str(conf), "--output-dir", str(workdir / "out")],
        [
            "evaluate",
            str(conf),
            "--output-dir",
            str(workdir / "out"),
            "--predictions",
            str(workdir / "out" / "predictions.csv"),
            str(workdir / "out" / "predictions_kriging.csv"),
            "--labels",
            "hierarchical",
            "kriging",
        ],
    ]
    for step in steps:
        print(f"$ stfield {' '.join(step)}")
        code = cli(step)
        if code != 0:
            print(f"step failed with exit code {code}", file=sys.stderr)
            return code

    print("\nartifacts:")
    for path in sorted((workdir / "out").iterdir()):
        print(f"  {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
