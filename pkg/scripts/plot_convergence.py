"""Parameter gap of DR-RRM per retraining round, one curve per epsilon.

    python3 scripts/plot_convergence.py configs/credit.yaml --out runs/credit

Runs the experiment first unless ``--no-run`` is given and the run directory
already holds trajectories.csv. Rounds that stopped early simply end the curve.
"""
import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from drpp.experiment import ExperimentConfig, run_experiment  # noqa: E402


def load_gaps(path, algorithm="rrm"):
    curves = defaultdict(list)
    with open(path) as fh:
        for row in csv.DictReader(fh):
            if row["algorithm"] != algorithm or row["param_gap"] == "":
                continue
            curves[float(row["epsilon"])].append((int(row["iteration"]), float(row["param_gap"])))
    return dict(sorted(curves.items()))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default="configs/credit.yaml")
    ap.add_argument("--out", default=None, help="run directory (default: the config's out)")
    ap.add_argument("--algorithm", default="rrm")
    ap.add_argument("--no-run", action="store_true")
    args = ap.parse_args()

    cfg = ExperimentConfig.load(args.config)
    out = Path(args.out or cfg.out)
    if not (args.no_run and (out / "trajectories.csv").exists()):
        run_experiment(cfg, out=out)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    floor = 1e-17  # an exact zero gap is drawn at the floor so the stop is visible
    for eps, pts in load_gaps(out / "trajectories.csv", args.algorithm).items():
        t, g = zip(*pts)
        ax.semilogy(t, [max(v, floor) for v in g], marker="o", label=f"eps = {eps:g}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("|theta_t - theta_(t-1)|")
    ax.set_xlim(0, cfg.outer_iters + 1)
    ax.legend()
    fig.tight_layout()
    target = out / f"convergence_{args.algorithm}.png"
    fig.savefig(target, dpi=150)
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
