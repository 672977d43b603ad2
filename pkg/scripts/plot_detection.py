"""Defaulter detection rate of static, PP and DR-PP models across epsilon.

    python3 scripts/plot_detection.py --out runs/credit --no-run

Left panel: after the first round. Right panel: after the last round.
"""
import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from drpp.experiment import ExperimentConfig, run_experiment  # noqa: E402

METHODS = ("static", "pp", "dr-pp")


def load(path):
    table = defaultdict(dict)
    with open(path) as fh:
        for row in csv.DictReader(fh):
            table[int(row["iteration"])][(float(row["epsilon"]), row["method"])] = float(row["detection_rate"])
    return table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default="configs/credit.yaml")
    ap.add_argument("--out", default=None)
    ap.add_argument("--no-run", action="store_true")
    args = ap.parse_args()

    cfg = ExperimentConfig.load(args.config)
    out = Path(args.out or cfg.out)
    if not (args.no_run and (out / "detection_vs_epsilon.csv").exists()):
        run_experiment(cfg, out=out)

    table = load(out / "detection_vs_epsilon.csv")
    fig, axes = plt.subplots(1, len(table), figsize=(4.5 * len(table), 3.5), sharey=True, squeeze=False)
    for ax, (t, vals) in zip(axes[0], sorted(table.items())):
        eps = sorted({e for e, _ in vals})
        x = np.arange(len(eps))
        for k, m in enumerate(METHODS):
            ax.bar(x + (k - 1) * 0.27, [vals.get((e, m), np.nan) for e in eps], width=0.27, label=m)
        ax.set_xticks(x, [f"{e:g}" for e in eps])
        ax.set_xlabel("epsilon")
        ax.set_title(f"t = {t}")
    axes[0][0].set_ylabel("detection rate")
    axes[0][0].legend(loc="lower left")
    fig.tight_layout()
    target = out / "detection_vs_epsilon.png"
    fig.savefig(target, dpi=150)
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
