#!/usr/bin/env python3
# Copyright 2026 The rpforest Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Plot missing rate and normalized discrepancy against tree count.

Reads one or more CSV reports written by rpforest_bench and draws one curve
per (dataset, nTry) from the aggregate rows, with +-1 SD error bars.

    plot_report.py report.csv [more.csv ...] -o curves.png
    plot_report.py report.csv --check      # validate only, no matplotlib
"""

import argparse
import csv
import math
import sys
from collections import defaultdict

REQUIRED = [
    "dataset", "n", "D", "K", "T", "n_try", "leaf_capacity", "standardized",
    "aggregate", "run", "seed", "missing_rate", "missing_rate_sd",
    "normalized_discrepancy", "normalized_discrepancy_sd", "mean_exact_dk",
    "mean_approx_dk", "shortfall", "dominance_violations",
]


def load(paths):
    curves = defaultdict(list)
    for path in paths:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            missing = [c for c in REQUIRED if c not in (reader.fieldnames or [])]
            if missing:
                raise ValueError(f"{path}: missing columns {', '.join(missing)}")
            for row in reader:
                if row["aggregate"] != "1":
                    continue
                label = row["dataset"] + ("" if row["n_try"] == "1" else f" (nTry={row['n_try']})")
                if row["standardized"] == "1":
                    label += " [std]"
                curves[label].append((
                    int(row["T"]),
                    float(row["missing_rate"]), float(row["missing_rate_sd"]),
                    float(row["normalized_discrepancy"]), float(row["normalized_discrepancy_sd"]),
                ))
    for points in curves.values():
        points.sort()
    return curves


def plot(curves, out):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_miss, ax_disc) = plt.subplots(1, 2, figsize=(10, 4))
    for label, pts in sorted(curves.items()):
        t = [p[0] for p in pts]
        ax_miss.errorbar(t, [p[1] for p in pts], yerr=[p[2] for p in pts], marker="o", capsize=3, label=label)
        ax_disc.errorbar(t, [p[3] for p in pts], yerr=[p[4] for p in pts], marker="o", capsize=3, label=label)
    ax_miss.set_xlabel("trees")
    ax_miss.set_ylabel("missing neighbor rate")
    ax_disc.set_xlabel("trees")
    ax_disc.set_ylabel("normalized K-th distance discrepancy")
    ax_miss.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(out, dpi=120)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("reports", nargs="+")
    ap.add_argument("-o", "--output", default="rpforest_curves.png")
    ap.add_argument("--check", action="store_true", help="validate the reports and print a summary")
    args = ap.parse_args(argv)

    try:
        curves = load(args.reports)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if not curves:
        print("error: no aggregate rows found", file=sys.stderr)
        return 1
    if args.check:
        for label, pts in sorted(curves.items()):
            if any(math.isnan(p[1]) for p in pts):
                print(f"{label}: timing-only (no accuracy metrics)")
                continue
            summary = ", ".join(f"T={p[0]}: {p[1]:.4f}" for p in pts)
            print(f"{label}: {summary}")
        return 0
    plot(curves, args.output)
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
