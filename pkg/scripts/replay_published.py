"""Recompute macro averages and ablation gains from published per-corpus accuracies.

    python scripts/replay_published.py [--data tests/data]
"""

import argparse
import csv
from pathlib import Path

from discoforge.evaluation import MACRO, MICRO, EvalReport, ablation_report

ABLATIONS = ("lcf", "discodisco", "direction", "context", "aug")


def read(path):
    with open(path, encoding="utf-8") as f:
        return list(csv.DictReader(f, delimiter="\t"))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", type=Path, default=Path(__file__).resolve().parents[1] / "tests" / "data")
    args = ap.parse_args()

    acc = [r for r in read(args.data / "published_accuracies.tsv") if r["corpus"] not in (MACRO, MICRO)]
    for column in ("decoder", "encoder"):
        rep = EvalReport.from_accuracies({r["corpus"]: float(r[column]) for r in acc})
        print(f"{column:8s} macro over {len(acc)} corpora: {rep.macro_avg:.4f}")

    rows = read(args.data / "published_ablation.tsv")
    printed = {r["corpus"]: r for r in rows}
    body = [r for r in rows if r["corpus"] not in (MACRO, MICRO)]
    base = EvalReport.from_accuracies({r["corpus"]: float(r["baseline"]) for r in body}, float(printed[MICRO]["baseline"]))
    print("\nablation\tworst |gain error|\tmacro gain\tmicro gain")
    for name in ABLATIONS:
        abl = EvalReport.from_accuracies(
            {r["corpus"]: float(r[f"{name}_abs"]) for r in body}, float(printed[MICRO][f"{name}_abs"])
        )
        per, aggs = ablation_report(base, abl)
        worst = max(abs(r.gain - float(printed[r.corpus][f"{name}_gain"])) for r in per + aggs)
        print(f"{name}\t{worst:.4f}\t{aggs[0].gain:.4f}\t{aggs[1].gain:.4f}")


if __name__ == "__main__":
    main()
