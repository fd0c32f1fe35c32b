"""Run the bundled six-resource testbed under both optimisation modes.

Prints the per-resource job counts side by side. When matplotlib is installed
it also saves ``wwg_progress.png``, cumulative completions over time for each
mode.

    python3 demos/wwg_modes.py [--seed 42] [--out DIR]
"""

import argparse
import tempfile
from pathlib import Path

from gridecon.scenario import comparison_table, load_scenario, run


def completions(trace_csv: Path) -> list[int]:
    import csv
    with trace_csv.open() as fh:
        return sorted(int(r["time"]) for r in csv.DictReader(fh) if r["kind"] == "complete")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--out", default=".")
    args = ap.parse_args()

    scenario = load_scenario("wwg")
    with tempfile.TemporaryDirectory() as tmp:
        runs = {m: run(scenario, args.seed, m, Path(tmp, m)) for m in ("cost_opt", "time_opt")}
        print(comparison_table(runs))
        for mode, s in runs.items():
            b = s.brokers[0]
            print(f"{mode}: {b.jobs_completed} jobs, {b.total_cost} G$ of {b.budget}, "
                  f"finished at {b.makespan / 60:.0f} min (deadline {b.deadline // 60} min)")
        curves = {m: completions(Path(tmp, m, "trace.csv")) for m in runs}

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping the plot")
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, times in curves.items():
        ax.step([t / 60 for t in times], range(1, len(times) + 1), where="post", label=mode)
    ax.set_xlabel("minutes")
    ax.set_ylabel("jobs completed")
    ax.legend()
    out = Path(args.out, "wwg_progress.png")
    fig.savefig(out, dpi=120, bbox_inches="tight")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
