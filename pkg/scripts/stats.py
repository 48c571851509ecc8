#!/usr/bin/env python3
"""Per-planner mean ± std of the mission metrics in one or more metrics CSV files."""
import argparse
from pathlib import Path
import sys

import pandas as pd

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import load_config
from src.storage_manager import StorageManager

METRICS = ["detected_fruits", "surface_coverage_pct", "volume_accuracy_pct", "motion_cost"]


def summarize(frame: pd.DataFrame, all_rows: bool = False) -> pd.DataFrame:
    """Aggregate rows only (segment == "all") unless ``all_rows``; one line per planner."""
    if not all_rows:
        frame = frame[frame["segment"].astype(str) == "all"]
    grouped = frame.groupby("planner")[METRICS]
    means, stds = grouped.mean(), grouped.std().fillna(0.0)
    summary = pd.DataFrame(index=means.index)
    for metric in METRICS:
        summary[metric] = [f"{m:.2f} ± {s:.2f}" for m, s in zip(means[metric], stds[metric])]
    summary["runs"] = grouped.size()
    return summary


def main():
    parser = argparse.ArgumentParser(description="Summarize metrics CSV files by planner")
    parser.add_argument('csv', nargs='*', help='Metrics CSV files (default: every CSV under <output>/reports)')
    parser.add_argument('--segments', action='store_true', help='Include per-segment rows')
    args = parser.parse_args()

    paths = [Path(p) for p in args.csv]
    if not paths:
        storage = StorageManager(load_config().output.base_dir)
        paths = sorted(storage.reports_dir.glob("*.csv"))

    storage = StorageManager(".")
    frames = [frame for frame in (storage.load_metrics_csv(p) for p in paths) if frame is not None]
    if not frames:
        print("No metrics found")
        return 1

    print("=" * 60)
    print("Mission Metrics by Planner")
    print("=" * 60)
    print(summarize(pd.concat(frames, ignore_index=True), args.segments).to_string())
    return 0


if __name__ == "__main__":
    sys.exit(main())
