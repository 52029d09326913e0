# backend/run_summary.py
"""Read metrics.csv files back and reduce them to headline numbers."""
import math

import pandas as pd

from backend.errors import MalformedInputError

REQUIRED_COLUMNS = ("epoch", "explore_loss", "refine_loss", "mean_mis", "lr", "test_acc")


def load_metrics(path):
    """metrics.csv -> DataFrame; empty cells become NaN."""
    df = pd.read_csv(path)
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise MalformedInputError(f"{path}: missing columns {missing}")
    return df


def _first(series):
    s = series.dropna()
    return float(s.iloc[0]) if len(s) else math.nan


def _last(series):
    s = series.dropna()
    return float(s.iloc[-1]) if len(s) else math.nan


def tail_fraction(df, fraction=0.25):
    """The last ceil(fraction * epochs) rows."""
    n = max(1, math.ceil(len(df) * fraction)) if len(df) else 0
    return df.tail(n)


def summarize_run(df):
    """Headline numbers of one run; NaN where a column was never filled."""
    first_mis = _first(df["mean_mis"])
    final_mis = _last(df["mean_mis"])
    tail = tail_fraction(df).dropna(subset=["explore_loss", "refine_loss"])
    if len(tail):
        refine_over = float((tail["refine_loss"] >= tail["explore_loss"]).mean())
    else:
        refine_over = math.nan
    acc = df["test_acc"].dropna()
    return {
        "epochs": int(len(df)),
        "final_test_acc": _last(df["test_acc"]),
        "best_test_acc": float(acc.max()) if len(acc) else math.nan,
        "first_mean_mis": first_mis,
        "final_mean_mis": final_mis,
        "mis_rising": bool(final_mis > first_mis) if not math.isnan(first_mis) else False,
        "refine_over_explore": refine_over,
    }


def summarize_runs(paths):
    """One summary row per metrics.csv path."""
    rows = []
    for p in paths:
        row = summarize_run(load_metrics(p))
        row["path"] = str(p)
        rows.append(row)
    return pd.DataFrame(rows)
