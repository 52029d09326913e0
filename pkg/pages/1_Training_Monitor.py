import os

import pandas as pd
import plotly.graph_objects as go
import streamlit as st

from backend.report_utils import df_to_excel_bytes, list_all_runs, save_report
from backend.run_summary import load_metrics, summarize_runs
from backend.errors import LabError
from theme import lab_ui

# ---------------- Page config ----------------
st.set_page_config(page_title="Training Monitor", layout="wide")
lab_ui()
st.title("📈 Training Monitor")

CURVES = {
    "mean_mis": "Mean MIS",
    "explore_loss": "Explore loss",
    "refine_loss": "Refine loss",
    "lr": "Learning rate",
    "test_acc": "Test accuracy",
}


# ---------------- Helpers ----------------
@st.cache_data(show_spinner=False)
def read_run(path, mtime):
    """mtime only busts the cache when a run is still being written."""
    return load_metrics(os.path.join(path, "metrics.csv"))


def color_cycle(i):
    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]
    return palette[i % len(palette)]


# ---------------- Run selection ----------------
runs = list_all_runs()
if not runs:
    st.info("No runs found. Train one with `python scripts/sra.py train`.")
    st.stop()

st.sidebar.header("Runs")
selected = st.sidebar.multiselect("Select run(s)", runs, default=runs[:1], format_func=os.path.basename)
curves = st.sidebar.multiselect("Curves", list(CURVES), default=["mean_mis", "explore_loss", "refine_loss"],
                                format_func=CURVES.get)
if not selected:
    st.warning("Pick at least one run in the sidebar.")
    st.stop()

frames = {}
for path in selected:
    try:
        frames[path] = read_run(path, os.path.getmtime(os.path.join(path, "metrics.csv")))
    except (LabError, OSError, pd.errors.ParserError) as e:
        st.error(f"Could not read {path}: {e}")
        st.stop()

# ---------------- Charts ----------------
for column in curves:
    fig = go.Figure()
    for i, (path, df) in enumerate(frames.items()):
        series = df[["epoch", column]].dropna()
        if series.empty:
            continue
        dash = "dot" if column == "refine_loss" else "solid"
        fig.add_trace(go.Scatter(
            x=series["epoch"], y=series[column], mode="lines+markers",
            name=os.path.basename(path), line=dict(color=color_cycle(i), dash=dash),
        ))
    fig.update_layout(
        title=CURVES[column], xaxis_title="epoch", yaxis_title=column,
        height=340, margin=dict(l=20, r=20, t=50, b=20), template="plotly_white",
    )
    st.plotly_chart(fig, use_container_width=True)

# ---------------- Summary ----------------
st.subheader("Summary")
summary = summarize_runs([os.path.join(path, "metrics.csv") for path in frames])
summary.insert(0, "run", [os.path.relpath(os.path.dirname(p)) for p in summary.pop("path")])
summary = summary.set_index("run")
st.dataframe(summary, use_container_width=True)

col1, col2 = st.columns(2)
with col1:
    st.download_button(
        "⬇️ Download summary (Excel)",
        data=df_to_excel_bytes(summary.reset_index(), sheet_name="summary"),
        file_name="run_summary.xlsx",
        mime="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
    )
with col2:
    if len(frames) == 1 and st.button("💾 Save metrics as Excel next to the run"):
        path, df = next(iter(frames.items()))
        saved = save_report(df_to_excel_bytes(df), path, "metrics")
        st.success(f"Saved {saved}")
