import os

import streamlit as st

from backend.report_utils import delete_run, list_all_runs
from theme import lab_ui

st.set_page_config(page_title="Run Archive", layout="wide")
lab_ui()
st.title("📁 Run Archive")

st.markdown("""
Every run directory with a `metrics.csv`.
You can download its files or delete the run from here.
""")

runs = list_all_runs()

if not runs:
    st.info("No runs found yet.")
    st.stop()

query = st.text_input("🔍 Search runs (by name):", value="").strip().lower()
deleted_any = False

for run_path in runs:
    name = os.path.relpath(run_path)
    if query and query not in name.lower():
        continue
    st.markdown(f"### 🧪 {name}")
    files = sorted(f for f in os.listdir(run_path) if not f.startswith("."))
    cols = st.columns(len(files) + 1)
    for col, file_name in zip(cols, files):
        icon = "📊" if file_name.endswith((".csv", ".xlsx")) else "⚙️" if file_name.endswith(".txt") else "🧾"
        with open(os.path.join(run_path, file_name), "rb") as f:
            data = f.read()
        col.download_button(f"{icon} {file_name}", data=data, file_name=file_name,
                            mime="application/octet-stream", key=f"{name}/{file_name}")
    with cols[-1]:
        if st.button("🗑", key=f"delete_{name}", help="Delete this run"):
            if delete_run(run_path):
                st.success(f"Deleted: {name}")
                deleted_any = True
            else:
                st.error(f"Failed to delete {name}")
    st.markdown("---")

if deleted_any:
    st.rerun()

st.success(f"✅ Total runs: {len(runs)}")
