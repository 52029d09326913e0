import streamlit as st

from backend.report_utils import RUNS_DIR, list_all_runs
from theme import lab_ui

# ------------------------------------------------------------------------------------------
# Page Config
st.set_page_config(page_title="SRA Lab | Training Dashboard", layout="wide")
lab_ui()

with st.sidebar:
    st.markdown("### SRA Lab")
    st.caption(f"Runs are read from `{RUNS_DIR}/`")
    st.markdown("---")

# ------------------------------------------------------------------------------------------
# Hero Section
st.markdown("""
<div class="hero">
    <h1>Sample-aware RandAugment Lab</h1>
    <p>Browse training runs, watch the per-epoch MIS and loss curves, and try every augmentation
    operator at any magnitude. Training itself runs from the command line.</p>
</div>
""", unsafe_allow_html=True)

# ------------------------------------------------------------------------------------------
# Available Modules
st.markdown("### Available Pages")
cols = st.columns(3)
with cols[0]:
    st.markdown("""
    <div class="card">
        <h3>1️⃣ Training Monitor</h3>
        <p>Mean MIS, explore / refine losses, learning rate and test accuracy for one or more runs.</p>
    </div>
    """, unsafe_allow_html=True)
with cols[1]:
    st.markdown("""
    <div class="card">
        <h3>2️⃣ Augmentation Explorer</h3>
        <p>Apply any of the 14 operators to a synthetic or uploaded PPM image.</p>
    </div>
    """, unsafe_allow_html=True)
with cols[2]:
    st.markdown("""
    <div class="card">
        <h3>3️⃣ Run Archive</h3>
        <p>Download metrics, checkpoints and configs; delete old runs.</p>
    </div>
    """, unsafe_allow_html=True)

# ------------------------------------------------------------------------------------------
# How To Use Section
st.markdown("### 📌 How to Use")
st.code(
    "python scripts/sra.py train --config lab.cfg --seed 0\n"
    "python scripts/sra.py train --trainer.mode basic --trainer.epochs 30\n"
    "python scripts/run_sweep.py mis.epsilon 0 1 2 4 --seeds 3 --out runs/eps_sweep",
    language="bash",
)

runs = list_all_runs()
if runs:
    st.success(f"✅ {len(runs)} run(s) found.")
else:
    st.info("No runs yet. Start one with the command above.")

st.markdown("""
<div class="footer">SRA Lab · numpy reference implementation</div>
""", unsafe_allow_html=True)
