import streamlit as st

from backend import augment_ops as ops
from backend.errors import LabError
from backend.pixel_core import load_ppm, save_ppm, synthesize_dataset
from backend.policy import PolicyConfig, PolicyStreams, augment_image, sample_explore
from theme import lab_ui

# ---------------- Page config ----------------
st.set_page_config(page_title="Augmentation Explorer", layout="wide")
lab_ui()
st.title("🎨 Augmentation Explorer")


@st.cache_data(show_spinner=False)
def synthetic_pool(seed, class_count, size):
    return synthesize_dataset(seed, class_count, 4, size)


def show(img, caption):
    st.image(img.pixels, caption=caption, width=160, clamp=True)


# ---------------- Source image ----------------
st.sidebar.header("Image")
source = st.sidebar.radio("Source", ["Synthetic", "Upload PPM"])
if source == "Synthetic":
    seed = st.sidebar.number_input("Seed", 0, 10_000, 0)
    size = st.sidebar.select_slider("Size", [16, 32, 64], value=32)
    pool = synthetic_pool(int(seed), 4, int(size))
    index = st.sidebar.slider("Sample", 0, len(pool) - 1, 0)
    image = pool.samples[index].image
else:
    uploaded = st.sidebar.file_uploader("Binary PPM (P6)", type=["ppm"])
    if uploaded is None:
        st.info("Upload a P6 PPM to start.")
        st.stop()
    try:
        image = load_ppm(uploaded.getvalue())
    except LabError as e:
        st.error(f"Could not read image: {e}")
        st.stop()

# ---------------- Single operator ----------------
st.subheader("Single operator")
c1, c2, c3 = st.columns(3)
kind = ops.OpKind(c1.selectbox("Operator", [k.value for k in ops.ALL_KINDS]))
magnitude = c2.slider("Magnitude m", 0.0, 1.0, 0.5, 0.05, disabled=kind.parameterless)
sign = 1 if c3.radio("Sign", ["+", "-"], horizontal=True) == "+" else -1

app = ops.OpApplication(kind, float(magnitude), sign)
param = ops.map_magnitude(kind, app.magnitude, app.sign)
out = ops.apply_op(image, app)
left, right = st.columns(2)
with left:
    show(image, "original")
with right:
    show(out, f"{kind.value} (param={param})")
st.download_button("⬇️ Download result (PPM)", data=save_ppm(out), file_name=f"{kind.value}.ppm")

# ---------------- Magnitude strip ----------------
st.subheader("Magnitude strip")
steps = [0.0, 0.25, 0.5, 0.75, 1.0]
for col, m in zip(st.columns(len(steps)), steps):
    with col:
        show(ops.apply_op(image, ops.OpApplication(kind, m, sign)), f"m={m}")

# ---------------- Exploration samples ----------------
st.subheader("Random exploration sub-policies")
depth = st.slider("Depth D", 1, 4, 2)
cfg = PolicyConfig(depth=depth)
for i, col in enumerate(st.columns(4)):
    sub = sample_explore(cfg, PolicyStreams.derive(0, 0, 0, i, "explorer"))
    label = " → ".join(f"{a.kind.value}({a.magnitude:.2f})" for a in sub.apps)
    with col:
        show(augment_image(image, sub), label)
