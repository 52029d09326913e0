import os

STYLE_FILE = "assets/lab_style.css"


def lab_ui():
    """Inject the lab stylesheet; silently skipped when the file is missing."""
    import streamlit as st
    if os.path.exists(STYLE_FILE):
        with open(STYLE_FILE) as f:
            st.markdown(f"<style>{f.read()}</style>", unsafe_allow_html=True)
