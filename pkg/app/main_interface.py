import math
import os
import sys
import logging

import streamlit as st

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules import bounds, tv_estimator  # noqa: E402
from modules.config import DEFAULT_SEED, LOG_FORMAT  # noqa: E402
from modules.errors import ChainBoundError  # noqa: E402
from modules.samplers import PLANAR, EnsembleSpec  # noqa: E402
from ui_utils import curve_frame, display_bound_report, display_footer, display_sidebar  # noqa: E402

logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

# --- Streamlit 页面配置 ---
st.set_page_config(
    page_title="📈 ChainBound",
    layout="wide",
    initial_sidebar_state="auto",
)


@st.cache_data(show_spinner=False)
def cached_uniform_report(c1: float, c2: float, delta: float) -> dict:
    return bounds.uniform_bound_report(c1, c2, delta, 1000).as_dict()


@st.cache_data(show_spinner=False)
def cached_shift_coupling_report(r: float) -> dict:
    minor, drift = bounds.certificate_theorem2()
    return bounds.shift_coupling_report(minor, drift, math.e, r, 1).as_dict()


@st.cache_data(show_spinner=False)
def cached_certificates() -> dict:
    mass = bounds.verify_minorization_planar()
    consts = bounds.proof_constants_planar()
    return {
        "minorization_mass": mass.value,
        "closed_form": bounds.minorization_mass_closed_form(),
        "m1": consts.m1,
        "m2": consts.m2,
        "m1_prime": consts.m1_prime,
        "m2_prime": consts.m2_prime,
        "m1_m1_prime": consts.lower_product,
        "m2_m2_prime_half": consts.upper_product,
    }


@st.cache_data(show_spinner=False)
def cached_planar_curve(m_chains: int, iterations: int) -> dict:
    fun = next(f for f in tv_estimator.builtin_tv_functionals(PLANAR) if f.name == "f")
    spec = EnsembleSpec(m_chains, iterations, DEFAULT_SEED)
    curve = tv_estimator.tv_curve(PLANAR, fun, spec, tv_estimator.default_checkpoints(iterations), threads=4)
    return curve_frame(curve)


# --- 主页面布局 ---
st.title("📈 ChainBound - 粒子系统 MCMC 收敛界")
st.caption("一致遍历界、shift-coupling 界、数值证书与全变差估计")

params = display_sidebar()

col1, col2 = st.columns(2)
with col1:
    try:
        display_bound_report("🔲 正方形模型：一致遍历界", cached_uniform_report(params["c1"], params["c2"],
                                                                         params["delta"]))
    except ChainBoundError as e:
        st.error(f"⚠️ {e}")
with col2:
    try:
        display_bound_report("⭕ 平面模型：shift-coupling 界", cached_shift_coupling_report(params["r"]))
    except ChainBoundError as e:
        st.error(f"⚠️ r = {params['r']} 不可行：{e}")

with st.spinner("⏳ 正在计算最小化质量与证明常数..."):
    try:
        display_bound_report("🧾 平面模型证书", cached_certificates())
    except ChainBoundError as e:
        st.error(f"⚠️ 证书审计未通过：{e}")

if st.checkbox("平面全变差曲线（f = exp(-r)，从 (1, 0) 出发）"):
    with st.spinner("🧠 正在模拟链..."):
        frame = cached_planar_curve(params["tv_chains"], params["tv_iterations"])
    st.line_chart(frame, x="checkpoint", y=["estimate", "lower", "upper"])
    st.caption("曲线是单个泛函给出的全变差下界估计，lower / upper 为 ±2 倍标准误。")

# --- 页脚 ---
display_footer()
