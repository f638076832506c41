import streamlit as st


def bound_rows(report: dict, prefix: str = "") -> list[dict]:
    """
    把 BoundReport.as_dict() 之类的嵌套字典摊平成 {"key", "value"} 行，便于表格显示。

    嵌套键用点号连接（如 values.epsilon），列表值用分号拼接。

    Args:
        report (dict): 报告字典。
        prefix (str): 键前缀，递归时使用。

    Returns:
        list[dict]: 保持原有键顺序的行列表。
    """
    rows = []
    for key, value in report.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.extend(bound_rows(value, prefix=f"{name}."))
        elif isinstance(value, (list, tuple)):
            rows.append({"key": name, "value": "; ".join(str(v) for v in value)})
        else:
            rows.append({"key": name, "value": value})
    return rows


def curve_frame(curve) -> dict[str, list]:
    """
    全变差曲线转成 st.line_chart 可用的列字典，上下界为估计值 ± 2 倍标准误并截到 [0, 1]。

    Args:
        curve: TvCurve，或 storage.read_curve_csv 返回的列字典。

    Returns:
        dict[str, list]: checkpoint、estimate、lower、upper 四列。
    """
    if isinstance(curve, dict):
        checkpoints, estimates, stderrs = curve["checkpoint"], curve["estimate"], curve["stderr"]
    else:
        checkpoints, estimates, stderrs = curve.checkpoints, curve.estimates, curve.stderrs
    return {
        "checkpoint": [int(t) for t in checkpoints],
        "estimate": [float(e) for e in estimates],
        "lower": [max(0.0, e - 2.0 * s) for e, s in zip(estimates, stderrs)],
        "upper": [min(1.0, e + 2.0 * s) for e, s in zip(estimates, stderrs)],
    }


def display_bound_report(title: str, report: dict):
    """
    以标题加两列表格的形式渲染一份报告。

    Args:
        title (str): 小节标题。
        report (dict): 报告字典。
    """
    st.markdown(f"### {title}")
    rows = bound_rows(report)
    st.table({"key": [r["key"] for r in rows], "value": [str(r["value"]) for r in rows]})


def display_sidebar() -> dict:
    """
    侧边栏参数输入。

    Returns:
        dict: c1、c2、delta、r、tv_chains、tv_iterations。
    """
    with st.sidebar:
        st.info(
            """
            **使用说明:**

            1. 调整正方形模型的 c1、c2 与目标精度 δ，查看一致遍历界。
            2. 调整 shift-coupling 的 r，查看系数与最优 r。
            3. 勾选「平面全变差曲线」可现场模拟一条小规模曲线。
            """
        )
        st.markdown("## ⚙️ 参数")
        params = {
            "c1": st.number_input("c1（吸引强度）", min_value=0.0, value=0.1, step=0.05, format="%.3f"),
            "c2": st.number_input("c2（排斥强度）", min_value=0.0, value=0.1, step=0.05, format="%.3f"),
            "delta": st.number_input("δ（全变差目标）", min_value=1e-6, max_value=0.999, value=0.01, format="%.4f"),
            "r": st.number_input("r（shift-coupling）", min_value=1e-6, max_value=0.999, value=0.0016,
                                 format="%.5f"),
            "tv_chains": st.slider("曲线链数", min_value=100, max_value=3000, value=500, step=100),
            "tv_iterations": st.slider("曲线迭代次数", min_value=10, max_value=300, value=100, step=10),
        }
        st.markdown("---")
        st.markdown("## ℹ️ 关于项目")
        st.markdown("ChainBound 计算吸引-排斥粒子系统 Metropolis 链的收敛界，并做数值审计与收敛诊断。")
        st.caption("全变差曲线只是单个泛函给出的下界估计，不是真正的全变差距离。")
    return params


def display_footer():
    """
    渲染页面底部的页脚信息。
    """
    st.markdown("---")
    st.caption("ChainBound | 命令行: scripts/chainbound.py | 结果以 CSV / JSON 为准")
