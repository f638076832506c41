"""
多链集合上的 Gelman-Rubin 收敛诊断（潜在尺度缩减因子 PSRF）。

约定：σ̂² = B/L + ((L-1)/L)·W 中的 L 取 burn-in 之后的长度 n - n*。
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from modules import model_core as mc
from modules.config import DF_MODES
from modules.errors import ConfigError, DegenerateDiagnostic, DomainError
from modules.numerics import RadialFunctional
from modules.samplers import PLANAR, SQUARE, ChainTrace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FunctionalSpec:
    """
    状态上的实值泛函。

    Attributes:
        name: 名称，如 "psi"。
        model: "square" 或 "planar"。
        rule: 向量化规则，输入形状 (..., n, 2) 或 (..., 2)，输出形状 (...)。
        low, high: 声明的取值范围，全变差估计需要。
        radial: 平面模型上的角向平均形式（numerics.RadialFunctional），用于求积分参考值。
    """
    name: str
    model: str
    rule: Callable[[np.ndarray], np.ndarray]
    low: Optional[float] = None
    high: Optional[float] = None
    radial: object = None

    @property
    def has_range(self) -> bool:
        return self.low is not None and self.high is not None

    @property
    def width(self) -> float:
        if not self.has_range:
            raise ConfigError(f"泛函 {self.name} 没有声明取值范围")
        return self.high - self.low

    def values(self, states) -> np.ndarray:
        return np.asarray(self.rule(np.asarray(states, dtype=float)), dtype=float)

    def __call__(self, state) -> float:
        if isinstance(state, mc.SquareConfig):
            state = state.points
        elif isinstance(state, mc.PlanarPoint):
            state = state.as_array()
        return float(self.values(state))


@dataclass(frozen=True)
class PsrfReport:
    """
    一个泛函的 PSRF 诊断结果。

    R 按 df_mode 选用 (d+3)/(d+1) 因子；R_unit 与 R_moment 两种变体都保留以便核对。
    d 为 None 表示矩估计分母为零（自由度视为无穷，因子为 1）。
    """
    functional: str
    B: float
    W: float
    sigma2_hat: float
    V_hat: float
    R: float
    R_unit: float
    R_moment: float
    d: Optional[float]
    df_mode: str
    m: int
    n: int
    n_star: int

    def as_dict(self) -> dict:
        return asdict(self)


def _post_burn_in(traces: Sequence[ChainTrace], fun: FunctionalSpec, n_star: int) -> np.ndarray:
    if len(traces) < 2:
        raise ConfigError(f"PSRF 至少需要 2 条链，实际为 {len(traces)}")
    lengths = {trace.iterations for trace in traces}
    if len(lengths) != 1:
        raise ConfigError(f"各链长度不一致: {sorted(lengths)}")
    n = lengths.pop()
    if n - n_star < 2 or n_star < 0:
        raise ConfigError(f"burn-in 之后至少需要 2 个样本 (n={n}, n*={n_star})")
    return np.stack([fun.values(trace.states[n_star + 1:]) for trace in traces])


def between_within_values(values: np.ndarray) -> tuple[float, float]:
    """
    由 burn-in 之后的泛函值矩阵 (m, L) 计算链间方差 B 与链内方差 W。

        B = L/(m-1) Σ_j (ψ̄_j - ψ̄)²,  W = 1/(m(L-1)) Σ_j Σ_t (ψ_jt - ψ̄_j)²
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 2:
        raise ConfigError(f"需要至少 2 条链、每条至少 2 个样本，实际形状 {values.shape}")
    m, length = values.shape
    # 先平移再求均值，完全相同的样本得到精确的 0
    within = values - values[:, :1]
    W = float(np.sum((within - within.mean(axis=1)[:, None]) ** 2)) / (m * (length - 1))
    between = values.mean(axis=1)
    between = between - between[0]
    B = length * float(np.sum((between - between.mean()) ** 2)) / (m - 1)
    return B, W


def between_within(traces: Sequence[ChainTrace], fun: FunctionalSpec, n_star: int) -> tuple[float, float]:
    """对 t = n*+1..n 的泛函值计算 (B, W)。"""
    return between_within_values(_post_burn_in(traces, fun, n_star))


def _moment_df(values: np.ndarray, B: float, V_hat: float) -> Optional[float]:
    """Gelman-Rubin 的自由度矩估计 d = 2 V̂² / Var̂(V̂)；方差估计为 0 时返回 None。"""
    m, length = values.shape
    chain_means = values.mean(axis=1)
    chain_vars = values.var(axis=1, ddof=1)
    grand = chain_means.mean()
    var_s2 = float(np.var(chain_vars, ddof=1))
    cov_s2_mean2 = float(np.cov(chain_vars, chain_means**2)[0, 1])
    cov_s2_mean = float(np.cov(chain_vars, chain_means)[0, 1])
    var_v = (((length - 1) / length) ** 2 * var_s2 / m
             + ((m + 1) / (m * length)) ** 2 * 2.0 * B**2 / (m - 1)
             + 2.0 * (m + 1) * (length - 1) / (m * length**2) * (length / m)
             * (cov_s2_mean2 - 2.0 * grand * cov_s2_mean))
    if not var_v > 0:
        return None
    return 2.0 * V_hat**2 / var_v


def psrf_values(values: np.ndarray, df_mode: str = "unit", name: str = "", n: Optional[int] = None,
                n_star: int = 0) -> PsrfReport:
    """
    由 burn-in 之后的值矩阵计算 PSRF。

    Args:
        values: 形状 (m, L)。
        df_mode: "unit" 取因子 1，"moment" 用矩估计的 d。
        name: 泛函名称，写入报告。
        n, n_star: 回显用的总长度与 burn-in。

    Raises:
        DegenerateDiagnostic: W = 0，R 无定义。
    """
    if df_mode not in DF_MODES:
        raise ConfigError(f"未知 df_mode: {df_mode}（可选 {DF_MODES}）")
    values = np.asarray(values, dtype=float)
    B, W = between_within_values(values)
    if W == 0.0:
        raise DegenerateDiagnostic(f"泛函 {name or '?'} 的链内方差 W = 0，R 无定义")
    m, length = values.shape
    sigma2_hat = B / length + (length - 1) / length * W
    V_hat = sigma2_hat + B / (m * length)
    d = _moment_df(values, B, V_hat)
    factor_moment = 1.0 if d is None else (d + 3.0) / (d + 1.0)
    r_unit = V_hat / W
    r_moment = factor_moment * V_hat / W
    return PsrfReport(
        functional=name, B=B, W=W, sigma2_hat=sigma2_hat, V_hat=V_hat,
        R=r_unit if df_mode == "unit" else r_moment, R_unit=r_unit, R_moment=r_moment,
        d=d, df_mode=df_mode, m=m, n=length + n_star if n is None else n, n_star=n_star,
    )


def psrf(traces: Sequence[ChainTrace], fun: FunctionalSpec, n_star: int, df_mode: str = "unit") -> PsrfReport:
    """
    计算泛函 fun 在集合上的潜在尺度缩减因子。

    Args:
        traces: 等长的链轨迹，至少 2 条。
        fun: 泛函。
        n_star: burn-in 长度。
        df_mode: "unit" 或 "moment"。

    Returns:
        PsrfReport: 含 B、W、σ̂²、V̂、R。
    """
    values = _post_burn_in(traces, fun, n_star)
    report = psrf_values(values, df_mode, fun.name, traces[0].iterations, n_star)
    logger.info(f"{fun.name}: B={report.B:.4f}, W={report.W:.4f}, V̂={report.V_hat:.4f}, R={report.R:.4f}")
    return report


def psrf_all(traces: Sequence[ChainTrace], functionals: Sequence[FunctionalSpec], n_star: int,
             df_mode: str = "unit") -> Dict[str, PsrfReport]:
    """对多个泛函逐一计算 PSRF，按名称返回。"""
    return {fun.name: psrf(traces, fun, n_star, df_mode) for fun in functionals}


def _square_psi(x):
    return np.linalg.norm(x, axis=-1).sum(axis=-1)


def _square_phi1(x):
    return x.sum(axis=(-2, -1))


def _square_phi2(x):
    return (x[..., 0] * x[..., 1]).sum(axis=-1)


def _planar_radius(x):
    return np.linalg.norm(x, axis=-1)


def _planar_phi1(x):
    return np.abs(x[..., 0]) + np.abs(x[..., 1])


def _planar_band(x):
    r = np.linalg.norm(x, axis=-1)
    return ((r >= 0.5) & (r < 1.5)).astype(float)


PLANAR_BAND_RADIAL = RadialFunctional("phi2", lambda r: 1.0 if 0.5 <= r < 1.5 else 0.0, breakpoints=(0.5, 1.5))


def builtin_functionals(model: str, n_particles: int = 3) -> List[FunctionalSpec]:
    """
    诊断用的内置泛函 ψ、φ1、φ2。

    正方形：ψ 为各粒子半径之和，φ1 为全部坐标之和，φ2 为 Σ x_i1 x_i2。
    平面：ψ = ||x||，φ1 = |x1| + |x2|，φ2 为 0.5 <= ||x|| < 1.5 的示性函数。
    """
    if model == SQUARE:
        return [
            FunctionalSpec("psi", SQUARE, _square_psi, 0.0, n_particles * math.sqrt(2.0)),
            FunctionalSpec("phi1", SQUARE, _square_phi1, 0.0, 2.0 * n_particles),
            FunctionalSpec("phi2", SQUARE, _square_phi2, 0.0, float(n_particles)),
        ]
    if model == PLANAR:
        return [
            FunctionalSpec("psi", PLANAR, _planar_radius),
            FunctionalSpec("phi1", PLANAR, _planar_phi1),
            FunctionalSpec("phi2", PLANAR, _planar_band, 0.0, 1.0, radial=PLANAR_BAND_RADIAL),
        ]
    raise DomainError(f"未知模型: {model}")
