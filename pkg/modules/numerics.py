"""
径向与平面积分的确定性数值积分：平稳期望、归一化常数和漂移算子 PV。

一维积分统一走 scipy.integrate.quad（自适应 Gauss-Kronrod），
结果包装成 QuadratureResult；未收敛时抛出带最佳估计的 QuadratureError。
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

from scipy.integrate import quad
from scipy.optimize import brentq

from modules import model_core as mc
from modules.config import DEFAULT_TOL_EXPECTATION, DEFAULT_TOL_VERIFY, R_MAX, R_MIN
from modules.errors import DomainError, QuadratureError

logger = logging.getLogger(__name__)

# 自适应细分的深度上限
QUAD_LIMIT = 400


@dataclass(frozen=True)
class QuadratureResult:
    """积分值、误差估计与被积函数调用次数。"""
    value: float
    error_estimate: float
    evaluations: int


@dataclass(frozen=True)
class RadialFunctional:
    """
    平面上的泛函在半径 r 处的角向平均 g(r)。

    Attributes:
        name: 名称。
        radial: r -> 角向平均值；径向泛函直接就是 g(r)。
        sup_abs: sup |g|，用于截断尾项的上界。
        breakpoints: g 不光滑的半径，积分时作为分段点。
    """
    name: str
    radial: Callable[[float], float]
    sup_abs: float = 1.0
    breakpoints: Sequence[float] = field(default_factory=tuple)


def quad_1d(g: Callable[[float], float], a: float, b: float, tol: float = DEFAULT_TOL_EXPECTATION,
            points: Sequence[float] = ()) -> QuadratureResult:
    """
    自适应一维积分 ∫_a^b g(r) dr。

    Args:
        g: 在 [a, b] 上有限的被积函数。
        a, b: 积分区间，要求 a < b。
        tol: 绝对误差容差。
        points: 被积函数的不光滑点，区间外的点会被忽略。

    Returns:
        QuadratureResult: 成功时 error_estimate <= tol。

    Raises:
        QuadratureError: 达到细分上限仍未满足容差。
    """
    if not a < b:
        raise DomainError(f"积分区间需要 a < b，实际为 [{a}, {b}]")
    inner = sorted({float(p) for p in points if a < p < b})
    res = quad(g, a, b, epsabs=tol, epsrel=0.0, limit=QUAD_LIMIT, points=inner or None, full_output=1)
    value, err, info = res[0], res[1], res[2]
    if len(res) > 3 or not err <= tol:
        message = res[3] if len(res) > 3 else "误差估计超过容差"
        raise QuadratureError(f"积分 [{a}, {b}] 未收敛: {message}", best_estimate=value, error_estimate=err)
    return QuadratureResult(value=float(value), error_estimate=float(err), evaluations=int(info["neval"]))


def _stationary_weight(r: float) -> float:
    # 2π r e^{-(r + 1/r)}，极坐标下的未归一化平稳密度
    return 2.0 * math.pi * r * math.exp(-(r + 1.0 / r))


def truncation_tail_bound(sup_abs: float = 1.0, r_max: float = R_MAX) -> float:
    """丢弃尾项 2π ∫_{r_max}^∞ r e^{-(r+1/r)} sup|g| dr 的上界 2π (r_max+1) e^{-r_max} sup|g|。"""
    return 2.0 * math.pi * (r_max + 1.0) * math.exp(-r_max) * sup_abs


def stationary_integral(fun: RadialFunctional, tol: float = DEFAULT_TOL_EXPECTATION) -> QuadratureResult:
    """
    平稳密度下的未归一化积分 2π ∫ g(r) r e^{-(r+1/r)} dr（截断在 [R_MIN, R_MAX]）。

    Raises:
        QuadratureError: 截断尾项上界不小于 tol，或积分未收敛。
    """
    tail = truncation_tail_bound(fun.sup_abs)
    if tail >= tol:
        raise QuadratureError(f"截断尾项上界 {tail:.3e} 不小于容差 {tol:.1e}", error_estimate=tail)
    result = quad_1d(lambda r: fun.radial(r) * _stationary_weight(r), R_MIN, R_MAX, tol,
                     points=(1.0,) + tuple(fun.breakpoints))
    logger.debug(f"{fun.name}: 积分 {result.value:.10g}，误差 {result.error_estimate:.2e}，调用 {result.evaluations} 次")
    return result


@lru_cache(maxsize=None)
def normalizing_constant(tol: float = DEFAULT_TOL_EXPECTATION) -> float:
    """2π ∫ r e^{-(r+1/r)} dr ≈ 3.189，按容差缓存。"""
    return stationary_integral(RadialFunctional("one", lambda r: 1.0), tol).value


def stationary_expectation_planar(fun: RadialFunctional, tol: float = DEFAULT_TOL_EXPECTATION) -> float:
    """
    平面模型平稳分布下的期望 E_π[g] = ∫ g π / ∫ π。

    Args:
        fun: 径向（或已做角向平均的）泛函。
        tol: 积分容差。

    Returns:
        float: 期望值。
    """
    return stationary_integral(fun, tol).value / normalizing_constant(tol)


def angular_average(g: Callable[[float, float], float], r: float, tol: float = DEFAULT_TOL_EXPECTATION,
                    breakpoints: Sequence[float] = ()) -> float:
    """
    (1/2π) ∫_0^{2π} g(r, θ) dθ，g 需关于 θ -> -θ 与 θ -> π-θ 对称，因此只积分 [0, π/2]。
    """
    return quad_1d(lambda theta: g(r, theta), 0.0, math.pi / 2.0, tol, points=breakpoints).value * 2.0 / math.pi


def _acceptance_switch_points(r_x: float, lo: float, hi: float) -> list:
    """α(r_x, r) 在 [lo, hi] 内从 1 变为 f(r_x)/f(r) 的位置：r_x 本身与 f 另一支上的等值点。"""
    target = float(mc.log_f_radial(r_x))
    points = [r_x]

    def excess(r):
        return float(mc.log_f_radial(r)) - target

    golden = mc.GOLDEN_RADIUS
    if r_x < golden and hi > golden and excess(hi) > 0:
        points.append(brentq(excess, golden, hi))
    elif r_x > golden:
        left = max(lo, 1e-12)
        if left < golden and excess(left) > 0:
            points.append(brentq(excess, left, golden))
    return [p for p in points if lo < p < hi]


def pv_ratio_quadrature(r_x: float, tol: float = DEFAULT_TOL_VERIFY) -> float:
    """
    PV(x) / V(x)，直接对比值积分以免 V 在小半径处溢出：

        (1/(2 r_x)) ∫_{|r_x-1|}^{r_x+1} [α e^{(H(r)-H(r_x))/2} + (1-α)] r dr

    Args:
        r_x: 当前点半径，必须为正。
        tol: 比值的绝对容差。
    """
    if not r_x > 0:
        raise DomainError(f"半径必须严格为正，实际为 {r_x}")
    hx = r_x + 1.0 / r_x
    lfx = math.log(r_x) + hx
    lo, hi = abs(r_x - 1.0), r_x + 1.0
    scale = 0.5 / r_x

    def integrand(r):
        h = r + 1.0 / r
        log_alpha = min(0.0, lfx - (math.log(r) + h))
        alpha = math.exp(log_alpha)
        return (math.exp(log_alpha + 0.5 * (h - hx)) + 1.0 - alpha) * r * scale

    return quad_1d(integrand, lo, hi, tol, points=_acceptance_switch_points(r_x, lo, hi)).value


def pv_quadrature(r_x: float, tol: float = DEFAULT_TOL_VERIFY) -> float:
    """
    漂移算子 PV(x) = ∫ V(y) P(x, dy)，提议在 B_x 上均匀且核径向对称，化为一维积分。
    """
    return float(mc.v_lyapunov(r_x)) * pv_ratio_quadrature(r_x, tol)


def stationary_expectation_v(tol: float = DEFAULT_TOL_EXPECTATION, r_max: float = 100.0) -> float:
    """
    E_π[V]，V = exp((r + 1/r)/2) 无界，单独处理截断：
    被积函数 2π r e^{-(r+1/r)/2} 在 r_max 之外的尾项不超过 2π (2 r_max + 4) e^{-r_max/2}。
    """
    tail = 2.0 * math.pi * (2.0 * r_max + 4.0) * math.exp(-r_max / 2.0)
    if tail >= tol:
        raise QuadratureError(f"截断尾项上界 {tail:.3e} 不小于容差 {tol:.1e}", error_estimate=tail)
    result = quad_1d(lambda r: 2.0 * math.pi * r * math.exp(-0.5 * (r + 1.0 / r)), R_MIN, r_max, tol,
                     points=(1.0,))
    return result.value / normalizing_constant(tol)
