#!/usr/bin/python3
# -*- coding: utf-8 -*-
"""
收敛界计算器与数值证书。

- 正方形模型：一致小集条件的 ε 公式与 (1-ε)^{floor(n/n0)} 全变差界；
- 平面模型：最小化条件与漂移条件的数值审计、证明中的常数；
- shift-coupling 定量界及其 r 的优化。

审计类函数在断言失败时抛出 CertificateViolation，其余参数问题抛出 DomainError /
InadmissibleParameter。
"""

import logging
import math
import concurrent.futures
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from modules import model_core as mc
from modules.config import DEFAULT_TOL_VERIFY, DRIFT_GRID_POINTS, DRIFT_R_CHECK, DRIFT_R_LOW
from modules.errors import CertificateViolation, DomainError, InadmissibleParameter
from modules.numerics import QuadratureResult, pv_ratio_quadrature, quad_1d
from modules.samplers import RngStream

logger = logging.getLogger(__name__)

# 正方形模型（n = 3）的证书常数
THEOREM1_SCALE = 0.48
THEOREM1_C1 = 8.49
THEOREM1_C2 = 19.76

# 平面模型的证书常数
PLANAR_N0 = 2
PLANAR_EPSILON = 3.5e-5
SMALL_SET = (0.25, 4.0)
DRIFT_LAMBDA = 0.995
DRIFT_A = math.exp(2.7)
DRIFT_B = math.exp(2.7) - 0.995
DRIFT_D = math.exp(17.0 / 8.0)

# 最小化密度的支撑 D = {2 <= ||y|| <= 9/4} 及两段线性函数的交点
OVERLAP_LO, OVERLAP_HI = 2.0, 9.0 / 4.0
OVERLAP_CROSS = 0.4925 / 0.23

PAPER_R = 0.0016


@dataclass(frozen=True)
class MinorizationCertificate:
    """P^{n0}(x, ·) >= ε Q(·) 对 x ∈ C 成立。"""
    n0: int
    epsilon: float
    small_set: str = "whole space"
    minorizing_density: str = ""
    r_lo: Optional[float] = None
    r_hi: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise DomainError(f"ε 必须在 (0, 1] 内，实际为 {self.epsilon}")
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise DomainError(f"n0 必须为正整数，实际为 {self.n0}")


@dataclass(frozen=True)
class DriftCertificate:
    """PV <= λV + b 1_C，C = {V <= d}，A = sup_C PV。"""
    lam: float
    b: float
    d: float
    A: float
    v_description: str = "v_lyapunov: V(r) = exp((r + 1/r) / 2)"

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise DomainError(f"λ 必须在 (0, 1) 内，实际为 {self.lam}")
        if not (self.b > 0 and self.d > 0 and self.A > 0):
            raise DomainError("b、d、A 必须为正")
        if self.A > self.lam * self.d + self.b:
            raise DomainError(f"A={self.A} 超过 λd + b={self.lam * self.d + self.b}")


@dataclass(frozen=True)
class BoundReport:
    """
    界计算结果。

    Attributes:
        kind: "uniform"、"shift-coupling" 或 "drift"。
        inputs: 输入参数回显。
        values: 计算出的数值（均非负）。
        notes: 推导说明。
    """
    kind: str
    inputs: dict
    values: dict
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        negative = {k: v for k, v in self.values.items() if isinstance(v, (int, float)) and v < 0}
        if negative:
            raise DomainError(f"报告中出现负值: {negative}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ProofConstants:
    """平面模型最小化证明中的四个接受率下界及其乘积。"""
    m1: float
    m2: float
    m1_prime: float
    m2_prime: float

    @property
    def lower_product(self) -> float:
        # C_1 分支：(m1 m1') / (16π) 的系数
        return self.m1 * self.m1_prime

    @property
    def upper_product(self) -> float:
        # C_2 分支：(m2 m2') / (32π) 写成 /(16π) 后的系数
        return self.m2 * self.m2_prime / 2.0


@dataclass(frozen=True)
class DriftGrid:
    """漂移审计网格：每个区段的点数、下端半径与外侧截断半径。"""
    points: int = DRIFT_GRID_POINTS
    r_low: float = DRIFT_R_LOW
    r_check: float = DRIFT_R_CHECK
    tol: float = DEFAULT_TOL_VERIFY

    def __post_init__(self):
        if self.points < 2:
            raise DomainError("每个区段至少需要 2 个网格点")
        if not 0.0 < self.r_low < SMALL_SET[0] or not self.r_check > SMALL_SET[1]:
            raise DomainError("网格需覆盖 (r_low, 1/4)、[1/4, 4]、(4, r_check]")


# ---------------------------------------------------------------------------
# 正方形模型：一致遍历
# ---------------------------------------------------------------------------

def _require_nonnegative(**values) -> None:
    for name, v in values.items():
        if not v >= 0:
            raise DomainError(f"{name} 必须非负，实际为 {v}")


def epsilon_theorem1(c1: float, c2: float, n_particles: int = 3) -> float:
    """
    正方形模型一致最小化条件的 ε = 0.48 exp(-8.49 c1 - 19.76 c2)。

    常数只对 3 个粒子推导过，其他粒子数直接拒绝。
    """
    _require_nonnegative(c1=c1, c2=c2)
    if n_particles != 3:
        raise DomainError(f"ε 公式只适用于 3 个粒子，实际为 {n_particles}")
    return THEOREM1_SCALE * math.exp(-THEOREM1_C1 * c1 - THEOREM1_C2 * c2)


def square_minorization_constants(c1: float, c2: float) -> dict:
    """
    复算 ε 公式背后的常数：m^2 的指数系数 2·3√2 与 2(12 - 3/√2)，
    以及好集合 {两两距离 >= 1/4} 的测度下界 (1 - π/16)(1 - π/8)。

    Raises:
        CertificateViolation: 复算值不被 8.49、19.76、0.48 覆盖。
    """
    _require_nonnegative(c1=c1, c2=c2)
    coef_c1 = 2.0 * 3.0 * math.sqrt(2.0)
    coef_c2 = 2.0 * (12.0 - 3.0 / math.sqrt(2.0))
    leb_lower = (1.0 - math.pi / 16.0) * (1.0 - math.pi / 8.0)
    if coef_c1 > THEOREM1_C1:
        raise CertificateViolation(f"c1 系数 {coef_c1:.5f} 超过 {THEOREM1_C1}", "coef_c1", coef_c1)
    if coef_c2 > THEOREM1_C2:
        raise CertificateViolation(f"c2 系数 {coef_c2:.5f} 超过 {THEOREM1_C2}", "coef_c2", coef_c2)
    if leb_lower < THEOREM1_SCALE:
        raise CertificateViolation(f"测度下界 {leb_lower:.5f} 小于 {THEOREM1_SCALE}", "leb_lower", leb_lower)
    return {
        "coef_c1": coef_c1,
        "coef_c2": coef_c2,
        "leb_lower": leb_lower,
        "epsilon_raw": leb_lower * math.exp(-coef_c1 * c1 - coef_c2 * c2),
        "epsilon_certified": epsilon_theorem1(c1, c2),
    }


def leb_good_set_estimate(samples: int = 200_000, seed: int = 0) -> tuple[float, float]:
    """
    蒙特卡洛估计 [0,1]^6 中两两距离都 >= 1/4 的三粒子构型所占体积。

    Returns:
        tuple[float, float]: (估计值, 标准误)。
    """
    pts = RngStream(seed, 0).uniform((samples, 3, 2))
    d01 = np.linalg.norm(pts[:, 0] - pts[:, 1], axis=-1)
    d02 = np.linalg.norm(pts[:, 0] - pts[:, 2], axis=-1)
    d12 = np.linalg.norm(pts[:, 1] - pts[:, 2], axis=-1)
    good = (d01 >= 0.25) & (d02 >= 0.25) & (d12 >= 0.25)
    p = float(good.mean())
    return p, math.sqrt(p * (1.0 - p) / samples)


def tv_bound_uniform(epsilon: float, n0: int, n: int) -> float:
    """(1-ε)^{floor(n/n0)}，取整用整数运算。"""
    if not 0.0 < epsilon <= 1.0:
        raise DomainError(f"ε 必须在 (0, 1] 内，实际为 {epsilon}")
    if int(n0) != n0 or n0 < 1 or int(n) != n or n < 0:
        raise DomainError(f"需要 n0 >= 1、n >= 0 的整数，实际为 n0={n0}, n={n}")
    return (1.0 - epsilon) ** (int(n) // int(n0))


def iterations_for_tolerance(epsilon: float, n0: int, delta: float) -> int:
    """
    使 tv_bound_uniform(ε, n0, n) <= δ 的最小 n，即 n0 · ceil(ln δ / ln(1-ε))。

    Raises:
        DomainError: ε = 0（界永远不下降）或参数越界。
    """
    if epsilon == 0:
        raise DomainError("ε = 0 时全变差界不会下降，所需迭代次数无界")
    if not 0.0 < epsilon <= 1.0 or not 0.0 < delta < 1.0:
        raise DomainError(f"需要 0 < ε <= 1、0 < δ < 1，实际为 ε={epsilon}, δ={delta}")
    if epsilon == 1.0:
        return int(n0)
    k = max(1, math.ceil(math.log(delta) / math.log1p(-epsilon)))
    # 浮点对数可能差一步，用精确的界本身修正
    while tv_bound_uniform(epsilon, n0, k * n0) > delta:
        k += 1
    while k > 1 and tv_bound_uniform(epsilon, n0, (k - 1) * n0) <= delta:
        k -= 1
    return k * int(n0)


def certified_epsilon(epsilon: float, digits: int = 2) -> float:
    """把 ε 向下截到 digits 位有效数字；更小的 ε 仍是合法的最小化常数。"""
    if not 0.0 < epsilon <= 1.0:
        raise DomainError(f"ε 必须在 (0, 1] 内，实际为 {epsilon}")
    exponent = math.floor(math.log10(epsilon))
    scale = 10.0 ** (digits - 1 - exponent)
    return math.floor(epsilon * scale) / scale


def uniform_bound_report(c1: float, c2: float, delta: float, n: int) -> BoundReport:
    """
    正方形模型的一致遍历界报告：ε、第 n 步的界以及达到 δ 所需步数。

    界与步数用截到两位有效数字的 ε（c1 = c2 = 0.1 时为 0.028，对应 163 步）。
    """
    eps_exact = epsilon_theorem1(c1, c2)
    eps = certified_epsilon(eps_exact)
    constants = square_minorization_constants(c1, c2)
    return BoundReport(
        kind="uniform",
        inputs={"c1": c1, "c2": c2, "delta": delta, "n": n, "n0": 1},
        values={
            "epsilon": eps,
            "epsilon_exact": eps_exact,
            "epsilon_raw": constants["epsilon_raw"],
            "bound_at_n": tv_bound_uniform(eps, 1, n),
            "iterations_for_tolerance": iterations_for_tolerance(eps, 1, delta),
            "iterations_for_tolerance_exact": iterations_for_tolerance(eps_exact, 1, delta),
        },
        notes=("ε = 0.48 exp(-8.49 c1 - 19.76 c2)，仅适用于 3 个粒子",
               "界为 (1-ε)^n，n0 = 1，ε 向下截到两位有效数字"),
    )


# ---------------------------------------------------------------------------
# 平面模型：最小化与漂移证书
# ---------------------------------------------------------------------------

def certificate_theorem2() -> tuple[MinorizationCertificate, DriftCertificate]:
    """平面模型经证明的常数：n0=2、ε=3.5e-5、C 为半径带 [1/4, 4]；λ=0.995、b=e^{2.7}-0.995、d=e^{17/8}、A=e^{2.7}。"""
    minor = MinorizationCertificate(
        n0=PLANAR_N0,
        epsilon=PLANAR_EPSILON,
        small_set=f"radial band [{SMALL_SET[0]}, {SMALL_SET[1]}]",
        minorizing_density="1_D(y) min{0.13(9/4 - |y|), 0.1(|y| - 2)} / (16π) 归一化，D = {2 <= |y| <= 9/4}",
        r_lo=SMALL_SET[0],
        r_hi=SMALL_SET[1],
    )
    drift = DriftCertificate(lam=DRIFT_LAMBDA, b=DRIFT_B, d=DRIFT_D, A=DRIFT_A)
    return minor, drift


def minorization_density(r: float) -> float:
    """D 上的最小化密度（对 dy），D 外为 0。"""
    if not OVERLAP_LO <= r <= OVERLAP_HI:
        return 0.0
    return min(0.13 * (OVERLAP_HI - r), 0.1 * (r - OVERLAP_LO)) / (16.0 * math.pi)


def minorization_mass_closed_form() -> float:
    """最小化密度在 D 上的总质量，由分段原函数精确给出。"""
    def left(r):
        # ∫ 0.1 (r - 2) r / 8 dr
        return 0.1 / 8.0 * (r**3 / 3.0 - r**2)

    def right(r):
        # ∫ 0.13 (9/4 - r) r / 8 dr
        return 0.13 / 8.0 * (OVERLAP_HI * r**2 / 2.0 - r**3 / 3.0)

    return (left(OVERLAP_CROSS) - left(OVERLAP_LO)) + (right(OVERLAP_HI) - right(OVERLAP_CROSS))


def verify_minorization_planar(tol: float = 1e-13) -> QuadratureResult:
    """
    对最小化密度在 D 上积分（2π r 极坐标因子），断言质量 >= 3.5e-5，且与闭式解相差不超过 1e-12。

    Raises:
        CertificateViolation: 质量不足或与闭式解不符。
    """
    result = quad_1d(lambda r: 2.0 * math.pi * r * minorization_density(r), OVERLAP_LO, OVERLAP_HI, tol,
                     points=(OVERLAP_CROSS,))
    exact = minorization_mass_closed_form()
    logger.info(f"最小化质量: 积分 {result.value:.12e}，闭式 {exact:.12e}，证书 ε = {PLANAR_EPSILON}")
    if abs(result.value - exact) > 1e-12:
        raise CertificateViolation(f"积分值 {result.value} 与闭式解 {exact} 不符", "mass", result.value)
    if result.value < PLANAR_EPSILON:
        raise CertificateViolation(f"最小化质量 {result.value:.3e} 小于 {PLANAR_EPSILON}", "mass", result.value)
    return result


def _f_ratio(r_num: float, r_den: float) -> float:
    return math.exp(float(mc.log_f_radial(r_num) - mc.log_f_radial(r_den)))


def proof_constants_planar() -> ProofConstants:
    """
    计算 m1 = f(g)/f(5/4)（g 为 f 的极小点）、m2 = f(2)/f(13/4)、m1' = f(1)/f(9/4)、
    m2' = min{f(3)/f(9/4), 1}，并断言 m1 >= 0.59、m2 >= 0.21、m1' >= 0.22、m2' = 1。

    证明的中间行把 m1 m1' 与 m2 m2' 写反了；这里分别核对 C_1、C_2 两个分支真正用到的乘积。
    """
    consts = ProofConstants(
        m1=_f_ratio(mc.GOLDEN_RADIUS, 1.25),
        m2=_f_ratio(2.0, 3.25),
        m1_prime=_f_ratio(1.0, 2.25),
        m2_prime=min(_f_ratio(3.0, 2.25), 1.0),
    )
    checks = [
        ("m1", consts.m1, 0.59),
        ("m2", consts.m2, 0.21),
        ("m1_prime", consts.m1_prime, 0.22),
        ("m1*m1_prime", consts.lower_product, 0.13),
        ("m2*m2_prime/2", consts.upper_product, 0.1),
    ]
    for name, value, floor in checks:
        if value < floor:
            raise CertificateViolation(f"{name} = {value:.5f} 小于 {floor}", name, value)
    if consts.m2_prime != 1.0:
        raise CertificateViolation(f"m2' = {consts.m2_prime} 不等于 1", "m2_prime", consts.m2_prime)
    return consts


def drift_case1_constants() -> tuple[float, float, float]:
    """r > 4 时漂移界的闭式常数 (m1, m2, m3)。"""
    q = math.exp(-11.0 / 24.0)
    m1 = 1.0 + math.exp(-1.0) - 2.0 * math.exp(-0.5)
    m2 = 24.0 * (1.0 - q) / 11.0
    m3 = (840.0 * q - 576.0) / 121.0
    return m1, m2, m3


def drift_case1_ratio(r: float) -> float:
    """
    r >= 4 时 PV(x)/V(x) 的闭式上界 (1/2)(1 + 1/(2r) + m1 + m2 + m3/r)，关于 r 单调不增。
    """
    if r < SMALL_SET[1]:
        raise DomainError(f"闭式漂移界只在 r >= 4 时成立，实际为 {r}")
    m1, m2, m3 = drift_case1_constants()
    return 0.5 * (1.0 + 1.0 / (2.0 * r) + m1 + m2 + m3 / r)


def _grid_values(radii: np.ndarray, tol: float, threads: int) -> np.ndarray:
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, threads), thread_name_prefix="grid") as executor:
        return np.fromiter(executor.map(lambda r: pv_ratio_quadrature(float(r), tol), radii), dtype=float,
                           count=len(radii))


def verify_drift_planar(grid: DriftGrid = DriftGrid(), threads: int = 1) -> BoundReport:
    """
    在网格上数值审计漂移条件：C 外各点 PV/V <= 0.995，C 内各点 PV <= e^{2.7}。
    r_check 之外改用闭式界（它关于 r 单调不增，只需在 r_check 处求值）。

    Args:
        grid: 网格规格。
        threads: 网格积分的线程数，只影响速度。

    Returns:
        BoundReport: 各区段最大比值及位置、相邻网格点的最大跳变。

    Raises:
        CertificateViolation: 任一网格点违反条件，附带出问题的半径。
    """
    lo, hi = SMALL_SET
    below = np.linspace(grid.r_low, lo, grid.points, endpoint=False)
    inside = np.linspace(lo, hi, grid.points)
    above = np.linspace(hi, grid.r_check, grid.points + 1)[1:]

    logger.info(f"开始漂移审计：每个区段 {grid.points} 个网格点，容差 {grid.tol:.0e}")
    ratio_below = _grid_values(below, grid.tol, threads)
    ratio_above = _grid_values(above, grid.tol, threads)
    pv_inside = _grid_values(inside, grid.tol, threads) * mc.v_lyapunov(inside)

    for radii, ratios in ((below, ratio_below), (above, ratio_above)):
        bad = np.nonzero(ratios > DRIFT_LAMBDA)[0]
        if bad.size:
            r = float(radii[bad[0]])
            raise CertificateViolation(f"r = {r:.6g} 处 PV/V = {ratios[bad[0]]:.6f} > {DRIFT_LAMBDA}", r,
                                       float(ratios[bad[0]]))
    bad = np.nonzero(pv_inside > DRIFT_A)[0]
    if bad.size:
        r = float(inside[bad[0]])
        raise CertificateViolation(f"r = {r:.6g} 处 PV = {pv_inside[bad[0]]:.6f} > e^2.7", r, float(pv_inside[bad[0]]))
    tail_ratio = drift_case1_ratio(grid.r_check)
    if tail_ratio >= DRIFT_LAMBDA:
        raise CertificateViolation(f"r > {grid.r_check} 的闭式界 {tail_ratio:.6f} 不小于 {DRIFT_LAMBDA}",
                                   grid.r_check, tail_ratio)

    k_below, k_above, k_inside = int(np.argmax(ratio_below)), int(np.argmax(ratio_above)), int(np.argmax(pv_inside))
    values = {
        "max_ratio_below_C": float(ratio_below[k_below]),
        "argmax_ratio_below_C": float(below[k_below]),
        "max_ratio_above_C": float(ratio_above[k_above]),
        "argmax_ratio_above_C": float(above[k_above]),
        "max_pv_in_C": float(pv_inside[k_inside]),
        "argmax_pv_in_C": float(inside[k_inside]),
        "tail_ratio_beyond_r_check": tail_ratio,
        "continuity_ratio_below_C": float(np.max(np.abs(np.diff(ratio_below)))),
        "continuity_ratio_above_C": float(np.max(np.abs(np.diff(ratio_above)))),
        "continuity_pv_in_C": float(np.max(np.abs(np.diff(pv_inside)))),
    }
    logger.info(f"漂移审计通过: C 外最大比值 {max(values['max_ratio_below_C'], values['max_ratio_above_C']):.6f}，"
                f"C 内最大 PV {values['max_pv_in_C']:.4f}")
    return BoundReport(
        kind="drift",
        inputs={"points_per_regime": grid.points, "r_low": grid.r_low, "r_check": grid.r_check, "tol": grid.tol,
                "lambda": DRIFT_LAMBDA, "A": DRIFT_A},
        values=values,
        notes=("网格审计是数值检查，不是形式证明",
               f"r > {grid.r_check} 用闭式界 (1/2)(1 + 1/(2r) + m1 + m2 + m3/r)"),
    )


def stationary_v_bound(lam: float, b: float) -> float:
    """平稳分布下 E_π(V) 的上界 b / (1 - λ)。"""
    if not 0.0 < lam < 1.0:
        raise DomainError(f"λ 必须在 (0, 1) 内，实际为 {lam}")
    if not b > 0:
        raise DomainError(f"b 必须为正，实际为 {b}")
    return b / (1.0 - lam)


# ---------------------------------------------------------------------------
# shift-coupling 定量界
# ---------------------------------------------------------------------------

def admissibility_factor(n0: int, lam: float, A: float, r: float) -> float:
    """λ^{1 - n0 r} A^r，必须小于 1。"""
    return math.exp((1.0 - n0 * r) * math.log(lam) + r * math.log(A))


def admissible_r_max(n0: int, lam: float, A: float) -> float:
    """可行 r 的上确界 -ln λ / (ln A - n0 ln λ)，截在 1。"""
    slope = math.log(A) - n0 * math.log(lam)
    if slope <= 0:
        return 1.0
    return min(1.0, -math.log(lam) / slope)


def shift_coupling_coefficient(minor: MinorizationCertificate, drift: DriftCertificate, e_nu_v: float,
                               r: float) -> float:
    """
    shift-coupling 界中与 n 无关的系数：

        2(1-ε)^r / (1-(1-ε)^r) + λ^{-n0+1-n0 r} A^r / (1 - λ^{1-n0 r} A^r) · (E_ν V + b/(1-λ))

    Raises:
        InadmissibleParameter: r 不在 (0, 1) 内或 λ^{1-n0 r} A^r >= 1。
    """
    if not 0.0 < r < 1.0:
        raise InadmissibleParameter(f"r 必须在 (0, 1) 内，实际为 {r}")
    n0, lam, A = minor.n0, drift.lam, drift.A
    factor = admissibility_factor(n0, lam, A, r)
    if factor >= 1.0:
        raise InadmissibleParameter(f"r = {r} 时 λ^(1-n0 r) A^r = {factor:.6f} >= 1")
    log_q = r * math.log1p(-minor.epsilon) if minor.epsilon < 1.0 else -math.inf
    coupling = 2.0 * math.exp(log_q) / -math.expm1(log_q)
    lead = math.exp((-n0 + 1.0 - n0 * r) * math.log(lam) + r * math.log(A))
    drift_term = lead / (1.0 - factor) * (e_nu_v + stationary_v_bound(lam, drift.b))
    return coupling + drift_term


def shift_coupling_bound(minor: MinorizationCertificate, drift: DriftCertificate, e_nu_v: float, r: float,
                         n: int) -> float:
    """遍历平均的全变差界：系数 / n。"""
    if int(n) != n or n < 1:
        raise DomainError(f"n 必须为正整数，实际为 {n}")
    return shift_coupling_coefficient(minor, drift, e_nu_v, r) / n


def optimize_r(minor: MinorizationCertificate, drift: DriftCertificate, e_nu_v: float,
               grid_points: int = 400) -> tuple[float, float]:
    """
    在可行区间上搜索使系数最小的 r：先在对数网格上粗搜，再在最优格点两侧用有界 Brent 法
    （黄金分割加抛物插值）细化。相同值时取较小的 r。

    Returns:
        tuple[float, float]: (r*, 系数)。

    Raises:
        InadmissibleParameter: 可行集为空。
    """
    r_max = admissible_r_max(minor.n0, drift.lam, drift.A)
    if not r_max > 0:
        raise InadmissibleParameter("没有满足 λ^(1-n0 r) A^r < 1 的 r")
    upper = min(0.5, r_max)
    lower = min(1e-5, upper * 1e-3)
    grid = np.logspace(math.log10(lower), math.log10(upper), grid_points)
    grid = grid[grid < r_max]

    def objective(r):
        try:
            return shift_coupling_coefficient(minor, drift, e_nu_v, float(r))
        except InadmissibleParameter:
            return math.inf

    values = np.array([objective(r) for r in grid])
    if not np.any(np.isfinite(values)):
        raise InadmissibleParameter("网格上没有可行的 r")
    k = int(np.argmin(values))
    r_best, c_best = float(grid[k]), float(values[k])
    left = float(grid[k - 1]) if k > 0 else float(grid[k]) / 2.0
    right = float(grid[k + 1]) if k + 1 < len(grid) else float(grid[k])
    if right > left:
        refined = minimize_scalar(objective, bounds=(left, right), method="bounded",
                                  options={"xatol": 1e-12 * max(1.0, right)})
        if refined.success and refined.fun < c_best:
            r_best, c_best = float(refined.x), float(refined.fun)
    logger.info(f"最优 r = {r_best:.6g}，系数 = {c_best:.6g}（可行上界 {r_max:.6g}）")
    return r_best, c_best


def shift_coupling_report(minor: MinorizationCertificate, drift: DriftCertificate, e_nu_v: float,
                          r: float = PAPER_R, n: int = 1) -> BoundReport:
    """给定 r 的系数、第 n 步的界、最优 r 与可行性信息。"""
    coefficient = shift_coupling_coefficient(minor, drift, e_nu_v, r)
    r_star, c_star = optimize_r(minor, drift, e_nu_v)
    return BoundReport(
        kind="shift-coupling",
        inputs={"epsilon": minor.epsilon, "n0": minor.n0, "lambda": drift.lam, "b": drift.b, "A": drift.A,
                "e_nu_v": e_nu_v, "r": r, "n": n},
        values={
            "coefficient": coefficient,
            "bound_at_n": coefficient / n,
            "admissibility_factor": admissibility_factor(minor.n0, drift.lam, drift.A, r),
            "admissible_r_max": admissible_r_max(minor.n0, drift.lam, drift.A),
            "stationary_v_bound": stationary_v_bound(drift.lam, drift.b),
            "optimized_r": r_star,
            "optimized_coefficient": c_star,
        },
        notes=("界为 coefficient / n，对遍历平均的分布成立",),
    )
