"""
吸引-排斥粒子系统的密度、径向辅助函数与提议环几何。

本模块只做纯计算，不涉及随机数。所有密度都在对数空间里计算，
避免 1/||x_i - x_j|| 项溢出；接受率由对数差再取指数得到。
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from modules.errors import DegenerateAnnulusError, DomainError

# f(r) = r e^{r + 1/r} 的全局极小点
GOLDEN_RADIUS = (math.sqrt(5.0) - 1.0) / 2.0

# 对数密度，允许取 -inf（粒子重合时）
LogDensity = float


@dataclass(frozen=True)
class ModelParams:
    """
    正方形模型的参数。

    Attributes:
        c1: 吸引强度（拉向原点），非负。
        c2: 排斥强度（两两距离倒数），非负。
        n_particles: 粒子数，至少为 1。
    """
    c1: float
    c2: float
    n_particles: int = 3

    def __post_init__(self):
        if not (self.c1 >= 0 and self.c2 >= 0):
            raise DomainError(f"c1、c2 必须非负，实际为 c1={self.c1}, c2={self.c2}")
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise DomainError(f"粒子数必须为正整数，实际为 {self.n_particles}")


@dataclass(frozen=True)
class SquareConfig:
    """单位正方形内的粒子构型，points 形状为 (n, 2)，只读。"""
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DomainError(f"构型形状应为 (n, 2)，实际为 {pts.shape}")
        if np.any(pts < 0.0) or np.any(pts > 1.0) or not np.all(np.isfinite(pts)):
            raise DomainError("构型坐标必须位于 [0, 1] 内")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_flat(cls, values) -> "SquareConfig":
        """由 (x11, x12, x21, x22, ...) 形式的扁平坐标构造。"""
        return cls(np.asarray(values, dtype=float).reshape(-1, 2))

    @property
    def n_particles(self) -> int:
        return self.points.shape[0]

    def flat(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.points.ravel())


@dataclass(frozen=True)
class PlanarPoint:
    """平面上的单个粒子；原点可以表示，但采样器不会产生它。"""
    x1: float
    x2: float

    @property
    def radius(self) -> float:
        return math.hypot(self.x1, self.x2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2], dtype=float)


@dataclass(frozen=True)
class Annulus:
    """提议环 B_x = {z : inner < ||z|| < outer}。"""
    inner: float
    outer: float

    @property
    def area(self) -> float:
        # (outer - inner)(outer + inner) = 4 r，两种情形都成立
        return math.pi * (self.outer - self.inner) * (self.outer + self.inner)


def _require_positive(r, what: str = "半径") -> None:
    if np.any(np.asarray(r) <= 0) or np.any(np.isnan(np.asarray(r, dtype=float))):
        raise DomainError(f"{what}必须严格为正，实际为 {r}")


def log_density_square(cfg: SquareConfig, params: ModelParams) -> LogDensity:
    """
    计算正方形模型的未归一化对数密度
    -[c1 * sum_i ||x_i|| + c2 * sum_{i<j} ||x_i - x_j||^{-1}]。

    Args:
        cfg: 粒子构型。
        params: 模型参数，粒子数须与构型一致。

    Returns:
        float: 对数密度；c2 > 0 且有两粒子重合时为 -inf。
    """
    if cfg.n_particles != params.n_particles:
        raise DomainError(f"构型含 {cfg.n_particles} 个粒子，但参数要求 {params.n_particles} 个")
    pts = cfg.points
    energy = params.c1 * float(np.sum(np.linalg.norm(pts, axis=1)))
    # c2 = 0 时整项不存在，避免 0 * inf
    if params.c2 > 0 and cfg.n_particles > 1:
        dists = pdist(pts)
        if np.any(dists == 0.0):
            return -math.inf
        energy += params.c2 * float(np.sum(1.0 / dists))
    return -energy


def local_energy_square(points, i: int, params: ModelParams, candidate=None):
    """
    第 i 个粒子自身参与的能量项 c1 ||x_i|| + c2 sum_{j != i} ||x_i - x_j||^{-1}。

    单粒子移动的 Metropolis 对数比等于新旧局部能量之差，不含 i 的粒子对相互抵消。
    支持前置批维度：points 形状 (..., n, 2)，candidate 形状 (..., 2)。

    Args:
        points: 当前构型（可带批维度）。
        i: 粒子下标。
        params: 模型参数。
        candidate: 若给出，则以其替换第 i 个粒子的位置计算。

    Returns:
        np.ndarray | float: 局部能量，重合时为 +inf。
    """
    pts = np.asarray(points, dtype=float)
    xi = pts[..., i, :] if candidate is None else np.asarray(candidate, dtype=float)
    energy = params.c1 * np.linalg.norm(xi, axis=-1)
    if params.c2 > 0 and pts.shape[-2] > 1:
        others = np.delete(pts, i, axis=-2)
        dists = np.linalg.norm(others - xi[..., None, :], axis=-1)
        with np.errstate(divide="ignore"):
            energy = energy + params.c2 * np.sum(1.0 / dists, axis=-1)
    return energy


def h_radial(r):
    """H(r) = r + 1/r。"""
    _require_positive(r)
    return r + 1.0 / r


def v_lyapunov(r):
    """Lyapunov 函数 V(r) = exp(H(r)/2)，在 r = 1 处取最小值 e。"""
    return np.exp(0.5 * h_radial(r))


def f_radial(r):
    """f(r) = r exp(r + 1/r)；在 (0, GOLDEN_RADIUS) 上递减，之后递增。"""
    return r * np.exp(h_radial(r))


def log_f_radial(r):
    """log f(r) = log r + r + 1/r，接受率都用它计算。"""
    h = h_radial(r)
    return np.log(r) + h


def annulus_of(x: PlanarPoint) -> Annulus:
    """
    返回点 x 的提议环 B_x。

    Raises:
        DegenerateAnnulusError: x 位于原点。
    """
    r = x.radius
    if r <= 0.0:
        raise DegenerateAnnulusError("原点处的提议环退化")
    return Annulus(inner=abs(r - 1.0), outer=r + 1.0)


def annulus_contains(a: Annulus, y: PlanarPoint) -> bool:
    """严格包含：inner < ||y|| < outer。"""
    return a.inner < y.radius < a.outer
