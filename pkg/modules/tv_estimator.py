"""
基于单个有界泛函的全变差距离估计，以及占用比例检查。

对取值于 [a, b] 的泛函 f，|E_π f - E_ν f| / (b - a) 是 ν 与 π 的全变差距离的下界。
这里报告的“全变差”都只是单个泛函给出的估计，不是对所有泛函取上确界的真值。
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np

from modules import model_core as mc
from modules.config import DEFAULT_TOL_EXPECTATION, REFERENCE_CHAINS, REFERENCE_ITERATIONS
from modules.diagnostics import PLANAR_BAND_RADIAL, FunctionalSpec
from modules.errors import ConfigError, DomainError
from modules.numerics import RadialFunctional, stationary_expectation_planar
from modules.samplers import PLANAR, SQUARE, ChainTrace, EnsembleSpec, InitPolicy, ensemble_functional_values

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReferenceValue:
    """
    平稳期望的参考值。平面模型来自数值积分（stderr = 0）；
    正方形模型来自独立集合在最后一次迭代处的均值。
    """
    value: float
    stderr: float = 0.0
    m_chains: int = 0
    iterations: int = 0
    seed: Optional[int] = None


@dataclass(frozen=True)
class TvCurve:
    """
    一个泛函在各检查点处的全变差估计曲线。

    estimates[k] = |reference - 集合均值| / (b - a)；
    stderrs[k] 合并了集合均值与参考值两部分的蒙特卡洛标准误。
    """
    model: str
    functional: str
    low: float
    high: float
    checkpoints: tuple
    estimates: tuple
    stderrs: tuple
    reference: float
    reference_stderr: float
    m_chains: int
    seed: int

    def __post_init__(self):
        if not len(self.checkpoints) == len(self.estimates) == len(self.stderrs):
            raise DomainError("检查点、估计值与标准误长度不一致")
        if any(not 0.0 <= e <= 1.0 for e in self.estimates):
            raise DomainError("全变差估计必须落在 [0, 1] 内")
        if any(s < 0 for s in self.stderrs):
            raise DomainError("标准误必须非负")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class OccupationResult:
    """
    前 n 步在集合 S 中的占用比例。

    Attributes:
        fraction: F_n，各链 (1/n)#{1 <= i <= n : X_i ∈ S} 的均值。
        pi_s: π(S)。
        difference: |F_n - π(S)|。
        stderr: F_n 的蒙特卡洛标准误。
        mean_tv_estimate: (1/n) Σ_k |π(S) - P̂(X_k ∈ S)|，即逐步全变差估计的平均，不小于 difference。
    """
    fraction: float
    pi_s: float
    difference: float
    stderr: float
    mean_tv_estimate: float
    n: int


# ---------------------------------------------------------------------------
# 内置泛函
# ---------------------------------------------------------------------------

def _planar_p_radial(r: float) -> float:
    # min(1, |r cos θ|) 的角向平均；r > 1 时在 θ0 = arccos(1/r) 处分段
    if r <= 1.0:
        return 2.0 * r / math.pi
    theta0 = math.acos(1.0 / r)
    return 2.0 / math.pi * (theta0 + r * (1.0 - math.sin(theta0)))


_PLANAR_RADIAL = {
    "f": RadialFunctional("f", lambda r: math.exp(-r)),
    "g": RadialFunctional("g", lambda r: 0.5),
    "h": RadialFunctional("h", lambda r: min(1.0, 1.0 / r), breakpoints=(1.0,)),
    "p": RadialFunctional("p", _planar_p_radial, breakpoints=(1.0,)),
    "ell": RadialFunctional("ell", math.sin),
    "phi2": PLANAR_BAND_RADIAL,
}


def planar_radial_functional(name: str) -> RadialFunctional:
    """
    平面泛函的角向平均形式 g(r)，供数值积分求平稳期望。

    p = min(1, |x1|) 的角向平均有闭式；g = x1²/r² 的角向平均为常数 1/2。
    """
    try:
        return _PLANAR_RADIAL[name]
    except KeyError:
        raise ConfigError(f"平面模型没有泛函 {name} 的径向形式") from None


def _square_f(x):
    return np.linalg.norm(x, axis=-1).sum(axis=-1)


def _square_g(x):
    return x[..., 0, 0]


def _square_h(x):
    return np.linalg.norm(x[..., 0, :] - x[..., 1, :], axis=-1)


def _square_p(x):
    return np.exp(np.linalg.norm(x[..., 2, :], axis=-1))


def _square_ell(x):
    return np.linalg.norm(x, axis=-1).max(axis=-1)


def _planar_f(x):
    return np.exp(-np.linalg.norm(x, axis=-1))


def _planar_g(x):
    return x[..., 0] ** 2 / np.sum(x**2, axis=-1)


def _planar_h(x):
    return np.minimum(1.0, 1.0 / np.linalg.norm(x, axis=-1))


def _planar_p(x):
    return np.minimum(1.0, np.abs(x[..., 0]))


def _planar_ell(x):
    return np.sin(np.linalg.norm(x, axis=-1))


def builtin_tv_functionals(model: str, n_particles: int = 3) -> List[FunctionalSpec]:
    """
    全变差估计用的内置泛函 f、g、h、p、ell，均带取值范围。

    正方形模型的 p 用到第 3 个粒子，因此要求至少 3 个粒子。
    """
    root2 = math.sqrt(2.0)
    if model == SQUARE:
        if n_particles < 3:
            raise DomainError("正方形模型的全变差泛函需要至少 3 个粒子")
        return [
            FunctionalSpec("f", SQUARE, _square_f, 0.0, n_particles * root2),
            FunctionalSpec("g", SQUARE, _square_g, 0.0, 1.0),
            FunctionalSpec("h", SQUARE, _square_h, 0.0, root2),
            FunctionalSpec("p", SQUARE, _square_p, 1.0, math.exp(root2)),
            FunctionalSpec("ell", SQUARE, _square_ell, 0.0, root2),
        ]
    if model == PLANAR:
        rules = {"f": _planar_f, "g": _planar_g, "h": _planar_h, "p": _planar_p, "ell": _planar_ell}
        ranges = {"ell": (-1.0, 1.0)}
        return [FunctionalSpec(name, PLANAR, rule, *ranges.get(name, (0.0, 1.0)),
                               radial=planar_radial_functional(name))
                for name, rule in rules.items()]
    raise DomainError(f"未知模型: {model}")


def default_checkpoints(iterations: int) -> tuple:
    """{1, ..., 50} ∪ {60, 70, ...}，截到 iterations，并总是包含最后一次迭代。"""
    if iterations < 1:
        raise ConfigError("iterations 至少为 1")
    points = set(range(1, min(50, iterations) + 1)) | set(range(60, iterations + 1, 10)) | {iterations}
    return tuple(sorted(points))


# ---------------------------------------------------------------------------
# 参考值与曲线
# ---------------------------------------------------------------------------

def _stack(funs: Sequence[FunctionalSpec]):
    def evaluate(states):
        return np.stack([fun.values(states) for fun in funs], axis=-1)
    return evaluate


def _chain_mean_and_stderr(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """沿第 0 轴（链）求均值与均值的标准误；以第一条链为基准平移，全部相同的链得到精确的 0。"""
    base = values[0]
    shifted = values - base
    m = values.shape[0]
    means = shifted.mean(axis=0) + base
    if m < 2:
        return means, np.zeros_like(base)
    return means, shifted.std(axis=0, ddof=1) / math.sqrt(m)


def reference_expectations(model: str, funs: Sequence[FunctionalSpec], params: Optional[mc.ModelParams] = None,
                           seed: int = 0, m_chains: int = REFERENCE_CHAINS, iterations: int = REFERENCE_ITERATIONS,
                           threads: int = 1, tol: float = DEFAULT_TOL_EXPECTATION) -> List[ReferenceValue]:
    """
    一组泛函的平稳期望参考值；正方形模型只模拟一次参考集合。

    Args:
        model: "square" 或 "planar"。
        funs: 带取值范围的泛函；平面模型还需要径向形式。
        params: 正方形模型参数。
        seed: 正方形参考集合的种子。
        m_chains, iterations: 正方形参考集合的规模，从 (0.5, ..., 0.5) 出发。
        threads: 线程数。
        tol: 平面模型的积分容差。

    Returns:
        List[ReferenceValue]: 与 funs 一一对应的参考值及其标准误。
    """
    for fun in funs:
        if not fun.has_range:
            raise ConfigError(f"泛函 {fun.name} 没有声明取值范围，无法估计全变差")
        if model == PLANAR and fun.radial is None:
            raise ConfigError(f"平面泛函 {fun.name} 没有径向形式")
    if model == PLANAR:
        return [ReferenceValue(value=stationary_expectation_planar(fun.radial, tol)) for fun in funs]
    spec = EnsembleSpec(m_chains, iterations, seed, InitPolicy())
    values = ensemble_functional_values(model, spec, _stack(funs), [iterations], params, threads,
                                        outputs=len(funs))[:, 0, :]
    means, stderrs = _chain_mean_and_stderr(values)
    references = []
    for fun, value, stderr in zip(funs, means, stderrs):
        logger.info(f"参考值 {fun.name}: {value:.6f} ± {stderr:.2e}（{m_chains} 条链，{iterations} 次迭代）")
        references.append(ReferenceValue(float(value), float(stderr), m_chains, iterations, seed))
    return references


def reference_expectation(model: str, fun: FunctionalSpec, params: Optional[mc.ModelParams] = None,
                          seed: int = 0, m_chains: int = REFERENCE_CHAINS, iterations: int = REFERENCE_ITERATIONS,
                          threads: int = 1, tol: float = DEFAULT_TOL_EXPECTATION) -> ReferenceValue:
    """单个泛函的平稳期望参考值，参数同 reference_expectations。"""
    return reference_expectations(model, [fun], params, seed, m_chains, iterations, threads, tol)[0]


def tv_curves(model: str, funs: Sequence[FunctionalSpec], ensemble: EnsembleSpec, checkpoints: Sequence[int],
              params: Optional[mc.ModelParams] = None, references: Optional[Sequence[ReferenceValue]] = None,
              threads: int = 1) -> List[TvCurve]:
    """
    一次模拟同时估计多个泛函在各检查点处的全变差（每个泛函给出一条下界估计曲线）。

    Args:
        model: "square" 或 "planar"。
        funs: 带取值范围的泛函。
        ensemble: 集合规格。
        checkpoints: 严格递增的检查点。
        params: 正方形模型参数。
        references: 与 funs 对应的参考值；None 时自动计算，正方形模型用 seed+1 的独立集合。
        threads: 线程数，只影响速度。

    Returns:
        List[TvCurve]: 与 funs 一一对应的估计曲线。
    """
    if not funs:
        raise ConfigError("至少需要一个泛函")
    widths = [fun.width for fun in funs]
    if references is None:
        references = reference_expectations(model, funs, params, seed=(ensemble.seed + 1) % 2**64, threads=threads)
    if len(references) != len(funs):
        raise ConfigError(f"参考值个数 {len(references)} 与泛函个数 {len(funs)} 不一致")
    values = ensemble_functional_values(model, ensemble, _stack(funs), checkpoints, params, threads,
                                        outputs=len(funs))
    m = values.shape[0]
    means, sample_se = _chain_mean_and_stderr(values)
    curves = []
    for k, (fun, width, reference) in enumerate(zip(funs, widths, references)):
        estimates = np.minimum(np.abs(reference.value - means[:, k]) / width, 1.0)
        stderrs = np.sqrt(sample_se[:, k]**2 + reference.stderr**2) / width
        logger.info(f"{model}/{fun.name}: 检查点 {checkpoints[-1]} 处全变差估计 {estimates[-1]:.6f} ± {stderrs[-1]:.2e}")
        curves.append(TvCurve(
            model=model, functional=fun.name, low=fun.low, high=fun.high,
            checkpoints=tuple(int(t) for t in checkpoints),
            estimates=tuple(float(e) for e in estimates),
            stderrs=tuple(float(s) for s in stderrs),
            reference=reference.value, reference_stderr=reference.stderr,
            m_chains=m, seed=ensemble.seed,
        ))
    return curves


def tv_curve(model: str, fun: FunctionalSpec, ensemble: EnsembleSpec, checkpoints: Sequence[int],
             params: Optional[mc.ModelParams] = None, reference: Optional[ReferenceValue] = None,
             threads: int = 1) -> TvCurve:
    """
    估计各检查点处的全变差距离（单个泛函给出的下界估计）。

    Args:
        model: "square" 或 "planar"。
        fun: 带取值范围的泛函。
        ensemble: 集合规格。
        checkpoints: 严格递增的检查点。
        params: 正方形模型参数。
        reference: 参考值；None 时自动计算，正方形模型用 seed+1 的独立集合。
        threads: 线程数，只影响速度。

    Returns:
        TvCurve: 估计曲线。
    """
    references = None if reference is None else [reference]
    return tv_curves(model, [fun], ensemble, checkpoints, params, references, threads)[0]


def occupation_fraction(traces: Sequence[ChainTrace], set_indicator: FunctionalSpec, n: int,
                        pi_s: Optional[float] = None) -> OccupationResult:
    """
    前 n 步落在集合 S 中的比例 F_n，并与 π(S) 比较。

    Args:
        traces: 至少 n 次迭代的链轨迹。
        set_indicator: 取值 0/1 的泛函。
        n: 步数。
        pi_s: π(S)；平面模型为 None 时按示性函数的径向形式积分得到，正方形模型必须给出。

    Returns:
        OccupationResult: F_n、|F_n - π(S)| 与标准误。
    """
    if n < 1:
        raise ConfigError("n 至少为 1")
    if not traces:
        raise ConfigError("至少需要一条链")
    if any(trace.iterations < n for trace in traces):
        raise ConfigError(f"链长度不足 {n} 次迭代")
    if pi_s is None:
        if set_indicator.radial is None:
            raise ConfigError(f"集合 {set_indicator.name} 的 π(S) 需要显式给出")
        pi_s = stationary_expectation_planar(set_indicator.radial)
    inside = np.stack([set_indicator.values(trace.states[1:n + 1]) for trace in traces])
    if np.any((inside != 0.0) & (inside != 1.0)):
        raise DomainError(f"{set_indicator.name} 不是 0/1 示性函数")
    per_chain = inside.mean(axis=1)
    m = len(traces)
    fraction = float(per_chain.mean())
    stderr = float(per_chain.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    mean_tv = float(np.mean(np.abs(pi_s - inside.mean(axis=0))))
    return OccupationResult(fraction, float(pi_s), abs(fraction - pi_s), stderr, mean_tv, n)
