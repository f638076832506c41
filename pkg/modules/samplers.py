#!/usr/bin/python3
# -*- coding: utf-8 -*-
"""
两种 Metropolis 核以及可复现的单链 / 多链运行。

- 正方形模型：系统扫描的逐粒子 Metropolis，每个粒子的提议在 [0,1]^2 上均匀；
  依次更新全部粒子算作一次迭代。
- 平面模型：单粒子在提议环 B_x 上均匀提议的 Metropolis-Hastings。

每条链只使用自己的随机流 SeedSequence(seed, spawn_key=(stream_id,))。
每次迭代正方形链消耗 (n, 3) 个均匀数（两个提议坐标 + 接受判定），
平面链消耗 (3,) 个（角度、半径、接受判定）；初始状态的抽样排在所有核抽样之前。
核函数对前置的链维度向量化，单链运行与分块运行走同一套算术。
"""

import logging
import math
import time
import concurrent.futures
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence

import numpy as np

from modules import model_core as mc
from modules.config import CHUNK_SIZE
from modules.errors import ConfigError, DegenerateAnnulusError, DomainError

logger = logging.getLogger(__name__)

SQUARE = "square"
PLANAR = "planar"


@dataclass
class RngStream:
    """
    按 (seed, stream_id) 确定的随机流，与同时运行多少条流无关。

    Attributes:
        seed: 64 位无符号整数种子。
        stream_id: 流编号（链下标）。
    """
    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError(f"种子必须是 64 位无符号整数，实际为 {self.seed}")
        if int(self.stream_id) < 0:
            raise DomainError(f"stream_id 必须非负，实际为 {self.stream_id}")
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def uniform(self, shape=None) -> np.ndarray:
        """[0, 1) 上的均匀数，按 C 顺序连续抽取。"""
        return self.generator.random(shape)


@dataclass(frozen=True)
class InitPolicy:
    """
    初始状态策略：固定点，或给定方盒上的均匀分布。

    Attributes:
        kind: "fixed" 或 "uniform"。
        point: 固定点的扁平坐标（正方形 2n 个，平面 2 个）；为空时用模型默认起点。
        low, high: 均匀方盒每个坐标的范围。
    """
    kind: str = "fixed"
    point: tuple = ()
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform"):
            raise ConfigError(f"未知初始策略: {self.kind}")
        if self.kind == "uniform" and not self.low < self.high:
            raise ConfigError(f"均匀方盒需要 low < high，实际为 [{self.low}, {self.high}]")

    def draw(self, model: str, rng: RngStream, params: Optional[mc.ModelParams] = None) -> np.ndarray:
        """按策略给出一个初始状态（数组形式），均匀策略会从 rng 中抽样。"""
        shape = _state_shape(model, params)
        if self.kind == "fixed":
            point = self.point or default_start(model, params)
            state = np.asarray(point, dtype=float).reshape(shape)
        else:
            if model == SQUARE and (self.low < 0.0 or self.high > 1.0):
                raise ConfigError("正方形模型的均匀初始方盒必须在 [0, 1] 内")
            state = self.low + (self.high - self.low) * rng.uniform(shape)
        return _validated_state(model, state, params)


@dataclass(frozen=True)
class EnsembleSpec:
    """多链运行规格：m_chains 条链，各跑 iterations 次迭代。"""
    m_chains: int
    iterations: int
    seed: int
    init: InitPolicy = InitPolicy()

    def __post_init__(self):
        if self.m_chains < 1 or self.iterations < 1:
            raise ConfigError("m_chains 与 iterations 必须至少为 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"种子必须是 64 位无符号整数，实际为 {self.seed}")


@dataclass(frozen=True)
class ChainTrace:
    """
    单条链的完整轨迹。

    Attributes:
        model: "square" 或 "planar"。
        states: 第 0 行为初始状态，共 iterations+1 行。
        accepted: 与 states 对齐的接受标记，第 0 行全为 False。
    """
    model: str
    states: np.ndarray
    accepted: np.ndarray

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def iterations(self) -> int:
        return self.states.shape[0] - 1

    @property
    def accept_counts(self):
        """正方形模型为逐粒子计数，平面模型为标量计数。"""
        counts = self.accepted[1:].sum(axis=0)
        return int(counts) if self.model == PLANAR else counts.astype(int)


def default_start(model: str, params: Optional[mc.ModelParams] = None) -> tuple:
    """模型默认起点：正方形 (0.5, ..., 0.5)，平面 (1, 0)。"""
    if model == SQUARE:
        n = params.n_particles if params is not None else 3
        return (0.5,) * (2 * n)
    return (1.0, 0.0)


def _check_model(model: str) -> None:
    if model not in (SQUARE, PLANAR):
        raise ConfigError(f"未知模型: {model}")


def _state_shape(model: str, params: Optional[mc.ModelParams]) -> tuple:
    _check_model(model)
    if model == SQUARE:
        if params is None:
            raise ConfigError("正方形模型需要 ModelParams")
        return (params.n_particles, 2)
    return (2,)


def _draw_shape(model: str, params: Optional[mc.ModelParams]) -> tuple:
    return (params.n_particles, 3) if model == SQUARE else (3,)


def _validated_state(model: str, state, params: Optional[mc.ModelParams]) -> np.ndarray:
    if model == SQUARE:
        if isinstance(state, mc.SquareConfig):
            cfg = state
        else:
            cfg = mc.SquareConfig(np.asarray(state, dtype=float).reshape(-1, 2))
        if cfg.n_particles != params.n_particles:
            raise DomainError(f"初始构型含 {cfg.n_particles} 个粒子，参数要求 {params.n_particles} 个")
        return np.array(cfg.points)
    arr = state.as_array() if isinstance(state, mc.PlanarPoint) else np.asarray(state, dtype=float).reshape(2)
    if not math.hypot(arr[0], arr[1]) > 0.0:
        raise DegenerateAnnulusError("平面链的初始点不能是原点")
    return arr


# ---------------------------------------------------------------------------
# 向量化核
# ---------------------------------------------------------------------------

def sweep_square_batch(points: np.ndarray, params: mc.ModelParams, draws: np.ndarray):
    """
    对一批构型各做一次系统扫描。

    Args:
        points: 形状 (m, n, 2) 的当前构型。
        params: 模型参数。
        draws: 形状 (m, n, 3) 的均匀数，[..., :2] 为提议坐标，[..., 2] 为接受判定。

    Returns:
        tuple[np.ndarray, np.ndarray]: 新构型 (m, n, 2) 与接受标记 (m, n)。
    """
    pts = np.array(points, dtype=float)
    m, n, _ = pts.shape
    accepted = np.zeros((m, n), dtype=bool)
    for i in range(n):
        proposal = draws[:, i, :2]
        old = mc.local_energy_square(pts, i, params)
        new = mc.local_energy_square(pts, i, params, candidate=proposal)
        # inf - inf 得到 nan，比较结果为 False，即拒绝
        with np.errstate(invalid="ignore"):
            alpha = np.exp(np.minimum(old - new, 0.0))
        acc = draws[:, i, 2] < alpha
        pts[acc, i, :] = proposal[acc]
        accepted[:, i] = acc
    return pts, accepted


def propose_planar_batch(points: np.ndarray, draws: np.ndarray) -> np.ndarray:
    """
    在各点的提议环上均匀提议。

    半径按逆 CDF r = sqrt(inner^2 + u (outer^2 - inner^2)) 抽取，角度在 [0, 2π) 上均匀。
    draws 形状 (m, 2)：第 0 列为角度，第 1 列为半径。
    """
    r = np.linalg.norm(points, axis=-1)
    if np.any(r <= 0.0):
        raise DegenerateAnnulusError("原点处的提议环退化")
    inner = np.abs(r - 1.0)
    outer = r + 1.0
    radius = np.sqrt(inner**2 + draws[:, 1] * (outer**2 - inner**2))
    theta = 2.0 * np.pi * draws[:, 0]
    return np.column_stack((radius * np.cos(theta), radius * np.sin(theta)))


def step_planar_batch(points: np.ndarray, draws: np.ndarray):
    """
    平面链一步 Metropolis-Hastings。

    Args:
        points: 形状 (m, 2) 的当前点。
        draws: 形状 (m, 3) 的均匀数（角度、半径、接受判定）。

    Returns:
        tuple[np.ndarray, np.ndarray]: 新点 (m, 2) 与接受标记 (m,)。
    """
    pts = np.asarray(points, dtype=float)
    proposal = propose_planar_batch(pts, draws[:, :2])
    r_old = np.linalg.norm(pts, axis=-1)
    r_new = np.linalg.norm(proposal, axis=-1)
    # 半径为 0 的提议概率为零，构造上直接拒绝
    positive = r_new > 0.0
    safe = np.where(positive, r_new, 1.0)
    log_alpha = np.minimum(mc.log_f_radial(r_old) - mc.log_f_radial(safe), 0.0)
    acc = positive & (draws[:, 2] < np.exp(log_alpha))
    out = np.where(acc[:, None], proposal, pts)
    return out, acc


# ---------------------------------------------------------------------------
# 单状态操作
# ---------------------------------------------------------------------------

def metropolis_sweep_square(state: mc.SquareConfig, params: mc.ModelParams, rng: RngStream) -> mc.SquareConfig:
    """正方形模型的一次完整迭代（按下标顺序更新全部粒子）。"""
    pts = _validated_state(SQUARE, state, params)
    draws = rng.uniform(_draw_shape(SQUARE, params))
    new_pts, _ = sweep_square_batch(pts[None], params, draws[None])
    return mc.SquareConfig(new_pts[0])


def propose_planar(x: mc.PlanarPoint, rng: RngStream) -> mc.PlanarPoint:
    """从 B_x 上的均匀分布提议一个新点。"""
    mc.annulus_of(x)
    y = propose_planar_batch(x.as_array()[None], rng.uniform(2)[None])[0]
    return mc.PlanarPoint(float(y[0]), float(y[1]))


def accept_prob_planar(x: mc.PlanarPoint, y: mc.PlanarPoint) -> float:
    """min{1, f(r_x) / f(r_y)}，在对数空间计算。"""
    rx, ry = x.radius, y.radius
    if rx <= 0.0 or ry <= 0.0:
        raise DomainError("接受率要求两点半径都为正")
    return math.exp(min(0.0, float(mc.log_f_radial(rx) - mc.log_f_radial(ry))))


def step_planar(x: mc.PlanarPoint, rng: RngStream) -> mc.PlanarPoint:
    """提议、以概率 α 接受，否则停在原处。"""
    new, _ = step_planar_batch(_validated_state(PLANAR, x, None)[None], rng.uniform(3)[None])
    return mc.PlanarPoint(float(new[0, 0]), float(new[0, 1]))


# ---------------------------------------------------------------------------
# 链与集合运行
# ---------------------------------------------------------------------------

def _simulate(model: str, inits: np.ndarray, draws: np.ndarray, params, observer: Callable) -> None:
    """对一块链逐次迭代，每次迭代后把 (t, states, accepted) 交给 observer。"""
    states = np.array(inits, dtype=float)
    observer(0, states, None)
    for t in range(draws.shape[1]):
        if model == SQUARE:
            states, acc = sweep_square_batch(states, params, draws[:, t])
        else:
            states, acc = step_planar_batch(states, draws[:, t])
        observer(t + 1, states, acc)


class _TraceObserver:
    """记录完整轨迹。"""

    def __init__(self, model: str, k: int, iterations: int, state_shape: tuple, accept_shape: tuple):
        self.model = model
        self.states = np.empty((k, iterations + 1) + state_shape)
        self.accepted = np.zeros((k, iterations + 1) + accept_shape, dtype=bool)

    def __call__(self, t, states, acc):
        self.states[:, t] = states
        if acc is not None:
            self.accepted[:, t] = acc

    def result(self) -> List[ChainTrace]:
        return [ChainTrace(self.model, self.states[j], self.accepted[j]) for j in range(self.states.shape[0])]


def run_chain(model: str, init, iterations: int, rng: RngStream,
              params: Optional[mc.ModelParams] = None) -> ChainTrace:
    """
    对一条链应用 iterations 次单步核并记录全部状态。

    Args:
        model: "square" 或 "planar"。
        init: 初始状态（SquareConfig / PlanarPoint / 数组）。
        iterations: 迭代次数，可为 0。
        rng: 该链独占的随机流。
        params: 正方形模型参数。

    Returns:
        ChainTrace: 长度 iterations+1 的轨迹。
    """
    _state_shape(model, params)
    if iterations < 0:
        raise ConfigError(f"迭代次数不能为负: {iterations}")
    state = _validated_state(model, init, params)
    draws = rng.uniform((iterations,) + _draw_shape(model, params))
    accept_shape = (params.n_particles,) if model == SQUARE else ()
    observer = _TraceObserver(model, 1, iterations, state.shape, accept_shape)
    _simulate(model, state[None], draws[None], params, observer)
    return observer.result()[0]


def _chunk_inputs(model: str, spec: EnsembleSpec, params, chain_ids: Sequence[int]):
    inits, draws = [], []
    for j in chain_ids:
        rng = RngStream(spec.seed, j)
        inits.append(spec.init.draw(model, rng, params))
        draws.append(rng.uniform((spec.iterations,) + _draw_shape(model, params)))
    return np.stack(inits), np.stack(draws)


def map_ensemble(model: str, spec: EnsembleSpec, params: Optional[mc.ModelParams],
                 observer_factory: Callable[[Sequence[int]], Any], threads: int = 1,
                 chunk_size: int = CHUNK_SIZE) -> list:
    """
    把集合按固定大小分块，用线程池模拟，每块结果按块下标顺序返回。

    分块方式只取决于 chunk_size，与线程数无关，因此 threads 只影响速度。

    Args:
        model: "square" 或 "planar"。
        spec: 集合规格，第 j 条链使用 stream_id = j。
        params: 正方形模型参数。
        observer_factory: 以块内链下标为参数，返回带 result() 方法的观察器。
        threads: 工作线程数。
        chunk_size: 每块链数。

    Returns:
        list: 各块 observer.result() 的列表（按块顺序）。
    """
    _check_model(model)
    _state_shape(model, params)
    chunks = [range(start, min(start + chunk_size, spec.m_chains))
              for start in range(0, spec.m_chains, chunk_size)]

    def run_chunk(chain_ids):
        inits, draws = _chunk_inputs(model, spec, params, chain_ids)
        observer = observer_factory(chain_ids)
        _simulate(model, inits, draws, params, observer)
        logger.debug(f"链 {chain_ids.start}-{chain_ids.stop - 1} 模拟完成")
        return observer.result()

    start_time = time.time()
    logger.info(f"开始模拟 {spec.m_chains} 条 {model} 链，每条 {spec.iterations} 次迭代，线程数 {threads}")
    results = [None] * len(chunks)
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, threads), thread_name_prefix="chain") as executor:
        future_to_chunk = {executor.submit(run_chunk, ids): k for k, ids in enumerate(chunks)}
        for future in concurrent.futures.as_completed(future_to_chunk):
            k = future_to_chunk[future]
            try:
                results[k] = future.result()
            except Exception as exc:
                logger.error(f"第 {k} 块链模拟时发生异常: {exc}")
                raise
    logger.info(f"模拟完成，耗时 {time.time() - start_time:.2f} 秒")
    return results


def run_ensemble(model: str, spec: EnsembleSpec, params: Optional[mc.ModelParams] = None,
                 threads: int = 1) -> List[ChainTrace]:
    """运行 m_chains 条链并返回全部轨迹；结果与执行顺序、并行度无关。"""
    shape = _state_shape(model, params)
    accept_shape = (params.n_particles,) if model == SQUARE else ()

    def factory(chain_ids):
        return _TraceObserver(model, len(chain_ids), spec.iterations, shape, accept_shape)

    chunks = map_ensemble(model, spec, params, factory, threads)
    return [trace for chunk in chunks for trace in chunk]


class _CheckpointObserver:
    """只在检查点处计算泛函值，内存 O(m · 检查点数 · 泛函数)。"""

    def __init__(self, k: int, evaluate: Callable[[np.ndarray], np.ndarray], checkpoints: Sequence[int],
                 outputs: Optional[int] = None):
        self.evaluate = evaluate
        self.index = {t: c for c, t in enumerate(checkpoints)}
        shape = (k, len(checkpoints)) if outputs is None else (k, len(checkpoints), outputs)
        self.values = np.empty(shape)

    def __call__(self, t, states, acc):
        c = self.index.get(t)
        if c is not None:
            self.values[:, c] = self.evaluate(states)

    def result(self) -> np.ndarray:
        return self.values


def ensemble_functional_values(model: str, spec: EnsembleSpec, evaluate: Callable[[np.ndarray], np.ndarray],
                               checkpoints: Sequence[int], params: Optional[mc.ModelParams] = None,
                               threads: int = 1, outputs: Optional[int] = None) -> np.ndarray:
    """
    流式计算每条链在各检查点处的泛函值。

    Args:
        evaluate: 把一批状态映射为一维数组的泛函；outputs 不为 None 时映射为形状 (k, outputs) 的数组。
        checkpoints: 升序的迭代编号，均不超过 spec.iterations。
        outputs: 一次计算的泛函个数。

    Returns:
        np.ndarray: 形状 (m_chains, len(checkpoints))，outputs 不为 None 时为 (m_chains, len(checkpoints), outputs)。
    """
    checkpoints = [int(t) for t in checkpoints]
    if any(t < 0 or t > spec.iterations for t in checkpoints):
        raise ConfigError(f"检查点必须落在 [0, {spec.iterations}] 内")
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ConfigError("检查点必须严格递增")
    chunks = map_ensemble(model, spec, params,
                          lambda ids: _CheckpointObserver(len(ids), evaluate, checkpoints, outputs), threads)
    return np.concatenate(chunks, axis=0)


def acceptance_rate(trace: ChainTrace) -> float:
    """已接受的单粒子移动数 / 尝试次数。"""
    attempts = trace.accepted[1:]
    if attempts.size == 0:
        return float("nan")
    return float(attempts.mean())
