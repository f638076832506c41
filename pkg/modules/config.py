import math
import os
from dataclasses import asdict, dataclass, fields

from dotenv import dotenv_values

from modules.errors import ConfigError

# 软件版本，写入运行清单
VERSION = "0.3.0"

# 默认随机种子
DEFAULT_SEED = 20240601

# 数值积分容差：界的验证用 1e-10，期望用 1e-8
DEFAULT_TOL_VERIFY = 1e-10
DEFAULT_TOL_EXPECTATION = 1e-8

# 径向积分截断区间 [R_MIN, R_MAX]
R_MIN = 1e-6
R_MAX = 50.0

# 漂移审计的网格与外侧截断半径
DRIFT_GRID_POINTS = 2000
DRIFT_R_LOW = 1e-3
DRIFT_R_CHECK = 50.0

# 每个线程任务模拟的链数（与线程数无关，保证结果可复现）
CHUNK_SIZE = 256

# 随机数算法标识，写入运行清单
RNG_ALGORITHM = "numpy.PCG64/SeedSequence(seed, spawn_key=(stream_id,))"

# 正方形模型参考期望：集合大小与迭代次数
REFERENCE_CHAINS = 5000
REFERENCE_ITERATIONS = 500

# 内置泛函名称
DIAGNOSTIC_FUNCTIONALS = ("psi", "phi1", "phi2")
TV_FUNCTIONALS = ("f", "g", "h", "p", "ell")
KNOWN_FUNCTIONALS = DIAGNOSTIC_FUNCTIONALS + TV_FUNCTIONALS

MODELS = ("square", "planar")
DF_MODES = ("unit", "moment")

# 日志格式
LOG_FORMAT = '%(asctime)s - %(threadName)s - %(levelname)s - %(message)s'


@dataclass(frozen=True)
class ExperimentConfig:
    """
    一次命令运行的全部配置。构造时校验，非法配置抛出 ConfigError。

    全局键无前缀；命令专属键用前缀分节（BOUND_、VERIFY_、DIAGNOSE_、TV_）。
    """
    model: str = "square"
    c1: float = 0.1
    c2: float = 0.1
    m_chains: int = 5
    iterations: int = 60
    seed: int = DEFAULT_SEED
    init_policy: str = "fixed"
    init_point: tuple = ()
    init_low: float | None = None
    init_high: float | None = None
    burn_in: int | None = None
    functionals: tuple = ()
    checkpoints: tuple = ()
    out: str = "runs"
    threads: int = 1
    # bound 命令
    bound_kind: str = "uniform"
    bound_delta: float = 0.01
    bound_n: int = 1000
    bound_r: float = 0.0016
    bound_epsilon: float = 3.5e-5
    bound_n0: int = 2
    bound_lambda: float = 0.995
    bound_b: float = math.exp(2.7) - 0.995
    bound_a: float = math.exp(2.7)
    bound_d: float = math.exp(17.0 / 8.0)
    bound_e_nu_v: float = math.e
    # verify 命令
    verify_points: int = DRIFT_GRID_POINTS
    verify_r_check: float = DRIFT_R_CHECK
    verify_tol: float = DEFAULT_TOL_VERIFY
    # diagnose 命令
    diagnose_df_mode: str = "unit"
    # tv-curve 命令
    tv_reference_chains: int = REFERENCE_CHAINS
    tv_reference_iterations: int = REFERENCE_ITERATIONS

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"未知模型: {self.model}（可选 {MODELS}）")
        if self.c1 < 0 or self.c2 < 0:
            raise ConfigError("C1、C2 必须非负")
        if self.m_chains < 1 or self.iterations < 1:
            raise ConfigError("M_CHAINS 与 ITERATIONS 必须为正整数")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("SEED 必须是 64 位无符号整数")
        if self.init_policy not in ("fixed", "uniform"):
            raise ConfigError(f"未知初始策略: {self.init_policy}")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.iterations // 2)
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError(f"BURN_IN={self.burn_in} 必须小于 ITERATIONS={self.iterations}")
        unknown = [name for name in self.functionals if name not in KNOWN_FUNCTIONALS]
        if unknown:
            raise ConfigError(f"模型 {self.model} 没有这些泛函: {unknown}")
        if any(c < 0 or c > self.iterations for c in self.checkpoints):
            raise ConfigError("CHECKPOINTS 必须落在 [0, ITERATIONS] 内")
        if self.threads < 1:
            raise ConfigError("THREADS 至少为 1")
        if self.diagnose_df_mode not in DF_MODES:
            raise ConfigError(f"未知 DIAGNOSE_DF_MODE: {self.diagnose_df_mode}")

    def as_dict(self) -> dict:
        """配置回显，写入运行清单。"""
        return asdict(self)


def _parse_tuple(raw: str, cast) -> tuple:
    return tuple(cast(item.strip()) for item in raw.split(",") if item.strip())


def _parse_value(name: str, raw: str, default):
    if name in ("init_point",):
        return _parse_tuple(raw, float)
    if name in ("functionals",):
        return _parse_tuple(raw, str)
    if name in ("checkpoints",):
        return _parse_tuple(raw, int)
    if isinstance(default, int) or name in ("burn_in",):
        return int(raw)
    if isinstance(default, float) or name in ("init_low", "init_high"):
        return float(raw)
    return raw.strip()


def load_experiment_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """
    读取 KEY=value 格式的实验配置文件，并叠加命令行覆盖项。

    使用 dotenv_values 解析，不会读取或修改进程环境变量。

    Args:
        path: 配置文件路径，None 表示只用默认值。
        overrides: 命令行覆盖项，键不区分大小写，值为字符串或已解析的值。

    Returns:
        ExperimentConfig: 校验后的配置。
    """
    raw: dict = {}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"配置文件未找到: {path}")
        raw.update({k.upper(): v for k, v in dotenv_values(path).items() if v is not None})
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k.upper()] = v

    defaults = {f.name: f.default for f in fields(ExperimentConfig)}
    values = {}
    for key, value in raw.items():
        name = key.lower()
        if name not in defaults:
            raise ConfigError(f"未知配置项: {key}")
        try:
            values[name] = _parse_value(name, value, defaults[name]) if isinstance(value, str) else value
        except ValueError as e:
            raise ConfigError(f"配置项 {key} 的值无效: {value!r}") from e
    return ExperimentConfig(**values)
