"""
运行结果的落盘：轨迹 CSV、全变差曲线 CSV、JSON 报告与运行清单。

所有文件都先写临时文件再 os.replace，保证读者看不到半写的文件。
浮点数一律用 repr（最短可往返表示），保证重跑时逐字节一致。
"""

import csv
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np

from modules.errors import ConfigError
from modules.samplers import PLANAR, ChainTrace

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
LOG_NAME = "chainbound.log"
CURVE_HEADER = ("checkpoint", "estimate", "stderr", "reference", "functional", "seed")


@dataclass
class RunManifest:
    """
    一次命令运行的清单，足以在同一版本下逐字节复现全部输出。

    Attributes:
        command: 子命令，如 ["bound", "uniform"]。
        config: 配置回显。
        rng_algorithm: 随机数算法标识。
        version: 软件版本。
        started_at: 开始时间（ISO 格式）。
        wall_clock_seconds: 耗时。
        outputs: 输出文件名 -> SHA-256。
        summary: 结果摘要。
    """
    command: List[str]
    config: dict
    rng_algorithm: str
    version: str
    started_at: str = ""
    wall_clock_seconds: float = 0.0
    outputs: Dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def format_float(x) -> str:
    return repr(float(x))


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    # 临时文件写完再重命名
    temp_file = f"{path}.temp"
    with open(temp_file, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(temp_file, path)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        # JSON 没有 inf / nan，用 null 表示
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


def to_json_text(data) -> str:
    """稳定键序、缩进 2 的 JSON 文本。"""
    return json.dumps(_jsonable(data), ensure_ascii=False, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json_report(path: str, data) -> str:
    """写 JSON 报告，返回路径。"""
    _atomic_write_text(path, to_json_text(data))
    logger.info(f"报告已写入 {path}")
    return path


def read_json(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _csv_text(header, rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def trace_header(trace: ChainTrace) -> tuple:
    """正方形：iter, x11, x12, ..., accepted1..n；平面：iter, x1, x2, accepted。"""
    if trace.model == PLANAR:
        return ("iter", "x1", "x2", "accepted")
    n = trace.states.shape[1]
    coords = [f"x{i}{k}" for i in range(1, n + 1) for k in (1, 2)]
    return ("iter", *coords, *(f"accepted{i}" for i in range(1, n + 1)))


def write_trace_csv(path: str, trace: ChainTrace) -> str:
    """一条链一个 CSV，第 0 行是初始状态，共 iterations+1 行数据。"""
    states = trace.states.reshape(trace.states.shape[0], -1)
    flags = trace.accepted.reshape(trace.accepted.shape[0], -1).astype(int)
    rows = ([t, *(format_float(v) for v in states[t]), *flags[t]] for t in range(states.shape[0]))
    _atomic_write_text(path, _csv_text(trace_header(trace), rows))
    return path


def read_trace_csv(path: str) -> ChainTrace:
    """读回 write_trace_csv 写出的轨迹。"""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    n_flags = sum(1 for name in header if name.startswith("accepted"))
    data = np.array([[float(v) for v in row[1:len(header) - n_flags]] for row in rows])
    flags = np.array([[v == "1" for v in row[len(header) - n_flags:]] for row in rows], dtype=bool)
    if header[-1] == "accepted":
        return ChainTrace(PLANAR, data, flags[:, 0])
    return ChainTrace("square", data.reshape(len(rows), -1, 2), flags)


def write_curve_csv(path: str, curve) -> str:
    """TvCurve 按检查点逐行写出。"""
    rows = ([t, format_float(e), format_float(s), format_float(curve.reference), curve.functional, curve.seed]
            for t, e, s in zip(curve.checkpoints, curve.estimates, curve.stderrs))
    _atomic_write_text(path, _csv_text(CURVE_HEADER, rows))
    return path


def read_curve_csv(path: str) -> Dict[str, list]:
    """读回曲线 CSV，返回列名 -> 列值。"""
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    return {
        "checkpoint": [int(r["checkpoint"]) for r in rows],
        "estimate": [float(r["estimate"]) for r in rows],
        "stderr": [float(r["stderr"]) for r in rows],
        "reference": [float(r["reference"]) for r in rows],
        "functional": [r["functional"] for r in rows],
        "seed": [int(r["seed"]) for r in rows],
    }


def write_rows_csv(path: str, header, rows) -> str:
    """通用表格（如 PSRF 汇总），数值列用 repr。"""
    formatted = ([format_float(v) if isinstance(v, float) else v for v in row] for row in rows)
    _atomic_write_text(path, _csv_text(header, formatted))
    return path


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def output_digests(out_dir: str, names) -> Dict[str, str]:
    """输出文件名（相对 out_dir）-> SHA-256，按文件名排序。"""
    return {name: sha256_file(os.path.join(out_dir, name)) for name in sorted(names)}


def write_manifest(out_dir: str, manifest: RunManifest) -> str:
    return write_json_report(os.path.join(out_dir, MANIFEST_NAME), asdict(manifest))


def load_manifest(path: str) -> RunManifest:
    """
    读取运行清单。

    Raises:
        OSError: 文件不存在或不可读。
        ConfigError: 不是合法的 JSON 或缺少必要字段。
    """
    try:
        data = read_json(path)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"运行清单 {path} 不是合法的 JSON: {e}") from e
    try:
        return _manifest_from(data)
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ConfigError(f"运行清单 {path} 缺少或含有非法字段: {e!r}") from e


def _manifest_from(data) -> RunManifest:
    return RunManifest(
        command=list(data["command"]),
        config=dict(data["config"]),
        rng_algorithm=data["rng_algorithm"],
        version=data["version"],
        started_at=data.get("started_at", ""),
        wall_clock_seconds=data.get("wall_clock_seconds", 0.0) or 0.0,
        outputs=dict(data.get("outputs", {})),
        summary=dict(data.get("summary", {})),
    )


def compare_digests(expected: Dict[str, str], actual: Dict[str, str]) -> List[str]:
    """返回不一致（缺失、多余或摘要不同）的文件名列表。"""
    names = sorted(set(expected) | set(actual))
    return [name for name in names if expected.get(name) != actual.get(name)]
