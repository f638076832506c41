#!/usr/bin/python3
# -*- coding: utf-8 -*-
"""
ChainBound 命令行入口。

    chainbound.py simulate      [--config PATH] [--seed N] [--out DIR] [--threads N]
    chainbound.py bound         {uniform,shift-coupling}
    chainbound.py verify        {drift,minorization,proof-constants,all}
    chainbound.py diagnose
    chainbound.py tv-curve
    chainbound.py replay        MANIFEST

每条命令都在输出目录写 manifest.json（含配置回显与各输出文件的 SHA-256）和 chainbound.log。
"""

import os
import sys
import time
import logging
import argparse
import tempfile
from dataclasses import fields
from datetime import datetime
from typing import List, Optional, Tuple

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules import bounds, diagnostics, tv_estimator  # noqa: E402
from modules import model_core as mc  # noqa: E402
from modules import storage  # noqa: E402
from modules.config import (LOG_FORMAT, RNG_ALGORITHM, VERSION, DIAGNOSTIC_FUNCTIONALS,  # noqa: E402
                            ExperimentConfig, load_experiment_config)
from modules.errors import (EXIT_OK, ChainBoundError, ConfigError, ReplayMismatch,  # noqa: E402
                            exit_code_for)
from modules.samplers import SQUARE, EnsembleSpec, InitPolicy, acceptance_rate, run_ensemble  # noqa: E402

logger = logging.getLogger("chainbound")

BOUND_KINDS = ("uniform", "shift-coupling")
VERIFY_TARGETS = ("drift", "minorization", "proof-constants", "all")


# ---------------------------------------------------------------------------
# 配置到领域对象
# ---------------------------------------------------------------------------

def model_params(config: ExperimentConfig) -> Optional[mc.ModelParams]:
    return mc.ModelParams(config.c1, config.c2) if config.model == SQUARE else None


def ensemble_spec(config: ExperimentConfig) -> EnsembleSpec:
    init = InitPolicy(
        kind=config.init_policy,
        point=tuple(config.init_point),
        low=0.0 if config.init_low is None else config.init_low,
        high=1.0 if config.init_high is None else config.init_high,
    )
    return EnsembleSpec(config.m_chains, config.iterations, config.seed, init)


def lookup_functional(model: str, name: str) -> diagnostics.FunctionalSpec:
    """按名称查找内置泛函（诊断泛函与全变差泛函）。"""
    candidates = {fun.name: fun for fun in diagnostics.builtin_functionals(model)}
    candidates.update({fun.name: fun for fun in tv_estimator.builtin_tv_functionals(model)})
    if name not in candidates:
        raise ConfigError(f"模型 {model} 没有泛函 {name}")
    return candidates[name]


# ---------------------------------------------------------------------------
# 各子命令：返回 (输出文件名列表, 摘要)
# ---------------------------------------------------------------------------

def cmd_simulate(config: ExperimentConfig) -> Tuple[List[str], dict]:
    """每条链写一个轨迹 CSV。"""
    traces = run_ensemble(config.model, ensemble_spec(config), model_params(config), config.threads)
    outputs = []
    for j, trace in enumerate(traces):
        name = f"chain_{j:03d}.csv"
        storage.write_trace_csv(os.path.join(config.out, name), trace)
        outputs.append(name)
    rates = [acceptance_rate(trace) for trace in traces]
    summary = {"chains": len(traces), "iterations": config.iterations,
               "mean_acceptance_rate": sum(rates) / len(rates)}
    logger.info(f"已写出 {len(traces)} 条轨迹，平均接受率 {summary['mean_acceptance_rate']:.4f}")
    return outputs, summary


def cmd_bound(config: ExperimentConfig, kind: str) -> Tuple[List[str], dict]:
    """uniform：ε、第 n 步的界与所需步数；shift-coupling：给定 r 的系数与最优 r。"""
    if kind == "uniform":
        report = bounds.uniform_bound_report(config.c1, config.c2, config.bound_delta, config.bound_n)
    elif kind == "shift-coupling":
        minor = bounds.MinorizationCertificate(n0=config.bound_n0, epsilon=config.bound_epsilon)
        drift = bounds.DriftCertificate(lam=config.bound_lambda, b=config.bound_b, d=config.bound_d,
                                        A=config.bound_a)
        report = bounds.shift_coupling_report(minor, drift, config.bound_e_nu_v, config.bound_r, config.bound_n)
    else:
        raise ConfigError(f"未知界类型: {kind}（可选 {BOUND_KINDS}）")
    name = f"bound_{kind.replace('-', '_')}.json"
    storage.write_json_report(os.path.join(config.out, name), report.as_dict())
    print(storage.to_json_text(report.as_dict()), end="")
    return [name], report.values


def _verify_minorization() -> dict:
    result = bounds.verify_minorization_planar()
    return {"mass": result.value, "closed_form": bounds.minorization_mass_closed_form(),
            "error_estimate": result.error_estimate, "epsilon": bounds.PLANAR_EPSILON,
            "margin": result.value - bounds.PLANAR_EPSILON}


def _verify_proof_constants() -> dict:
    consts = bounds.proof_constants_planar()
    return {"m1": consts.m1, "m2": consts.m2, "m1_prime": consts.m1_prime, "m2_prime": consts.m2_prime,
            "m1_m1_prime": consts.lower_product, "m2_m2_prime_half": consts.upper_product}


def _verify_square(config: ExperimentConfig) -> dict:
    constants = bounds.square_minorization_constants(config.c1, config.c2)
    estimate, stderr = bounds.leb_good_set_estimate(seed=config.seed)
    if estimate < bounds.THEOREM1_SCALE:
        raise bounds.CertificateViolation(f"好集合体积估计 {estimate:.4f} 小于 {bounds.THEOREM1_SCALE}",
                                          "leb_good_set", estimate)
    return {**constants, "leb_estimate": estimate, "leb_stderr": stderr}


def cmd_verify(config: ExperimentConfig, target: str) -> Tuple[List[str], dict]:
    """运行数值审计；任一断言失败抛出 CertificateViolation。"""
    if target not in VERIFY_TARGETS:
        raise ConfigError(f"未知审计目标: {target}（可选 {VERIFY_TARGETS}）")
    report = {}
    if target in ("drift", "all"):
        grid = bounds.DriftGrid(points=config.verify_points, r_check=config.verify_r_check, tol=config.verify_tol)
        drift = bounds.verify_drift_planar(grid, config.threads)
        report["drift"] = drift.values
    if target in ("minorization", "all"):
        report["minorization"] = _verify_minorization()
    if target in ("proof-constants", "all"):
        report["proof_constants"] = _verify_proof_constants()
    if target == "all":
        report["square_minorization"] = _verify_square(config)
    name = f"verify_{target.replace('-', '_')}.json"
    storage.write_json_report(os.path.join(config.out, name), report)
    print(storage.to_json_text(report), end="")
    return [name], {"passed": sorted(report)}


def cmd_diagnose(config: ExperimentConfig) -> Tuple[List[str], dict]:
    """对每个泛函计算 B、W、σ̂²、V̂、R，写 JSON 与 CSV。"""
    if config.m_chains < 2:
        raise ConfigError("diagnose 至少需要 2 条链")
    names = config.functionals or DIAGNOSTIC_FUNCTIONALS
    funs = [lookup_functional(config.model, name) for name in names]
    traces = run_ensemble(config.model, ensemble_spec(config), model_params(config), config.threads)
    reports = diagnostics.psrf_all(traces, funs, config.burn_in, config.diagnose_df_mode)
    payload = {name: report.as_dict() for name, report in reports.items()}
    storage.write_json_report(os.path.join(config.out, "diagnose.json"), payload)
    header = ("functional", "B", "W", "sigma2_hat", "V_hat", "R", "R_unit", "R_moment")
    rows = [(r.functional, r.B, r.W, r.sigma2_hat, r.V_hat, r.R, r.R_unit, r.R_moment) for r in reports.values()]
    storage.write_rows_csv(os.path.join(config.out, "diagnose.csv"), header, rows)
    for r in reports.values():
        print(f"{r.functional}: B={r.B:.4f} W={r.W:.4f} V_hat={r.V_hat:.4f} R={r.R:.4f}")
    return ["diagnose.csv", "diagnose.json"], {name: r.R for name, r in reports.items()}


def cmd_tv_curve(config: ExperimentConfig) -> Tuple[List[str], dict]:
    """每个泛函写一个 tv_curve_<name>.csv；全部泛函共用一次参考集合与一次主集合模拟。"""
    names = config.functionals or ("f",)
    funs = [lookup_functional(config.model, name) for name in names]
    for fun in funs:
        if not fun.has_range:
            raise ConfigError(f"泛函 {fun.name} 没有声明取值范围，无法估计全变差")
    checkpoints = config.checkpoints or tv_estimator.default_checkpoints(config.iterations)
    params = model_params(config)
    spec = ensemble_spec(config)
    references = tv_estimator.reference_expectations(
        config.model, funs, params, seed=(config.seed + 1) % 2**64, m_chains=config.tv_reference_chains,
        iterations=config.tv_reference_iterations, threads=config.threads)
    curves = tv_estimator.tv_curves(config.model, funs, spec, checkpoints, params, references, config.threads)
    outputs, summary = [], {}
    for fun, curve in zip(funs, curves):
        name = f"tv_curve_{fun.name}.csv"
        storage.write_curve_csv(os.path.join(config.out, name), curve)
        outputs.append(name)
        summary[fun.name] = {"checkpoint": curve.checkpoints[-1], "estimate": curve.estimates[-1],
                             "stderr": curve.stderrs[-1], "reference": curve.reference}
        print(f"{fun.name}: 检查点 {curve.checkpoints[-1]} 处全变差估计 {curve.estimates[-1]:.6f}"
              f" ± {curve.stderrs[-1]:.2e}（单个泛函给出的下界估计）")
    return outputs, summary


def run_command(command: List[str], config: ExperimentConfig) -> storage.RunManifest:
    """执行一条子命令并写运行清单。"""
    if not command or (command[0] in ("bound", "verify") and len(command) < 2):
        raise ConfigError(f"命令不完整: {command}")
    os.makedirs(config.out, exist_ok=True)
    started_at = datetime.now().isoformat(timespec="seconds")
    start_time = time.time()
    head = command[0]
    if head == "simulate":
        outputs, summary = cmd_simulate(config)
    elif head == "bound":
        outputs, summary = cmd_bound(config, command[1])
    elif head == "verify":
        outputs, summary = cmd_verify(config, command[1])
    elif head == "diagnose":
        outputs, summary = cmd_diagnose(config)
    elif head == "tv-curve":
        outputs, summary = cmd_tv_curve(config)
    else:
        raise ConfigError(f"未知命令: {head}")
    manifest = storage.RunManifest(
        command=list(command),
        config=config.as_dict(),
        rng_algorithm=RNG_ALGORITHM,
        version=VERSION,
        started_at=started_at,
        wall_clock_seconds=time.time() - start_time,
        outputs=storage.output_digests(config.out, outputs),
        summary=summary,
    )
    storage.write_manifest(config.out, manifest)
    logger.info(f"命令 {' '.join(command)} 完成，耗时 {manifest.wall_clock_seconds:.2f} 秒")
    return manifest


def config_from_echo(echo: dict, **overrides) -> ExperimentConfig:
    """由清单中的配置回显重建 ExperimentConfig（JSON 数组还原为元组）。"""
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(echo) - known)
    if unknown:
        raise ConfigError(f"清单中有未知配置项: {unknown}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in echo.items()}
    values.update(overrides)
    return ExperimentConfig(**values)


def cmd_replay(manifest_path: str, threads: Optional[int] = None) -> storage.RunManifest:
    """
    按清单重跑命令，并比较输出文件的 SHA-256。

    Raises:
        ReplayMismatch: 任一输出与清单记录不一致。
    """
    recorded = storage.load_manifest(manifest_path)
    if recorded.version != VERSION:
        logger.warning(f"清单版本 {recorded.version} 与当前版本 {VERSION} 不同，可能无法逐字节复现")
    with tempfile.TemporaryDirectory(prefix="chainbound-replay-") as tmp:
        overrides = {"out": tmp}
        if threads is not None:
            overrides["threads"] = threads
        replayed = run_command(recorded.command, config_from_echo(recorded.config, **overrides))
    mismatched = storage.compare_digests(recorded.outputs, replayed.outputs)
    if mismatched:
        raise ReplayMismatch(f"重放输出与清单不一致: {mismatched}", mismatched)
    logger.info(f"重放成功：{len(replayed.outputs)} 个输出文件与清单一致")
    print(f"重放成功：{len(replayed.outputs)} 个输出文件一致")
    return replayed


# ---------------------------------------------------------------------------
# 命令行
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="KEY=value 格式的实验配置文件")
    common.add_argument("--seed", type=int, help="覆盖配置中的 SEED")
    common.add_argument("--out", help="输出目录，覆盖配置中的 OUT")
    common.add_argument("--threads", type=int, help="工作线程数，只影响速度")
    common.add_argument("--verbose", action="store_true", help="输出 DEBUG 日志")

    parser = argparse.ArgumentParser(prog="chainbound", description="吸引-排斥粒子系统的 MCMC 收敛界与诊断")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="模拟链并写出轨迹 CSV")
    bound = sub.add_parser("bound", parents=[common], help="计算全变差界")
    bound.add_argument("kind", nargs="?", choices=BOUND_KINDS, help="缺省时取配置中的 BOUND_KIND")
    verify = sub.add_parser("verify", parents=[common], help="数值审计证书")
    verify.add_argument("target", nargs="?", default="all", choices=VERIFY_TARGETS)
    sub.add_parser("diagnose", parents=[common], help="PSRF 收敛诊断")
    sub.add_parser("tv-curve", parents=[common], help="单泛函全变差估计曲线")
    replay = sub.add_parser("replay", parents=[common], help="按清单重跑并比较输出摘要")
    replay.add_argument("manifest", help="manifest.json 路径")
    return parser


def setup_logging(out_dir: Optional[str], verbose: bool) -> Optional[logging.Handler]:
    """控制台日志 + 输出目录下的 chainbound.log；返回文件 handler 以便结束时移除。"""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)
    if not out_dir:
        return None
    os.makedirs(out_dir, exist_ok=True)
    file_handler = logging.FileHandler(os.path.join(out_dir, storage.LOG_NAME), encoding="utf-8")
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger().addHandler(file_handler)
    return file_handler


def main(argv: Optional[List[str]] = None) -> int:
    """
    解析参数、执行命令并返回退出码。

    Returns:
        int: 0 成功；2 用法错误；3 证书未通过；4 参数不可行；5 诊断退化；6 积分失败；7 I/O 错误。
    """
    args = build_parser().parse_args(argv)
    file_handler = None
    try:
        if args.command == "replay":
            file_handler = setup_logging(args.out, args.verbose)
            cmd_replay(args.manifest, args.threads)
            return EXIT_OK
        overrides = {"seed": args.seed, "out": args.out, "threads": args.threads}
        config = load_experiment_config(args.config, overrides)
        file_handler = setup_logging(config.out, args.verbose)
        logger.info(f"===== chainbound {args.command} 开始 - {datetime.now().strftime('%Y-%m-%d %H:%M:%S')} =====")
        command = [args.command]
        if args.command == "bound":
            command.append(args.kind or config.bound_kind)
        elif args.command == "verify":
            command.append(args.target)
        run_command(command, config)
        return EXIT_OK
    except (ChainBoundError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return exit_code_for(e)
    finally:
        if file_handler is not None:
            logging.getLogger().removeHandler(file_handler)
            file_handler.close()


if __name__ == "__main__":
    sys.exit(main())
