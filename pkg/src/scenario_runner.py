#!/usr/bin/env python3
"""
神经形态FRI采样实验运行器

子命令:
    run <配置文件|内置场景>   运行单个场景，写出事件、重构报告与绘图数据表
    verify                    运行全部内置场景与性质检验，写出 validation_report.json
    sweep                     随机信号批量试验
    list                      列出内置场景

退出码: 0 成功; 2 配置错误 (含阈值超出上界); 3 重构失败
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from event_io import write_event_streams, write_reports
from fri_errors import (ConfigError, InsufficientEvents, InsufficientTotalEvents, NeuroFriError,
                        ThresholdBoundError)
from fri_reconstructor import ModelSpec, ReconstructionReport, reconstruct, reconstructed_signal
from multichannel import (ChannelBank, ChannelConfig, mimo_reconstruct, mimo_threshold_bounds,
                          simo_reconstruct, simo_threshold_bounds, simo_thresholds, subrate_thresholds)
from neuromorphic_encoder import EventStream, encode_channels, max_threshold_for, t_transform
from prony import match_supports
from scenarios import (BUILTIN_SCENARIOS, SCENARIO_ALIASES, ScenarioConfig, builtin_scenario, resolve_scenario,
                       validate_config)
from signal_model import FilteredSignal, FriSignal, SignalKind, evaluate_signal
from sms_kernels import SamplingKernel
from validation_suite import run_property_suites

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RECONSTRUCTION = 3
PLOT_POINTS = 2000


@dataclass
class ScenarioResult:
    """场景运行结果摘要"""
    name: str
    status: str
    passed: bool
    events: List[int] = field(default_factory=list)
    cond_G: Optional[float] = None
    residual: Optional[float] = None
    max_error: Optional[float] = None
    thresholds: List[float] = field(default_factory=list)
    message: str = ''

    def summary_row(self) -> Dict:
        return {
            'scenario': self.name,
            'L': '+'.join(str(n) for n in self.events),
            'condG': self.cond_G,
            'residual': self.residual,
            'max_error': self.max_error,
            'status': self.status,
            'pass': self.passed,
        }

    def to_dict(self) -> Dict:
        return asdict(self)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, ThresholdBoundError)):
        return EXIT_CONFIG
    return EXIT_RECONSTRUCTION


# ---------------------------------------------------------------------------
# 阈值
# ---------------------------------------------------------------------------

def resolve_thresholds(config: ScenarioConfig, filtered: Sequence[FilteredSignal]) -> Tuple[List[float], Dict]:
    """
    按配置的阈值策略确定各通道阈值，并给出对应的理论上界

    Returns:
        (阈值列表, 上界信息)
    """
    K, T, Q = config.K, config.T, config.Q
    if config.configuration == 'single':
        bounds = {'rule': 'single', 'upper': [max_threshold_for(filtered[0], 2 * K + 1, T=T)]}
    elif config.configuration == 'simo':
        bounds = {'rule': 'simo', 'upper': [simo_threshold_bounds(filtered[0], Q, K, T=T)[1]]}
    else:
        bounds = {'rule': 'mimo', 'upper': mimo_threshold_bounds(filtered, K, T=T)}

    policy = config.threshold['policy']
    if policy == 'explicit':
        thresholds = [float(v) for v in config.threshold['values']]
    elif policy == 'bound_fraction':
        fraction = float(config.threshold.get('fraction', 0.9))
        if config.configuration == 'simo':
            thresholds = simo_thresholds(bounds['upper'][0], Q, start=fraction)
        else:
            thresholds = [fraction * upper for upper in bounds['upper']]
    else:
        search_max = float(config.threshold.get('search_max', 1.0))
        thresholds, counts = subrate_thresholds(filtered[0], Q, K, T=T, search_max=search_max,
                                                grid_density=config.grid_density)
        bounds.update(search_max=search_max, subrate_counts=counts)
    return thresholds, bounds


def check_threshold_bounds(config: ScenarioConfig, thresholds: Sequence[float], bounds: Dict):
    """
    编码前断言阈值满足理论上界

    Raises:
        ThresholdBoundError: 阈值不小于上界 (预期失败的场景只记录日志)
    """
    if bounds['rule'] == 'mimo':
        limits = bounds['upper']
    else:
        limits = [bounds['upper'][0] * bounds.get('search_max', 1.0)] * len(thresholds)

    violations = [(i, C, limit) for i, (C, limit) in enumerate(zip(thresholds, limits)) if not C < limit]
    if violations:
        detail = ", ".join(f"通道{i}: C={C:.6g} >= {limit:.6g}" for i, C, limit in violations)
        if config.expect == 'insufficient_events':
            logger.info(f"阈值超出上界 (预期失败场景): {detail}")
            return
        raise ThresholdBoundError(f"场景 {config.name} 的阈值超出上界: {detail}")

    if bounds.get('search_max', 1.0) > 1.0 and any(C >= bounds['upper'][0] for C in thresholds):
        logger.info(f"亚速率阈值超出SIMO上界 {bounds['upper'][0]:.6g}，事件总数已由实际编码核验")


# ---------------------------------------------------------------------------
# 单场景
# ---------------------------------------------------------------------------

def _reconstruct(config: ScenarioConfig, streams: List[EventStream], model: ModelSpec,
                 bounds: Dict) -> List[ReconstructionReport]:
    try:
        if config.configuration == 'single':
            return [reconstruct(streams[0], model, config.T)]
        if config.configuration == 'simo':
            return [simo_reconstruct(ChannelBank(ChannelConfig.SIMO, streams), model, config.T)]
        return mimo_reconstruct(ChannelBank(ChannelConfig.MIMO, streams), model, config.T)
    except InsufficientEvents as exc:
        if exc.threshold_bound is not None:
            raise
        channel = exc.channel if exc.channel is not None else 0
        upper = bounds['upper'][min(channel, len(bounds['upper']) - 1)]
        raise InsufficientEvents(exc.required, exc.observed, exc.channel, threshold_bound=upper) from exc


def write_plot_tables(out_dir: Path, signals: Sequence[FriSignal], filtered: Sequence[FilteredSignal],
                      streams: Sequence[EventStream], reports: Sequence[ReconstructionReport],
                      model: ModelSpec, n_points: int = PLOT_POINTS):
    """
    绘图数据表 (仅数据，不渲染):
        plot_signal.csv  稠密网格上的 x(t)、f(t)、重构 x̆(t)
        plot_events.csv  事件栅格 (t_m, p_m) 与 t变换幅度样本
        plot_stems.csv   真值与重构的支撑/系数 (按周期距离配对)
    """
    T = signals[0].T
    t = T * np.arange(n_points) / n_points

    signal_rows, stem_rows = [], []
    for index, (signal, f) in enumerate(zip(signals, filtered)):
        report = reports[min(index, len(reports) - 1)] if reports else None
        x_rec = (evaluate_signal(reconstructed_signal(report, model, T), t)
                 if report is not None else np.full_like(t, np.nan))
        signal_rows.append(pd.DataFrame({'signal': index, 't': t, 'x': evaluate_signal(signal, t),
                                         'f': f(t), 'x_rec': x_rec}))
        if report is not None:
            assignment, _ = match_supports(report.tau, signal.tau, T)
            tau_rec, a_rec = report.tau[assignment], report.a[assignment]
        else:
            tau_rec = a_rec = np.full(signal.K, np.nan)
        stem_rows.append(pd.DataFrame({'signal': index, 'k': np.arange(signal.K), 'tau': signal.tau,
                                       'a': signal.a, 'tau_rec': tau_rec, 'a_rec': a_rec}))

    event_rows = []
    for stream in streams:
        times, samples = t_transform(stream)
        event_rows.append(pd.DataFrame({'channel': stream.channel, 't': times,
                                        'p': stream.polarities.astype(int), 'f': samples}))

    pd.concat(signal_rows, ignore_index=True).to_csv(out_dir / 'plot_signal.csv', index=False)
    pd.concat(stem_rows, ignore_index=True).to_csv(out_dir / 'plot_stems.csv', index=False)
    pd.concat(event_rows, ignore_index=True).to_csv(out_dir / 'plot_events.csv', index=False)


def run_scenario(config: ScenarioConfig, out_dir=None, n_jobs: int = 1) -> ScenarioResult:
    """
    运行一个场景: 构造信号 -> 滤波 -> 阈值断言 -> 编码 -> 重构 -> 写出结果

    Raises:
        ConfigError / ThresholdBoundError / 重构过程中的 NeuroFriError
    """
    out_dir = Path(out_dir) if out_dir is not None else Path('results') / config.name
    logger.info(f"场景 {config.name}: {config.configuration}, Q={config.Q}, K={config.K}")

    signals = config.build_signals()
    kernel = SamplingKernel.from_dict(config.kernel)
    filtered = [FilteredSignal(signal, kernel) for signal in signals]
    model = ModelSpec.from_signal(signals[0])

    thresholds, bounds = resolve_thresholds(config, filtered)
    check_threshold_bounds(config, thresholds, bounds)
    logger.info(f"阈值 {[f'{C:.6g}' for C in thresholds]}, 上界 {[f'{u:.6g}' for u in bounds['upper']]}")

    sources = filtered if config.configuration == 'mimo' else filtered[0]
    streams = encode_channels(sources, thresholds, T=config.T, grid_density=config.grid_density,
                              K=config.K, n_jobs=n_jobs)
    counts = [len(s) for s in streams]
    logger.info(f"各通道事件数: {counts}")

    out_dir.mkdir(parents=True, exist_ok=True)
    write_event_streams(streams, out_dir / 'events.csv')
    extra = {'scenario': config.to_dict(), 'thresholds': thresholds, 'bounds': bounds}

    expected_failure = config.expect == 'insufficient_events'
    try:
        reports = _reconstruct(config, streams, model, bounds)
    except (InsufficientEvents, InsufficientTotalEvents) as exc:
        if not expected_failure:
            raise
        logger.info(f"预期内的失败: {exc}")
        write_reports([], out_dir / 'report.json',
                      extra={**extra, 'status': 'expected_failure', 'passed': True, 'message': str(exc)})
        write_plot_tables(out_dir, signals, filtered, streams, [], model)
        return ScenarioResult(config.name, 'expected_failure', True, counts, thresholds=thresholds,
                              message=str(exc))

    truths = signals if config.configuration == 'mimo' else [signals[0]] * len(reports)
    reports = [report.evaluate_against(truth) for report, truth in zip(reports, truths)]
    max_error = max(report.max_error for report in reports)

    if expected_failure:
        status, passed, message = 'failed', False, "预期事件数不足，但重构成功"
    else:
        passed = max_error < config.tolerance
        status = 'passed' if passed else 'failed'
        message = '' if passed else f"最大参数误差 {max_error:.3e} 超过容差 {config.tolerance:.0e}"

    write_reports(reports, out_dir / 'report.json',
                  extra={**extra, 'status': status, 'passed': passed, 'max_error': max_error})
    write_plot_tables(out_dir, signals, filtered, streams, reports, model)

    result = ScenarioResult(config.name, status, passed, counts,
                            cond_G=max(r.cond_G for r in reports),
                            residual=max(r.residual for r in reports),
                            max_error=max_error, thresholds=thresholds, message=message)
    log = logger.info if passed else logger.error
    log(f"场景 {config.name}: {status}, 最大误差 {max_error:.3e}")
    return result


def _run_guarded(config: ScenarioConfig, out_dir: Path, n_jobs: int = 1) -> ScenarioResult:
    try:
        return run_scenario(config, out_dir, n_jobs=n_jobs)
    except NeuroFriError as exc:
        logger.error(f"场景 {config.name} 失败: {exc}")
        return ScenarioResult(config.name, type(exc).__name__, False, message=str(exc))


# ---------------------------------------------------------------------------
# verify / sweep
# ---------------------------------------------------------------------------

def verify_suite(out_dir=None, grid_density: Optional[int] = None, trials: int = 100,
                 n_jobs: int = 1) -> bool:
    """运行全部内置场景与性质检验，打印汇总表并写出 validation_report.json"""
    out_dir = Path(out_dir) if out_dir is not None else Path('results') / 'verify'
    out_dir.mkdir(parents=True, exist_ok=True)

    results = []
    for name in BUILTIN_SCENARIOS:
        config = builtin_scenario(name).with_overrides(grid_density=grid_density)
        results.append(_run_guarded(config, out_dir / name))
    scenario_table = pd.DataFrame([r.summary_row() for r in results])

    property_kwargs = {'trials': trials, 'n_jobs': n_jobs}
    if grid_density is not None:
        property_kwargs['grid_density'] = grid_density
    properties = run_property_suites(**property_kwargs)
    property_table = pd.DataFrame([p.to_dict() for p in properties])

    print(scenario_table.to_string(index=False))
    print()
    print(property_table.to_string(index=False))

    all_passed = bool(scenario_table['pass'].all() and property_table['passed'].all())
    report = {
        'all_passed': all_passed,
        'scenarios': [r.to_dict() for r in results],
        'properties': [p.to_dict() for p in properties],
    }
    with open(out_dir / 'validation_report.json', 'w', encoding='utf-8') as f:
        json.dump(report, f, indent=2, ensure_ascii=False)
    logger.info(f"验证{'全部通过' if all_passed else '存在失败'}，报告已保存至: {out_dir / 'validation_report.json'}")
    return all_passed


def sweep_configs(trials: int, seed: int, K: int, kind: str = 'dirac', degree: Optional[int] = None,
                  grid_density: Optional[int] = None) -> List[ScenarioConfig]:
    """随机批量试验的场景配置，每次试验的种子由 SeedSequence 派生"""
    states = np.random.SeedSequence(seed).generate_state(trials)
    random_spec = {'kind': kind, 'K': K, 'amplitude': 'uniform', 'min_gap': 1 / 50}
    if SignalKind(kind) == SignalKind.LSPLINE:
        random_spec['degree'] = 0 if degree is None else degree
    configs = []
    for i, state in enumerate(states):
        raw = {
            'name': f'trial_{i:04d}',
            'configuration': 'single', 'Q': 1, 'seed': int(state),
            'signal': {'random': dict(random_spec)},
            'kernel': {'family': 'sms', 'r': 0, 'K': K, 'T': 1.0},
            'threshold': {'policy': 'bound_fraction', 'fraction': 0.9},
        }
        if grid_density is not None:
            raw['grid_density'] = grid_density
        configs.append(validate_config(raw))
    return configs


def run_sweep(trials: int, seed: int, K: int, out_dir=None, kind: str = 'dirac',
              degree: Optional[int] = None, grid_density: Optional[int] = None,
              n_jobs: int = 1) -> pd.DataFrame:
    """批量随机试验，各试验写入 trial_XXXX 子目录，汇总写入 sweep_summary.csv"""
    out_dir = Path(out_dir) if out_dir is not None else Path('results') / 'sweep'
    configs = sweep_configs(trials, seed, K, kind, degree, grid_density)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_run_guarded)(config, out_dir / config.name)
        for config in tqdm(configs, desc='随机试验', disable=trials < 2))

    summary = pd.DataFrame([r.summary_row() for r in results])
    out_dir.mkdir(parents=True, exist_ok=True)
    summary.to_csv(out_dir / 'sweep_summary.csv', index=False)

    errors = pd.to_numeric(summary['max_error'], errors='coerce')
    logger.info(f"随机试验 {trials} 次: 通过 {int(summary['pass'].sum())} 次, "
                f"最大误差中位数 {errors.median():.3e}, 最大值 {errors.max():.3e}")
    return summary


# ---------------------------------------------------------------------------
# 命令行
# ---------------------------------------------------------------------------

def parse_random_order(text: str) -> int:
    """'K=6' 或 '6'"""
    value = text.split('=', 1)[1] if '=' in text else text
    try:
        K = int(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"无法解析模型阶数: {text}") from exc
    if K < 1:
        raise argparse.ArgumentTypeError(f"模型阶数必须为正整数: {text}")
    return K


def setup_logging(verbose: bool = False, log_file: Optional[str] = None):
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s',
                        handlers=handlers, force=True)


def _cmd_run(args) -> int:
    config = resolve_scenario(args.target).with_overrides(grid_density=args.grid_density)
    result = run_scenario(config, args.out, n_jobs=args.jobs)
    print(pd.DataFrame([result.summary_row()]).to_string(index=False))
    return EXIT_OK if result.passed else EXIT_RECONSTRUCTION


def _cmd_verify(args) -> int:
    passed = verify_suite(args.out, grid_density=args.grid_density, trials=args.trials, n_jobs=args.jobs)
    return EXIT_OK if passed else EXIT_RECONSTRUCTION


def _cmd_sweep(args) -> int:
    summary = run_sweep(args.trials, args.seed, args.random, args.out, kind=args.kind, degree=args.degree,
                        grid_density=args.grid_density, n_jobs=args.jobs)
    return EXIT_OK if bool(summary['pass'].all()) else EXIT_RECONSTRUCTION


def _cmd_list(args) -> int:
    for name, raw in BUILTIN_SCENARIOS.items():
        print(f"{name:<22} {raw['configuration']:<7} {raw.get('description', '')}")
    for alias, name in SCENARIO_ALIASES.items():
        print(f"{alias:<22} -> {name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='神经形态FRI采样与完美重构实验运行器')
    parser.add_argument('--log-file', type=str, help='同时写入的日志文件')
    parser.add_argument('--verbose', action='store_true', help='输出调试日志')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('--out', type=str, help='输出目录')
        p.add_argument('--grid-density', type=int, help='编码扫描网格点数 (覆盖配置)')
        p.add_argument('--jobs', type=int, default=1, help='并行任务数')

    p_run = sub.add_parser('run', help='运行单个场景')
    p_run.add_argument('target', help='配置文件路径或内置场景名')
    common(p_run)
    p_run.set_defaults(handler=_cmd_run)

    p_verify = sub.add_parser('verify', help='运行全部内置场景与性质检验')
    p_verify.add_argument('--trials', type=int, default=100, help='性质检验的随机试验次数')
    common(p_verify)
    p_verify.set_defaults(handler=_cmd_verify)

    p_sweep = sub.add_parser('sweep', help='随机信号批量试验')
    p_sweep.add_argument('--trials', type=int, default=100, help='试验次数')
    p_sweep.add_argument('--seed', type=int, default=0, help='随机种子')
    p_sweep.add_argument('--random', type=parse_random_order, default=5, metavar='K=N', help='模型阶数')
    p_sweep.add_argument('--kind', choices=[k.value for k in SignalKind], default='dirac', help='信号类型')
    p_sweep.add_argument('--degree', type=int, help='L样条次数')
    common(p_sweep)
    p_sweep.set_defaults(handler=_cmd_sweep)

    p_list = sub.add_parser('list', help='列出内置场景')
    p_list.set_defaults(handler=_cmd_list)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """主函数"""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose, args.log_file)
    try:
        return args.handler(args)
    except (ConfigError, ThresholdBoundError) as exc:
        logger.error(f"配置错误: {exc}")
        return EXIT_CONFIG
    except NeuroFriError as exc:
        logger.error(f"重构失败 ({type(exc).__name__}): {exc}")
        return EXIT_RECONSTRUCTION


if __name__ == "__main__":
    sys.exit(main())
