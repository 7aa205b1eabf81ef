#!/usr/bin/env python3
"""
场景配置: schema校验与内置场景

场景配置为JSON对象，键如下:
    name            场景名
    configuration   single | simo | mimo
    Q               通道数 (single 时为 1)
    seed            随机种子 (随机信号与随机支撑)
    signal          信号描述，或 {"random": {...}} (MIMO 生成Q个共享支撑的信号)
    signals         MIMO 显式给出每通道的信号描述 (与 signal 二选一)
    kernel          {family, r, K, T}
    threshold       {policy: explicit | bound_fraction | subrate, values | fraction | search_max}
    expect          success | insufficient_events
    grid_density    编码扫描网格点数 (每周期)
    tolerance       判定通过的最大参数误差
"""

import copy
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from fri_errors import ConfigError
from neuromorphic_encoder import ENCODER_GRID_DENSITY
from signal_model import FriSignal, SignalKind, pulse_from_dict, random_fri_signal
from sms_kernels import KERNEL_FAMILIES, MAX_SPLINE_ORDER

logger = logging.getLogger(__name__)

CONFIGURATIONS = ('single', 'simo', 'mimo')
THRESHOLD_POLICIES = ('explicit', 'bound_fraction', 'subrate')
EXPECTATIONS = ('success', 'insufficient_events')
DEFAULT_TOLERANCE = 1e-8

UNIFORM_DIRAC_TAU = [0.25, 0.375, 0.5, 0.625, 0.75]
PULSE_STREAM_A = [0.49, -0.65, 0.47, -0.52, 0.22]
PULSE_STREAM_TAU = [0.22, 0.35, 0.46, 0.62, 0.79]


@dataclass(frozen=True)
class ScenarioConfig:
    """校验后的场景配置"""
    name: str
    configuration: str
    Q: int
    seed: int
    signal: Optional[Dict]
    signals: Optional[List[Dict]]
    kernel: Dict
    threshold: Dict
    expect: str = 'success'
    grid_density: int = ENCODER_GRID_DENSITY
    tolerance: float = DEFAULT_TOLERANCE
    description: str = ''

    @property
    def K(self) -> int:
        return int(self.kernel['K'])

    @property
    def T(self) -> float:
        return float(self.kernel.get('T', 1.0))

    def to_dict(self) -> Dict:
        record = asdict(self)
        return {k: v for k, v in record.items() if v is not None}

    def with_overrides(self, **overrides) -> 'ScenarioConfig':
        """命令行参数覆盖配置项 (None 表示不覆盖)"""
        record = self.to_dict()
        record.update({k: v for k, v in overrides.items() if v is not None})
        return validate_config(record)

    def build_signals(self) -> List[FriSignal]:
        """
        构造每个通道的真值信号

        single/simo 返回单个信号; mimo 返回Q个共享支撑的信号。
        随机信号由 seed 完全确定。
        """
        if self.signals is not None:
            return [FriSignal.from_dict(d) for d in self.signals]
        if 'random' not in self.signal:
            return [FriSignal.from_dict(self.signal)]

        spec = dict(self.signal['random'])
        rng = np.random.default_rng(self.seed)
        kind = SignalKind(spec['kind'])
        K = int(spec.get('K', self.K))
        T = float(spec.get('T', self.T))
        options = dict(min_gap=spec.get('min_gap'), amplitude=spec.get('amplitude', 'normal'),
                       min_amplitude=spec.get('min_amplitude', 0.0),
                       pulse=pulse_from_dict(spec['pulse']) if 'pulse' in spec else None,
                       degree=spec.get('degree'))
        first = random_fri_signal(rng, kind, K, T, **options)
        if self.configuration != 'mimo':
            return [first]
        others = [random_fri_signal(rng, kind, K, T, tau=first.tau, **options) for _ in range(self.Q - 1)]
        return [first] + others


def _check_signal_descriptor(descriptor, where: str, K: Optional[int], problems: List[str]):
    if not isinstance(descriptor, dict):
        problems.append(f"{where} 必须是对象")
        return
    if 'random' in descriptor:
        spec = descriptor['random']
        if not isinstance(spec, dict) or spec.get('kind') not in [k.value for k in SignalKind]:
            problems.append(f"{where}.random.kind 必须为 {[k.value for k in SignalKind]} 之一")
        elif K is not None and int(spec.get('K', K)) != K:
            problems.append(f"{where}.random.K 与 kernel.K={K} 不一致")
        return
    try:
        signal = FriSignal.from_dict(descriptor)
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"{where} 不是合法的信号描述: {exc}")
        return
    if K is not None and signal.K != K:
        problems.append(f"{where} 的 K={signal.K} 与 kernel.K={K} 不一致")


def validate_config(raw: Dict) -> ScenarioConfig:
    """
    校验场景配置，一次性列出所有问题

    Raises:
        ConfigError: 配置不符合schema
    """
    if not isinstance(raw, dict):
        raise ConfigError("场景配置必须是JSON对象")
    problems: List[str] = []

    name = raw.get('name')
    if not isinstance(name, str) or not name:
        problems.append("name 必须是非空字符串")

    configuration = raw.get('configuration', 'single')
    if configuration not in CONFIGURATIONS:
        problems.append(f"configuration 必须为 {CONFIGURATIONS} 之一: {configuration!r}")

    Q = raw.get('Q', 1)
    if not isinstance(Q, int) or isinstance(Q, bool) or Q < 1:
        problems.append(f"Q 必须为正整数: {Q!r}")
    elif configuration == 'single' and Q != 1:
        problems.append(f"single 配置的 Q 必须为 1: {Q}")
    elif configuration == 'mimo' and Q < 2:
        problems.append(f"mimo 配置的 Q 必须 >= 2: {Q}")

    seed = raw.get('seed', 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append(f"seed 必须为非负整数: {seed!r}")

    kernel = raw.get('kernel')
    K = None
    if not isinstance(kernel, dict):
        problems.append("kernel 必须是对象 {family, r, K, T}")
    else:
        if kernel.get('family', 'sms') not in KERNEL_FAMILIES:
            problems.append(f"kernel.family 必须为 {KERNEL_FAMILIES} 之一")
        r = kernel.get('r', 0)
        if not isinstance(r, int) or not 0 <= r <= MAX_SPLINE_ORDER:
            problems.append(f"kernel.r 必须为 [0, {MAX_SPLINE_ORDER}] 内的整数: {r!r}")
        K = kernel.get('K')
        if not isinstance(K, int) or isinstance(K, bool) or K < 1:
            problems.append(f"kernel.K 必须为正整数: {K!r}")
            K = None
        T = kernel.get('T', 1.0)
        if not isinstance(T, (int, float)) or not T > 0:
            problems.append(f"kernel.T 必须为正数: {T!r}")

    signal, signals = raw.get('signal'), raw.get('signals')
    if (signal is None) == (signals is None):
        problems.append("signal 与 signals 必须且只能给出一个")
    elif signals is not None:
        if configuration != 'mimo' or not isinstance(signals, list):
            problems.append("signals 仅用于 mimo 配置，且必须为列表")
        else:
            if isinstance(Q, int) and len(signals) != Q:
                problems.append(f"signals 个数 {len(signals)} 与 Q={Q} 不一致")
            for i, descriptor in enumerate(signals):
                _check_signal_descriptor(descriptor, f"signals[{i}]", K, problems)
    else:
        _check_signal_descriptor(signal, "signal", K, problems)
        if configuration == 'mimo' and isinstance(signal, dict) and 'random' not in signal:
            problems.append("mimo 配置需给出 signals 列表或随机信号 (signal.random)")

    threshold = raw.get('threshold')
    if not isinstance(threshold, dict) or threshold.get('policy') not in THRESHOLD_POLICIES:
        problems.append(f"threshold.policy 必须为 {THRESHOLD_POLICIES} 之一")
    else:
        policy = threshold['policy']
        if policy == 'explicit':
            values = threshold.get('values')
            if (not isinstance(values, list) or not values
                    or not all(isinstance(v, (int, float)) and v > 0 for v in values)):
                problems.append("explicit 策略需要正数列表 threshold.values")
            elif isinstance(Q, int) and len(values) != Q:
                problems.append(f"threshold.values 个数 {len(values)} 与 Q={Q} 不一致")
        elif policy == 'bound_fraction':
            fraction = threshold.get('fraction', 0.9)
            if not isinstance(fraction, (int, float)) or not 0 < fraction < 1:
                problems.append(f"threshold.fraction 必须在 (0, 1) 内: {fraction!r}")
        elif configuration != 'simo':
            problems.append("subrate 策略仅适用于 simo 配置")
        else:
            search_max = threshold.get('search_max', 1.0)
            if not isinstance(search_max, (int, float)) or not search_max > 0.3:
                problems.append(f"threshold.search_max 必须大于 0.3: {search_max!r}")

    expect = raw.get('expect', 'success')
    if expect not in EXPECTATIONS:
        problems.append(f"expect 必须为 {EXPECTATIONS} 之一: {expect!r}")

    grid_density = raw.get('grid_density', ENCODER_GRID_DENSITY)
    if not isinstance(grid_density, int) or grid_density < 100:
        problems.append(f"grid_density 必须为不小于100的整数: {grid_density!r}")

    tolerance = raw.get('tolerance', DEFAULT_TOLERANCE)
    if not isinstance(tolerance, (int, float)) or not tolerance > 0:
        problems.append(f"tolerance 必须为正数: {tolerance!r}")

    unknown = set(raw) - {'name', 'configuration', 'Q', 'seed', 'signal', 'signals', 'kernel',
                          'threshold', 'expect', 'grid_density', 'tolerance', 'description'}
    if unknown:
        problems.append(f"未知配置项: {sorted(unknown)}")

    if problems:
        raise ConfigError("场景配置无效:\n  - " + "\n  - ".join(problems))

    return ScenarioConfig(name=name, configuration=configuration, Q=Q, seed=seed,
                          signal=copy.deepcopy(signal), signals=copy.deepcopy(signals),
                          kernel=dict(kernel), threshold=dict(threshold), expect=expect,
                          grid_density=grid_density, tolerance=float(tolerance),
                          description=str(raw.get('description', '')))


def load_config(path) -> ScenarioConfig:
    """读取JSON场景配置"""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"配置文件不存在: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"配置文件不是合法JSON: {path}: {exc}") from exc
    return validate_config(raw)


# ---------------------------------------------------------------------------
# 内置场景
# ---------------------------------------------------------------------------

def _random_signal(kind: str, K: int = 5, **extra) -> Dict:
    return {'random': {'kind': kind, 'K': K, **extra}}


_SPLINE_RANDOM = dict(amplitude='uniform', min_gap=0.02)

BUILTIN_SCENARIOS: Dict[str, Dict] = {
    'uniform_diracs': {
        'name': 'uniform_diracs',
        'description': '5个等间距单位冲激, SMS r=0, C=1/11',
        'configuration': 'single', 'Q': 1, 'seed': 0,
        'signal': {'kind': 'dirac', 'K': 5, 'T': 1.0, 'a': [1.0] * 5, 'tau': UNIFORM_DIRAC_TAU},
        'kernel': {'family': 'sms', 'r': 0, 'K': 5, 'T': 1.0},
        'threshold': {'policy': 'explicit', 'values': [1 / 11]},
        'tolerance': 1e-9,
    },
    'bspline_pulses': {
        'name': 'bspline_pulses',
        'description': '三次B样条脉冲流, C=0.015',
        'configuration': 'single', 'Q': 1, 'seed': 0,
        'signal': {'kind': 'pulse', 'K': 5, 'T': 1.0, 'a': PULSE_STREAM_A, 'tau': PULSE_STREAM_TAU,
                   'pulse': {'kind': 'bspline', 'order': 3, 'scale': 0.1}},
        'kernel': {'family': 'sms', 'r': 0, 'K': 5, 'T': 1.0},
        'threshold': {'policy': 'explicit', 'values': [0.015]},
        'tolerance': 1e-9,
    },
    'piecewise_constant': {
        'name': 'piecewise_constant',
        'description': '随机分段常数信号 (D¹), 阈值取上界的0.9',
        'configuration': 'single', 'Q': 1, 'seed': 3,
        'signal': _random_signal('lspline', degree=0, **_SPLINE_RANDOM),
        'kernel': {'family': 'sms', 'r': 0, 'K': 5, 'T': 1.0},
        'threshold': {'policy': 'bound_fraction', 'fraction': 0.9},
    },
    'piecewise_linear': {
        'name': 'piecewise_linear',
        'description': '随机分段线性信号 (D²), 阈值取上界的0.9',
        'configuration': 'single', 'Q': 1, 'seed': 4,
        'signal': _random_signal('lspline', degree=1, **_SPLINE_RANDOM),
        'kernel': {'family': 'sms', 'r': 1, 'K': 5, 'T': 1.0},
        'threshold': {'policy': 'bound_fraction', 'fraction': 0.9},
    },
    'dirac_overthreshold': {
        'name': 'dirac_overthreshold',
        'description': '阈值远超上界, 预期事件数不足',
        'configuration': 'single', 'Q': 1, 'seed': 0,
        'signal': {'kind': 'dirac', 'K': 5, 'T': 1.0, 'a': [1.0] * 5, 'tau': UNIFORM_DIRAC_TAU},
        'kernel': {'family': 'sms', 'r': 0, 'K': 5, 'T': 1.0},
        'threshold': {'policy': 'explicit', 'values': [100.0]},
        'expect': 'insufficient_events',
    },
}

_MULTICHANNEL_SIGNALS = {
    'dirac': _random_signal('dirac', amplitude='uniform', min_gap=0.02),
    'pulse': _random_signal('pulse', amplitude='uniform', min_gap=0.02,
                            pulse={'kind': 'bspline', 'order': 3, 'scale': 0.1}),
    'd1': _random_signal('lspline', degree=0, **_SPLINE_RANDOM),
    'd2': _random_signal('lspline', degree=1, **_SPLINE_RANDOM),
}

for _offset, (_label, _signal) in enumerate(_MULTICHANNEL_SIGNALS.items()):
    BUILTIN_SCENARIOS[f'simo_subrate_{_label}'] = {
        'name': f'simo_subrate_{_label}',
        'description': f'SIMO, Q=2, 每通道事件数低于 2K+1 ({_label})',
        'configuration': 'simo', 'Q': 2, 'seed': 70 + _offset,
        'signal': copy.deepcopy(_signal),
        'kernel': {'family': 'sms', 'r': 0, 'K': 5, 'T': 1.0},
        'threshold': {'policy': 'subrate', 'search_max': 4.0},
    }
    mimo_signal = copy.deepcopy(_signal)
    mimo_signal['random'].update(amplitude='normal', min_amplitude=0.1)
    BUILTIN_SCENARIOS[f'mimo_shared_{_label}'] = {
        'name': f'mimo_shared_{_label}',
        'description': f'MIMO, Q=2, 共同支撑 ({_label})',
        'configuration': 'mimo', 'Q': 2, 'seed': 80 + _offset,
        'signal': mimo_signal,
        'kernel': {'family': 'sms', 'r': 0, 'K': 5, 'T': 1.0},
        'threshold': {'policy': 'bound_fraction', 'fraction': 0.9},
    }


# 别名 -> 内置场景名
SCENARIO_ALIASES: Dict[str, str] = {
    'fig5a': 'uniform_diracs',
    'fig5b': 'bspline_pulses',
    **{f'fig7_{_label}': f'simo_subrate_{_label}' for _label in _MULTICHANNEL_SIGNALS},
    **{f'fig8_{_label}': f'mimo_shared_{_label}' for _label in _MULTICHANNEL_SIGNALS},
}


def builtin_scenario(name: str) -> ScenarioConfig:
    """按名称 (或别名) 取内置场景"""
    name = SCENARIO_ALIASES.get(name, name)
    if name not in BUILTIN_SCENARIOS:
        raise ConfigError(f"未知的内置场景: {name} "
                          f"(可选: {sorted(BUILTIN_SCENARIOS)}, 别名: {sorted(SCENARIO_ALIASES)})")
    return validate_config(copy.deepcopy(BUILTIN_SCENARIOS[name]))


def resolve_scenario(target: str) -> ScenarioConfig:
    """命令行参数既可以是内置场景名或别名，也可以是配置文件路径"""
    if target in BUILTIN_SCENARIOS or target in SCENARIO_ALIASES:
        return builtin_scenario(target)
    return load_config(target)
