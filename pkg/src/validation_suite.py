#!/usr/bin/env python3
"""
性质验证套件

由 verify 命令调用，对各模块做随机化的性质检验，每项返回 PropertyResult:
- 事件数下界: C < (f_max - f_min)/L 时事件数 >= L
- 事件矩阵可逆性: L = 2K+1 个互异时刻时 G 可逆
- 傅里叶系数与数值积分一致
- 编码事件时刻与 10^6 点暴力扫描一致
- 采样核的混叠消除、B样条单位分解
- 端到端恒等: 随机信号编码后完美重构
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import quad

from fri_errors import NeuroFriError
from fri_reconstructor import ModelSpec, build_G, reconstruct
from neuromorphic_encoder import ENCODER_GRID_DENSITY, encode, max_threshold_for
from signal_model import (FilteredSignal, FriSignal, SignalKind, evaluate_signal, fourier_coefficients,
                          random_fri_signal)
from sms_kernels import SamplingKernel, bspline_eval, check_alias_cancellation

logger = logging.getLogger(__name__)

BRUTE_FORCE_GRID = 1_000_000


@dataclass
class PropertyResult:
    """单项性质检验结果"""
    name: str
    passed: bool
    trials: int
    failures: int
    detail: str = ''

    def to_dict(self) -> Dict:
        return asdict(self)


def _spawn(seed: int, n: int) -> List[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


# ---------------------------------------------------------------------------
# 数值积分与暴力扫描 (独立于被测实现)
# ---------------------------------------------------------------------------

def quadrature_fourier(signal: FriSignal, l: int, kernel: Optional[SamplingKernel] = None) -> complex:
    """
    以数值积分计算 (1/T)∫₀ᵀ s(t) e^{-jlω₀t} dt

    冲激流无法逐点积分，给出 kernel 时对滤波信号 f 积分 (|l| <= K 时等于 x̂_l)。
    """
    T = signal.T
    w = l * signal.omega0
    if kernel is not None:
        func = FilteredSignal(signal, kernel)
        points = None
    else:
        func = lambda t: evaluate_signal(signal, t)
        half = signal.pulse.half_support if signal.kind == SignalKind.PULSE else 0.0
        points = np.unique(np.mod(np.concatenate([signal.tau - half, signal.tau, signal.tau + half]), T))
        points = points[(points > 0) & (points < T)]

    options = dict(limit=500, epsabs=1e-13, epsrel=1e-12)
    if points is not None and points.size:
        options['points'] = points
    re, _ = quad(lambda t: float(func(t)) * np.cos(w * t), 0.0, T, **options)
    im, _ = quad(lambda t: -float(func(t)) * np.sin(w * t), 0.0, T, **options)
    return complex(re, im) / T


def brute_force_events(f: Callable, C: float, T: float = 1.0, t0: float = 0.0,
                       grid_density: int = BRUTE_FORCE_GRID, tol: float = 1e-13) -> Tuple[np.ndarray, np.ndarray]:
    """稠密网格扫描 + 二分法求穿越时刻"""
    grid = t0 + T * np.arange(grid_density + 1) / grid_density
    values = np.concatenate([np.asarray(f(chunk), dtype=float) for chunk in np.array_split(grid, 50)])
    reference, last = values[0], t0
    times, polarities = [], []
    i = 1
    while i <= grid_density:
        hits = np.flatnonzero(np.abs(values[i:] - reference) >= C)
        if hits.size == 0:
            break
        i += int(hits[0])
        p = 1 if values[i] > reference else -1
        target = reference + p * C
        lo, hi = max(grid[i - 1], last), grid[i]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if p * (float(f(mid)) - target) >= 0:
                hi = mid
            else:
                lo = mid
        if hi >= t0 + T:
            break
        times.append(hi)
        polarities.append(p)
        reference, last = target, hi
    return np.array(times), np.array(polarities)


# ---------------------------------------------------------------------------
# 性质检验
# ---------------------------------------------------------------------------

def _random_filtered(rng: np.random.Generator, K: int, kind: SignalKind = SignalKind.DIRAC,
                     degree: Optional[int] = None) -> Tuple[FriSignal, FilteredSignal]:
    signal = random_fri_signal(rng, kind, K, min_gap=1 / 50, amplitude='uniform', degree=degree)
    return signal, FilteredSignal(signal, SamplingKernel(r=0, K=K))


def check_event_count_bound(trials: int = 100, seed: int = 1,
                            grid_density: int = ENCODER_GRID_DENSITY, n_jobs: int = 1) -> PropertyResult:
    """随机 (信号, L) 对，C 取上界的随机比例，事件数应 >= L"""
    def trial(rng):
        K = int(rng.integers(1, 9))
        _, f = _random_filtered(rng, K)
        L = int(rng.integers(1, 4 * K + 2))
        C = rng.uniform(0.5, 0.999) * max_threshold_for(f, L)
        return len(encode(f, C, grid_density=grid_density)) >= L

    outcomes = Parallel(n_jobs=n_jobs)(delayed(trial)(rng) for rng in _spawn(seed, trials))
    failures = trials - int(sum(outcomes))
    return PropertyResult('event_count_bound', failures == 0, trials, failures)


def check_event_matrix_invertible(trials: int = 100, seed: int = 2) -> PropertyResult:
    """L = 2K+1 个随机递增时刻，G 的相对最小奇异值 > 1e-10"""
    failures, worst = 0, np.inf
    for rng in _spawn(seed, trials):
        K = int(rng.integers(1, 9))
        times = np.sort(rng.uniform(0.0, 1.0, 2 * K + 1))
        if np.any(np.diff(times) <= 0):
            continue
        ratio = build_G(times, K).relative_min_singular_value
        worst = min(worst, ratio)
        failures += int(not ratio > 1e-10)
    return PropertyResult('event_matrix_invertible', failures == 0, trials, failures,
                          f"最小相对奇异值 {worst:.3e}")


def check_fourier_quadrature(trials: int = 20, seed: int = 3, tol: float = 1e-8) -> PropertyResult:
    """解析傅里叶系数与数值积分一致"""
    kinds = [SignalKind.DIRAC, SignalKind.PULSE, SignalKind.LSPLINE]
    failures, worst = 0, 0.0
    for i, rng in enumerate(_spawn(seed, trials)):
        kind = kinds[i % len(kinds)]
        K = int(rng.integers(2, 7))
        signal = random_fri_signal(rng, kind, K, min_gap=1 / 50, amplitude='uniform')
        x_hat = fourier_coefficients(signal, K)
        kernel = SamplingKernel(r=0, K=K) if kind == SignalKind.DIRAC else None
        ls = [l for l in range(-K, K + 1) if not (kind == SignalKind.LSPLINE and l == 0)]
        error = max(abs(x_hat.at(l) - quadrature_fourier(signal, l, kernel)) for l in ls)
        worst = max(worst, error)
        failures += int(error > tol)
    return PropertyResult('fourier_quadrature', failures == 0, trials, failures, f"最大偏差 {worst:.3e}")


def check_encoder_brute_force(trials: int = 10, seed: int = 4, tol: float = 1e-9,
                              grid_density: int = ENCODER_GRID_DENSITY) -> PropertyResult:
    """编码事件与 10^6 点暴力扫描一致"""
    failures, worst = 0, 0.0
    for rng in _spawn(seed, trials):
        K = int(rng.integers(1, 7))
        _, f = _random_filtered(rng, K)
        C = 0.9 * max_threshold_for(f, 2 * K + 1)
        stream = encode(f, C, grid_density=grid_density)
        times, polarities = brute_force_events(f, C)
        if times.size != len(stream) or not np.array_equal(polarities, stream.polarities):
            failures += 1
            continue
        error = float(np.max(np.abs(times - stream.times))) if times.size else 0.0
        worst = max(worst, error)
        failures += int(error > tol)
    return PropertyResult('encoder_brute_force', failures == 0, trials, failures, f"最大时刻偏差 {worst:.3e}")


def check_kernels(max_K: int = 8) -> PropertyResult:
    """SMS核满足混叠消除; K不匹配与未调制B样条核不满足; B样条单位分解"""
    failures, trials = 0, 0
    for K in range(1, max_K + 1):
        for r in range(4):
            trials += 1
            failures += int(not check_alias_cancellation(SamplingKernel(r=r, K=K), K)[0])
    trials += 2
    failures += int(check_alias_cancellation(SamplingKernel(r=0, K=3), 5)[0])
    failures += int(check_alias_cancellation(SamplingKernel(r=0, K=3, family='bspline'), 3)[0])

    t = np.random.default_rng(5).uniform(-1.0, 1.0, 50)
    for r in range(9):
        trials += 1
        total = sum(bspline_eval(r, t - n) for n in range(-6, 7))
        failures += int(np.max(np.abs(total - 1.0)) > 1e-9)
    return PropertyResult('kernel_properties', failures == 0, trials, failures)


def _identity_trial(rng: np.random.Generator, kind: SignalKind, K: int, degree: Optional[int],
                    grid_density: int) -> Tuple[float, bool]:
    signal, f = _random_filtered(rng, K, kind, degree)
    C = 0.9 * max_threshold_for(f, 2 * K + 1)
    try:
        report = reconstruct(encode(f, C, grid_density=grid_density, K=K), ModelSpec.from_signal(signal))
    except NeuroFriError as exc:
        logger.debug(f"重构失败 (已报告): {exc}")
        return np.inf, True
    return report.evaluate_against(signal).max_error, report.ill_conditioned


def check_end_to_end(kind: SignalKind, trials: int = 100, seed: int = 6, K: Optional[int] = None,
                     degree: Optional[int] = None, tol: float = 1e-8, min_pass: float = 0.99,
                     grid_density: int = ENCODER_GRID_DENSITY, n_jobs: int = 1) -> PropertyResult:
    """
    随机信号 C = 0.9 (f_max - f_min)/(2K+1) 编码后重构，误差 < tol 的比例不低于 min_pass，
    且每一次失败都必须伴随病态报告
    """
    kind = SignalKind(kind)
    rngs = _spawn(seed, trials)
    orders = [K if K is not None else int(rng.integers(2 if kind == SignalKind.LSPLINE else 1, 9))
              for rng in rngs]
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_identity_trial)(rng, kind, k, degree, grid_density) for rng, k in zip(rngs, orders))

    errors = np.array([err for err, _ in outcomes])
    failed = errors >= tol
    unexplained = int(np.sum(failed & ~np.array([ill for _, ill in outcomes])))
    passed = (np.mean(~failed) >= min_pass) and unexplained == 0
    finite = errors[np.isfinite(errors)]
    detail = f"失败 {int(failed.sum())} 次, 未报告病态的失败 {unexplained} 次"
    if finite.size:
        detail += f", 中位误差 {np.median(finite):.3e}"
    name = f"end_to_end_{kind.value}" + (f"_degree{degree}" if degree is not None else '')
    return PropertyResult(name, bool(passed), trials, int(failed.sum()), detail)


def run_property_suites(trials: int = 100, grid_density: int = ENCODER_GRID_DENSITY,
                        n_jobs: int = 1) -> List[PropertyResult]:
    """运行全部性质检验"""
    small = max(1, trials // 5)
    results = [
        check_event_count_bound(trials, grid_density=grid_density, n_jobs=n_jobs),
        check_event_matrix_invertible(trials),
        check_fourier_quadrature(small),
        check_encoder_brute_force(max(1, trials // 10), grid_density=grid_density),
        check_kernels(),
        check_end_to_end(SignalKind.DIRAC, trials, grid_density=grid_density, n_jobs=n_jobs),
        check_end_to_end(SignalKind.LSPLINE, trials, seed=7, K=5, degree=0,
                         grid_density=grid_density, n_jobs=n_jobs),
        check_end_to_end(SignalKind.LSPLINE, trials, seed=8, K=5, degree=1,
                         grid_density=grid_density, n_jobs=n_jobs),
    ]
    for result in results:
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(level, f"性质 {result.name}: {'通过' if result.passed else '失败'} "
                          f"({result.failures}/{result.trials} 失败) {result.detail}")
    return results
