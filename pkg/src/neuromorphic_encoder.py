#!/usr/bin/env python3
"""
神经形态编码器 (时间对比阈值编码)

事件定义:
    t_m = min{ t > t_{m-1} : |f(t) - f(t_{m-1})| = C },   p_m = sgn(f(t_m) - f(t_{m-1}))

实现方式: 在每周期 10^5 点的均匀网格上扫描运行差分以括住穿越点，
再用 Brent 求根精化。恰好触及 ±C 的情形也计为事件; t = t₀ + T 处的事件不计入
(周期化后与 t₀ 等同)。初始值 f(t₀) 作为解码端边信息随事件流保存。
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import brentq, minimize_scalar

from fri_errors import DegenerateSignal, TooFewEvents

logger = logging.getLogger(__name__)

ENCODER_GRID_DENSITY = 100_000
EXTREMA_GRID_DENSITY = 10_000
ROOT_XTOL = 1e-14
# 相对于 max|f| 的舍入容差，用于判定恰好触及
TOUCH_TOLERANCE = 1e-13


@dataclass(frozen=True, eq=False)
class EventStream:
    """
    单通道事件流

    Attributes:
        times: 事件时刻 t_1 < t_2 < ... (秒)
        polarities: 事件极性 ±1
        C: 时间对比阈值
        t0: 参考时刻
        f0: 初始值 f(t₀)
        channel: 通道号
        T: 观测区间长度 (周期)
        K: 模型阶数 (可选的边信息)
    """
    times: np.ndarray
    polarities: np.ndarray
    C: float
    t0: float = 0.0
    f0: float = 0.0
    channel: int = 0
    T: float = 1.0
    K: Optional[int] = None

    def __post_init__(self):
        times = np.array(self.times, dtype=float).ravel()
        polarities = np.array(self.polarities, dtype=np.int8).ravel()
        if times.size != polarities.size:
            raise ValueError(f"事件时刻与极性个数不一致: {times.size} vs {polarities.size}")
        if not self.C > 0:
            raise ValueError(f"时间对比阈值必须为正: {self.C}")
        if times.size and (times[0] <= self.t0 or np.any(np.diff(times) <= 0)):
            raise ValueError("事件时刻必须严格递增且晚于参考时刻 t0")
        if not np.all(np.abs(polarities) == 1):
            raise ValueError("事件极性只能为 ±1")
        if int(self.channel) < 0:
            raise ValueError(f"通道号必须为非负整数: {self.channel}")
        times.setflags(write=False)
        polarities.setflags(write=False)
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'polarities', polarities)
        object.__setattr__(self, 'C', float(self.C))
        object.__setattr__(self, 't0', float(self.t0))
        object.__setattr__(self, 'f0', float(self.f0))
        object.__setattr__(self, 'channel', int(self.channel))
        object.__setattr__(self, 'T', float(self.T))
        object.__setattr__(self, 'K', None if self.K is None else int(self.K))

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def L(self) -> int:
        return len(self)

    @property
    def events(self) -> List[Tuple[float, int]]:
        return [(float(t), int(p)) for t, p in zip(self.times, self.polarities)]

    def identical_to(self, other: 'EventStream') -> bool:
        """逐位比较两个事件流"""
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.polarities, other.polarities)
                and (self.C, self.t0, self.f0, self.channel, self.T, self.K)
                == (other.C, other.t0, other.f0, other.channel, other.T, other.K))


def _refine_crossing(f: Callable, target: float, a: float, b: float, f_a: float, f_b: float,
                     xtol: float) -> float:
    """
    在 [a, b] 内求 f(s) = target

    端点函数值取自扫描网格 (两端符号相反，或 f_b = 0)，不再对端点做标量求值。
    """
    if f_b == 0.0 or b <= a:
        return b

    def g(s):
        if s == a:
            return f_a
        if s == b:
            return f_b
        return float(f(s)) - target

    return brentq(g, a, b, xtol=xtol)


def encode(f: Callable, C: float, t0: float = 0.0, T: float = 1.0,
           grid_density: int = ENCODER_GRID_DENSITY, channel: int = 0,
           K: Optional[int] = None, xtol: float = ROOT_XTOL) -> EventStream:
    """
    对连续信号进行神经形态编码

    Args:
        f: 向量化可调用对象，给出 [t0, t0+T] 上的连续信号
        C: 时间对比阈值
        t0: 参考时刻
        T: 观测区间长度
        grid_density: 每周期扫描网格点数
        channel: 通道号
        K: 写入事件流的模型阶数边信息
        xtol: 求根的时间容差

    Returns:
        EventStream (可以为空)
    """
    if not C > 0:
        raise ValueError(f"时间对比阈值必须为正: {C}")
    n = int(grid_density)
    if n < 2:
        raise ValueError(f"网格点数过少: {grid_density}")

    grid = t0 + T * np.arange(n + 1) / n
    values = np.asarray(f(grid), dtype=float)
    f0 = float(values[0])
    t_end = t0 + T
    touch = TOUCH_TOLERANCE * max(1.0, float(np.max(np.abs(values))))

    times: List[float] = []
    polarities: List[int] = []
    reference = f0
    last_time = t0
    start = 1
    while start <= n:
        hits = np.flatnonzero(np.abs(values[start:] - reference) >= C)
        if hits.size == 0:
            break
        j = start + int(hits[0])
        polarity = 1 if values[j] > reference else -1
        target = reference + polarity * C

        # 周期末端恰好触及 ±C: 与 t₀ 等同，不计入
        if j == n and abs(values[j] - target) <= touch:
            break
        if grid[j - 1] > last_time:
            left, f_left = grid[j - 1], values[j - 1] - target
        else:
            left, f_left = last_time, reference - target
        t_m = _refine_crossing(f, target, left, grid[j], f_left, values[j] - target, xtol)
        if t_m >= t_end:
            break

        times.append(t_m)
        polarities.append(polarity)
        reference = target
        last_time = t_m
        start = j

    logger.debug(f"通道 {channel}: C={C:.6g}, 生成 {len(times)} 个事件")
    return EventStream(np.array(times), np.array(polarities, dtype=np.int8), C,
                       t0=t0, f0=f0, channel=channel, T=T, K=K)


def encode_channels(signals: Union[Callable, Sequence[Callable]], thresholds: Sequence[float],
                    t0: float = 0.0, T: float = 1.0, grid_density: int = ENCODER_GRID_DENSITY,
                    K: Optional[int] = None, n_jobs: int = 1) -> List[EventStream]:
    """
    多通道编码，通道间相互独立，可并行

    Args:
        signals: 单个信号 (SIMO，所有通道共享) 或每通道一个信号 (MIMO)
        thresholds: 每通道阈值
    """
    if callable(signals):
        signals = [signals] * len(thresholds)
    if len(signals) != len(thresholds):
        raise ValueError(f"信号个数 {len(signals)} 与阈值个数 {len(thresholds)} 不一致")
    return Parallel(n_jobs=n_jobs)(
        delayed(encode)(f, C, t0=t0, T=T, grid_density=grid_density, channel=i, K=K)
        for i, (f, C) in enumerate(zip(signals, thresholds))
    )


def t_transform(stream: EventStream) -> Tuple[np.ndarray, np.ndarray]:
    """
    t变换: 由事件恢复事件时刻的幅度样本

    f(t_m) = f(t₀) + C Σ_{i<=m} p_i

    Returns:
        (事件时刻, 幅度样本)
    """
    samples = stream.f0 + stream.C * np.cumsum(stream.polarities.astype(float))
    return stream.times.copy(), samples


def sampling_density(stream: EventStream) -> float:
    """相邻事件时刻 (以 t₀ 作为 t₁ 的前驱) 的最大间隔"""
    points = np.concatenate([[stream.t0], stream.times])
    if points.size < 2:
        raise TooFewEvents(f"至少需要2个时间点 (含 t0) 才能计算采样密度, 实际 {points.size}")
    return float(np.max(np.diff(points)))


def _refine_extremum(f: Callable, grid: np.ndarray, values: np.ndarray, sign: float,
                     xtol: float) -> float:
    """对网格上的极值做黄金分割精化，sign=+1 求最大值，-1 求最小值"""
    idx = int(np.argmax(sign * values))
    best = float(values[idx])
    if 0 < idx < grid.size - 1:
        try:
            result = minimize_scalar(lambda s: -sign * float(f(s)),
                                     bracket=(grid[idx - 1], grid[idx], grid[idx + 1]),
                                     method='golden', tol=xtol)
            candidate = -sign * float(result.fun)
            if sign * candidate > sign * best:
                best = candidate
        except ValueError as exc:
            logger.debug(f"极值精化失败，沿用网格值: {exc}")
    return best


def dynamic_range(f: Callable, T: float = 1.0, t0: float = 0.0,
                  grid_density: int = EXTREMA_GRID_DENSITY, xtol: float = 1e-10) -> Tuple[float, float]:
    """
    [t0, t0+T] 上的 (f_min, f_max)

    稠密网格扫描 (每周期10^4点) 后以黄金分割法精化。
    """
    n = int(grid_density)
    grid = t0 + T * np.arange(n + 1) / n
    values = np.asarray(f(grid), dtype=float)
    f_max = _refine_extremum(f, grid, values, 1.0, xtol)
    f_min = _refine_extremum(f, grid, values, -1.0, xtol)
    return f_min, f_max


def _checked_range(f: Callable, T: float, t0: float, grid_density: int) -> float:
    f_min, f_max = dynamic_range(f, T=T, t0=t0, grid_density=grid_density)
    spread = f_max - f_min
    if spread < 1e-12:
        raise DegenerateSignal(f"信号动态范围过小: f_max - f_min = {spread:.3e}")
    return spread


def max_threshold_for(f: Callable, L: int, T: float = 1.0, t0: float = 0.0,
                      grid_density: int = EXTREMA_GRID_DENSITY) -> float:
    """
    保证至少 L 个事件的阈值上界 (f_max - f_min)/L

    Raises:
        DegenerateSignal: 动态范围小于 1e-12
    """
    if int(L) < 1:
        raise ValueError(f"事件数L必须为正整数: {L}")
    return _checked_range(f, T, t0, grid_density) / int(L)


def critical_threshold(f: Callable, rate_of_innovation: float, T: float = 1.0, t0: float = 0.0,
                       grid_density: int = EXTREMA_GRID_DENSITY) -> float:
    """
    FRI意义下的临界阈值 C_f(T) = |f_max - f_min| / (ρ + 1)

    ρ = 2K 时与完美重构所需的阈值上界一致。
    """
    if not rate_of_innovation > 0:
        raise ValueError(f"新息率必须为正: {rate_of_innovation}")
    return _checked_range(f, T, t0, grid_density) / (rate_of_innovation + 1)
