#!/usr/bin/env python3
"""
多通道神经形态采样的联合重构

- SIMO: 同一信号送入Q个阈值互不相同的编码器，将各通道的 G⁽ⁱ⁾、f⁽ⁱ⁾ 堆叠后
  联合求解同一组傅里叶系数，单通道事件数可低于 2K+1，只要总数不少于 2K+1
- MIMO: Q个共享支撑的信号各自编码，每通道独立求 x̂⁽ⁱ⁾，
  再以块零化 (堆叠各通道的Toeplitz块) 估计共同的零化滤波器
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from fri_errors import (DuplicateThresholds, InsufficientTotalEvents, ModelOrderMismatch,
                        NoCommonSupport, NumericalResidueError)
from fri_reconstructor import (ModelSpec, ReconstructionReport, is_ill_conditioned, reconstruct_from_samples,
                               solve_fourier)
from neuromorphic_encoder import ENCODER_GRID_DENSITY, EventStream, encode, max_threshold_for, t_transform
from prony import (NULLSPACE_GAP, ROOT_MODULUS_TOLERANCE, AnnihilatingFilter, annihilating_filter,
                   annihilation_matrix, annihilation_residual, fit_parameters, nullspace_filter,
                   roots_from_taps, supports_from_roots)
from signal_model import FourierVector, SignalKind

logger = logging.getLogger(__name__)

DEDUP_RESOLUTION = 1e-12
COMMON_SUPPORT_TOLERANCE = 1e-6


class ChannelConfig(str, Enum):
    SIMO = 'simo'
    MIMO = 'mimo'


@dataclass(frozen=True, eq=False)
class ChannelBank:
    """
    Q个编码通道

    Attributes:
        config: SIMO 或 MIMO
        streams: 各通道事件流 (阈值 C⁽ⁱ⁾ 取自事件流)
    """
    config: ChannelConfig
    streams: Tuple[EventStream, ...]

    def __post_init__(self):
        config = ChannelConfig(self.config)
        streams = tuple(self.streams)
        if len(streams) < 1:
            raise ValueError("通道数Q必须 >= 1")
        if config == ChannelConfig.SIMO:
            thresholds = [s.C for s in streams]
            if len(set(thresholds)) != len(thresholds):
                raise DuplicateThresholds(f"SIMO各通道阈值必须两两不同: {thresholds}")
        object.__setattr__(self, 'config', config)
        object.__setattr__(self, 'streams', streams)

    @property
    def Q(self) -> int:
        return len(self.streams)

    @property
    def thresholds(self) -> List[float]:
        return [s.C for s in self.streams]

    @property
    def event_counts(self) -> List[int]:
        return [len(s) for s in self.streams]


# ---------------------------------------------------------------------------
# SIMO
# ---------------------------------------------------------------------------

def stack_event_samples(streams: Sequence[EventStream],
                        resolution: float = DEDUP_RESOLUTION) -> Tuple[np.ndarray, np.ndarray]:
    """
    堆叠各通道的 (事件时刻, 幅度样本)

    稳定排序后，相距不超过 resolution 的重复触发时刻只保留第一个。
    """
    pairs = [t_transform(stream) for stream in streams]
    times = np.concatenate([p[0] for p in pairs])
    samples = np.concatenate([p[1] for p in pairs])
    order = np.argsort(times, kind='stable')
    times, samples = times[order], samples[order]
    if times.size > 1:
        keep = np.concatenate([[True], np.diff(times) > resolution])
        if not np.all(keep):
            logger.debug(f"去除 {int(np.sum(~keep))} 个跨通道重复触发时刻")
        times, samples = times[keep], samples[keep]
    return times, samples


def simo_reconstruct(bank: ChannelBank, model: ModelSpec, T: float = 1.0) -> ReconstructionReport:
    """
    SIMO联合重构: 堆叠 f⁽ⁱ⁾ = G⁽ⁱ⁾ x̂ 求同一 x̂，再走Prony与回归

    Raises:
        InsufficientTotalEvents: 堆叠后的行数 < 2K+1
    """
    if bank.config != ChannelConfig.SIMO:
        raise ValueError(f"需要SIMO通道组, 实际为 {bank.config.value}")
    times, samples = stack_event_samples(bank.streams)
    required = 2 * model.K + 1
    if times.size < required:
        raise InsufficientTotalEvents(required, int(times.size))

    if bank.Q == 1:
        return reconstruct_from_samples(times, samples, model, T, channel=bank.streams[0].channel)

    report = reconstruct_from_samples(times, samples, model, T, channel_events=bank.event_counts)
    logger.info(f"SIMO联合重构: 各通道事件数 {bank.event_counts}, 总计 {report.L}, "
                f"cond(G)={report.cond_G:.3e}")
    return report


def simo_threshold_bounds(f: Callable, Q: int, K: int, T: float = 1.0, t0: float = 0.0) -> Tuple[float, float]:
    """SIMO阈值所在的开区间 (0, Q (f_max - f_min)/(2K+1))"""
    if int(Q) < 1:
        raise ValueError(f"通道数Q必须为正整数: {Q}")
    return 0.0, int(Q) * max_threshold_for(f, 2 * K + 1, T=T, t0=t0)


def simo_thresholds(upper: float, Q: int, start: float = 0.9, step: float = 0.05) -> List[float]:
    """两两不同的阈值 C⁽ⁱ⁾ = upper (start - step i), i = 0..Q-1"""
    Q = int(Q)
    if Q < 1:
        raise ValueError(f"通道数Q必须为正整数: {Q}")
    if not 0 < start <= 1.0:
        raise ValueError(f"起始比例必须在 (0, 1] 内: {start}")
    if Q > 1 and (step <= 0 or start - step * (Q - 1) <= 0):
        raise ValueError(f"阈值规则 start={start}, step={step} 无法给出 {Q} 个正的不同阈值")
    return [upper * (start - step * i) for i in range(Q)]


def subrate_thresholds(f: Callable, Q: int, K: int, T: float = 1.0, t0: float = 0.0,
                       search_max: float = 1.0, fractions: Optional[Sequence[float]] = None,
                       grid_density: int = ENCODER_GRID_DENSITY) -> Tuple[List[float], List[int]]:
    """
    搜索Q个不同阈值，使每个通道单独的事件数 < 2K+1 而总数 >= 2K+1

    阈值以SIMO上界 Q(f_max - f_min)/(2K+1) 的比例表示，从 search_max 向下扫描，
    保留事件数不足 2K+1 的候选，取事件数最多的Q个。振荡剧烈的信号在上界以内
    每通道事件数往往已达 2K+1，此时需要 search_max > 1 (总数条件仍由实际编码核验)。

    Returns:
        (阈值列表, 对应的事件数)

    Raises:
        InsufficientTotalEvents: 找不到满足条件的组合
    """
    _, upper = simo_threshold_bounds(f, Q, K, T=T, t0=t0)
    if fractions is None:
        fractions = np.geomspace(0.99 * search_max, 0.30, 120)
    required = 2 * K + 1

    candidates = []
    for fraction in fractions:
        count = len(encode(f, upper * fraction, t0=t0, T=T, grid_density=grid_density))
        if count >= required:
            break
        candidates.append((count, fraction))

    candidates.sort(key=lambda item: (item[0], item[1]), reverse=True)
    chosen = candidates[:Q]
    total = sum(count for count, _ in chosen)
    if len(chosen) < Q or total < required:
        raise InsufficientTotalEvents(required, total)
    logger.info(f"亚速率阈值: 比例 {[round(fr, 4) for _, fr in chosen]}, 事件数 {[c for c, _ in chosen]}")
    return [upper * fraction for _, fraction in chosen], [count for count, _ in chosen]


# ---------------------------------------------------------------------------
# MIMO
# ---------------------------------------------------------------------------

def block_residuals(taps: np.ndarray, fouriers: Sequence[FourierVector]) -> List[float]:
    """联合滤波器在各通道上的零化残差 max|(h * x̂⁽ⁱ⁾)_l|"""
    return [annihilation_residual(taps, x_hat) for x_hat in fouriers]


def _individually_annihilable(fouriers: Sequence[FourierVector], K: int, gap_ratio: float) -> bool:
    try:
        for x_hat in fouriers:
            annihilating_filter(x_hat, K, gap_ratio)
    except (ModelOrderMismatch, NumericalResidueError):
        return False
    return True


def mimo_block_annihilate(fouriers: Sequence[FourierVector], K: int,
                          gap_ratio: float = NULLSPACE_GAP) -> AnnihilatingFilter:
    """
    块零化: 堆叠各通道 (按范数归一化的) Toeplitz块，求共同的零化滤波器

    Raises:
        ModelOrderMismatch: 堆叠矩阵的零空间不为一维
        NoCommonSupport: 各通道单独可零化，但联合滤波器无法同时零化
    """
    if len(fouriers) < 1:
        raise ValueError("至少需要一个通道的傅里叶系数")
    blocks = [annihilation_matrix(x_hat, K) / max(x_hat.norm(), 1e-300) for x_hat in fouriers]
    stacked = np.vstack(blocks)

    try:
        h, s = nullspace_filter(stacked, K, gap_ratio)
    except ModelOrderMismatch as exc:
        if len(fouriers) > 1 and _individually_annihilable(fouriers, K, gap_ratio):
            raise NoCommonSupport("各通道可分别零化但不存在共同零化滤波器，支撑不一致") from exc
        raise

    residuals = block_residuals(h, fouriers)
    relative = [r / max(x_hat.norm(), 1e-300) for r, x_hat in zip(residuals, fouriers)]
    if max(relative) > COMMON_SUPPORT_TOLERANCE and _individually_annihilable(fouriers, K, gap_ratio):
        raise NoCommonSupport(f"联合零化残差过大 {max(relative):.3e}，各通道支撑不一致")
    if max(relative) > 1e-8:
        logger.warning(f"块零化残差偏大: {[f'{r:.3e}' for r in relative]}")

    roots = roots_from_taps(h)
    modulus_error = float(np.max(np.abs(np.abs(roots) - 1.0)))
    if modulus_error > ROOT_MODULUS_TOLERANCE:
        raise NumericalResidueError(f"块零化滤波器的根偏离单位圆 {modulus_error:.3e}")
    return AnnihilatingFilter(taps=h, roots=roots, singular_values=s, residual=float(max(residuals)))


def mimo_threshold_bounds(signals: Sequence[Callable], K: int, T: float = 1.0, t0: float = 0.0) -> List[float]:
    """每通道阈值上界 (f⁽ⁱ⁾_max - f⁽ⁱ⁾_min)/(2K+1)"""
    return [max_threshold_for(f, 2 * K + 1, T=T, t0=t0) for f in signals]


def mimo_reconstruct(bank: ChannelBank, model: ModelSpec, T: float = 1.0) -> List[ReconstructionReport]:
    """
    MIMO重构: 各通道求 x̂⁽ⁱ⁾ -> 块零化求共同支撑 -> 各通道回归系数

    Raises:
        InsufficientEvents: 某通道 L⁽ⁱ⁾ < 2K+1 (异常中给出通道号)
    """
    if bank.config != ChannelConfig.MIMO:
        raise ValueError(f"需要MIMO通道组, 实际为 {bank.config.value}")

    fits = []
    for stream in bank.streams:
        times, samples = t_transform(stream)
        fits.append(solve_fourier(times, samples, model.K, T, channel=stream.channel))

    dirac_domain = [model.dirac_domain(x_hat) for x_hat, _ in fits]
    filt = mimo_block_annihilate(dirac_domain, model.K)
    fouriers = [x_hat for x_hat, _ in fits]
    params = fit_parameters(fouriers, supports_from_roots(filt.roots, T),
                            lambda l, w=fouriers[0].omega0: model.weights(l, w), drop_dc=model.drop_dc)
    tau = params.tau
    error_estimate = float(np.linalg.norm([fit.fourier_error for _, fit in fits])) * params.error_gain
    logger.info(f"MIMO块零化: 共同支撑 {np.array2string(tau, precision=6)}")

    reports = []
    for i, (stream, (x_hat, fit), y_hat) in enumerate(zip(bank.streams, fits, dirac_domain)):
        dc = float(x_hat.at(0).real) if model.kind == SignalKind.LSPLINE else None
        reports.append(ReconstructionReport(
            tau=tau, a=params.a[i], L=len(stream), cond_G=fit.condition_number, residual=fit.residual,
            annihilation_residual=annihilation_residual(filt.taps, y_hat),
            ill_conditioned=is_ill_conditioned(fit.condition_number, params, error_estimate, stream.channel),
            channel=stream.channel, dc=dc, gap_ratio=filt.gap_ratio,
            cond_regression=params.cond_regression, error_estimate=error_estimate))
    return reports
