#!/usr/bin/env python3
"""
单通道FRI信号的完美重构

事件 -> t变换幅度样本 -> 解 f = G x̂ 得傅里叶系数 -> Prony求支撑 -> 最小二乘求系数

G 为 L×(2K+1) 的事件时刻Vandermonde型矩阵，行为 [e^{-jKω₀t_m}, ..., 1, ..., e^{jKω₀t_m}]，
L >= 2K+1 且事件时刻互异时列满秩。所有L个事件均参与最小二乘求解 (正交分解, 不用正规方程)。
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import lstsq, svd

from fri_errors import DuplicateTimes, InsufficientEvents
from neuromorphic_encoder import EventStream, t_transform
from prony import (ILL_CONDITIONED, AnnihilatingFilter, ParameterFit, annihilating_filter,
                   annihilation_residual, fit_parameters, match_supports, supports_from_roots)
from signal_model import (FourierVector, FriSignal, Pulse, SignalKind, check_pulse_spectrum,
                          pulse_from_dict, spectral_weights)

logger = logging.getLogger(__name__)

FOURIER_RESIDUAL_TOLERANCE = 1e-8
# 幅度样本的相对精度 (事件时刻求根与累加的舍入)
SAMPLE_PRECISION = 1e-15
# 参数误差一阶估计的上限，超过即报告病态
ERROR_ESTIMATE_LIMIT = 1e-9


@dataclass(frozen=True)
class ModelSpec:
    """
    重构所需的模型描述 (K 作为先验输入，不做估计)

    Attributes:
        kind: 信号类型
        K: 模型阶数
        pulse: 脉冲流的脉冲
        degree: L样条次数
    """
    kind: SignalKind
    K: int
    pulse: Optional[Pulse] = None
    degree: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', SignalKind(self.kind))
        if int(self.K) < 1:
            raise ValueError(f"模型阶数K必须为正整数: {self.K}")
        object.__setattr__(self, 'K', int(self.K))
        if self.kind == SignalKind.PULSE and self.pulse is None:
            raise ValueError("脉冲流模型必须给出脉冲")
        if self.kind == SignalKind.LSPLINE and (self.degree is None or int(self.degree) < 0):
            raise ValueError(f"L样条模型必须给出非负次数: {self.degree}")

    @classmethod
    def from_signal(cls, signal: FriSignal) -> 'ModelSpec':
        pulse = signal.pulse if signal.kind == SignalKind.PULSE else None
        return cls(signal.kind, signal.K, pulse=pulse, degree=signal.degree)

    @classmethod
    def from_dict(cls, descriptor: Dict) -> 'ModelSpec':
        kind = SignalKind(descriptor['kind'])
        pulse = pulse_from_dict(descriptor.get('pulse')) if kind == SignalKind.PULSE else None
        return cls(kind, descriptor['K'], pulse=pulse, degree=descriptor.get('degree'))

    @property
    def drop_dc(self) -> bool:
        return self.kind == SignalKind.LSPLINE

    def weights(self, l, omega0: float) -> np.ndarray:
        return spectral_weights(l, omega0, self.kind, self.pulse, self.degree)

    def dirac_domain(self, x_hat: FourierVector) -> FourierVector:
        """
        去除谱权重得到纯复指数和 ŷ_l = x̂_l / w(l)

        L样条取 ŷ₀ = 0 (周期L样条的导数冲激流均值为零)。
        """
        if self.kind == SignalKind.PULSE:
            check_pulse_spectrum(self.pulse, x_hat.M, x_hat.omega0)
        weights = self.weights(x_hat.indices, x_hat.omega0)
        values = np.zeros_like(x_hat.values)
        finite = np.isfinite(weights)
        values[finite] = x_hat.values[finite] / weights[finite]
        return FourierVector(values, x_hat.T)


@dataclass(frozen=True, eq=False)
class EventVandermonde:
    """事件时刻矩阵 G ∈ C^{L×(2K+1)}"""
    G: np.ndarray
    times: np.ndarray
    K: int
    T: float

    @property
    def L(self) -> int:
        return self.G.shape[0]

    def singular_values(self) -> np.ndarray:
        return svd(self.G, compute_uv=False)

    @property
    def condition_number(self) -> float:
        s = self.singular_values()
        return float(s[0] / s[-1]) if s[-1] > 0 else np.inf

    @property
    def relative_min_singular_value(self) -> float:
        s = self.singular_values()
        return float(s[-1] / s[0]) if s[0] > 0 else 0.0

    def rank(self, rtol: float = 1e-10) -> int:
        s = self.singular_values()
        return int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0


def build_G(event_times, K: int, T: float = 1.0) -> EventVandermonde:
    """
    构造 G，G[m, l+K] = exp(j l ω₀ t_m)

    Raises:
        DuplicateTimes: 事件时刻非严格递增
    """
    times = np.asarray(event_times, dtype=float).ravel()
    if np.any(np.diff(times) <= 0):
        raise DuplicateTimes("事件时刻必须严格递增 (存在重复或乱序)")
    l = np.arange(-K, K + 1)
    G = np.exp(1j * (2 * np.pi / T) * np.multiply.outer(times, l))
    return EventVandermonde(G=G, times=times, K=int(K), T=float(T))


@dataclass(frozen=True)
class FourierFit:
    """
    傅里叶系数求解的诊断量

    fourier_error 为 ‖δx̂‖ 的一阶估计 cond(G)·ε·max|f(t_m)|。
    """
    condition_number: float
    residual: float
    ill_conditioned: bool
    fourier_error: float = 0.0


def solve_fourier(times: np.ndarray, samples: np.ndarray, K: int, T: float = 1.0,
                  channel: Optional[int] = None) -> Tuple[FourierVector, FourierFit]:
    """
    最小二乘解 f = G x̂

    Raises:
        InsufficientEvents: L < 2K+1
    """
    required = 2 * K + 1
    if times.size < required:
        raise InsufficientEvents(required, int(times.size), channel=channel)

    system = build_G(times, K, T)
    x_hat, *_ = lstsq(system.G, samples.astype(complex))
    residual = float(np.max(np.abs(samples - system.G @ x_hat)))
    condition = system.condition_number
    ill_conditioned = condition > ILL_CONDITIONED
    if ill_conditioned:
        logger.warning(f"事件矩阵G病态: cond = {condition:.3e}")
    if residual > FOURIER_RESIDUAL_TOLERANCE:
        logger.warning(f"傅里叶系数拟合残差 {residual:.3e} 超过无噪声容差")
    fourier_error = condition * SAMPLE_PRECISION * float(np.max(np.abs(samples)))
    return FourierVector(x_hat, T), FourierFit(condition, residual, ill_conditioned, fourier_error)


def fourier_from_events(stream: EventStream, K: int, T: float = 1.0) -> FourierVector:
    """由单通道事件恢复 2K+1 个傅里叶系数"""
    times, samples = t_transform(stream)
    x_hat, _ = solve_fourier(times, samples, K, T, channel=stream.channel)
    return x_hat


@dataclass(frozen=True, eq=False)
class ReconstructionReport:
    """
    重构结果与诊断

    Attributes:
        tau: 恢复的支撑 (升序, [0, T))
        a: 恢复的系数
        L: 使用的事件数
        cond_G: G 的条件数
        residual: ‖f - G x̂‖∞
        annihilation_residual: 零化残差 max|(h * ŷ)_l|
        ill_conditioned: G、系数回归病态，或参数误差一阶估计超过 ERROR_ESTIMATE_LIMIT
        max_error: 与真值的最大参数误差 (已知真值时)
        channel: 通道号 (SIMO联合估计时为 None)
        dc: L样条的均值 x̂₀
        channel_events: 各通道事件数 (多通道)
        gap_ratio: 零化矩阵的 σ_K/σ_(K+1)
        cond_regression: 系数回归矩阵的条件数
        error_estimate: 参数误差的一阶估计
    """
    tau: np.ndarray
    a: np.ndarray
    L: int
    cond_G: float
    residual: float
    annihilation_residual: float
    ill_conditioned: bool = False
    max_error: Optional[float] = None
    channel: Optional[int] = None
    dc: Optional[float] = None
    channel_events: Optional[List[int]] = field(default=None)
    gap_ratio: Optional[float] = None
    cond_regression: Optional[float] = None
    error_estimate: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'tau', np.asarray(self.tau, dtype=float))
        object.__setattr__(self, 'a', np.asarray(self.a, dtype=float))

    @property
    def K(self) -> int:
        return int(self.tau.size)

    def evaluate_against(self, signal: FriSignal) -> 'ReconstructionReport':
        """与真值比较 (支撑按周期距离最优配对)，返回填充 max_error 的新报告"""
        assignment, tau_errors = match_supports(self.tau, signal.tau, signal.T)
        a_errors = np.abs(self.a[assignment] - signal.a)
        error = float(max(np.max(tau_errors), np.max(a_errors)))
        return replace(self, max_error=error)

    def to_dict(self) -> Dict:
        return {
            'tau': self.tau.tolist(),
            'a': self.a.tolist(),
            'L': self.L,
            'condG': self.cond_G,
            'residual': self.residual,
            'annihilation_residual': self.annihilation_residual,
            'ill_conditioned': self.ill_conditioned,
            'err': self.max_error,
            'channel': self.channel,
            'dc': self.dc,
            'channel_events': self.channel_events,
            'gap_ratio': self.gap_ratio,
            'cond_regression': self.cond_regression,
            'error_estimate': self.error_estimate,
        }

    @classmethod
    def from_dict(cls, record: Dict) -> 'ReconstructionReport':
        return cls(tau=record['tau'], a=record['a'], L=record['L'], cond_G=record['condG'],
                   residual=record['residual'],
                   annihilation_residual=record.get('annihilation_residual', 0.0),
                   ill_conditioned=record.get('ill_conditioned', False),
                   max_error=record.get('err'), channel=record.get('channel'),
                   dc=record.get('dc'), channel_events=record.get('channel_events'),
                   gap_ratio=record.get('gap_ratio'), cond_regression=record.get('cond_regression'),
                   error_estimate=record.get('error_estimate'))

    def identical_to(self, other: 'ReconstructionReport') -> bool:
        return (np.array_equal(self.tau, other.tau) and np.array_equal(self.a, other.a)
                and {k: v for k, v in self.to_dict().items() if k not in ('tau', 'a')}
                == {k: v for k, v in other.to_dict().items() if k not in ('tau', 'a')})


def is_ill_conditioned(cond_G: float, params: ParameterFit, error_estimate: float,
                       channel: Optional[int] = None) -> bool:
    """G 或系数回归病态，或参数误差一阶估计超过上限"""
    flagged = cond_G > ILL_CONDITIONED or params.cond_regression > ILL_CONDITIONED
    if error_estimate > ERROR_ESTIMATE_LIMIT:
        logger.warning(f"通道 {channel}: 参数误差一阶估计 {error_estimate:.3e} 超过 {ERROR_ESTIMATE_LIMIT:.0e} "
                       f"(cond(G)={cond_G:.3e}, 放大倍数 {params.error_gain:.3e})")
        flagged = True
    return flagged


def estimate_parameters(x_hat: FourierVector, model: ModelSpec) -> Tuple[ParameterFit, AnnihilatingFilter, float]:
    """
    Prony + 支撑精化与系数回归 (算法的后半部分)

    Returns:
        (参数拟合, 零化滤波器, 零化残差)
    """
    y_hat = model.dirac_domain(x_hat)
    filt = annihilating_filter(y_hat, model.K)
    tau = supports_from_roots(filt.roots, x_hat.T)
    params = fit_parameters([x_hat], tau, lambda l: model.weights(l, x_hat.omega0), drop_dc=model.drop_dc)
    return params, filt, annihilation_residual(filt.taps, y_hat)


def reconstruct_from_samples(times: np.ndarray, samples: np.ndarray, model: ModelSpec, T: float = 1.0,
                             channel: Optional[int] = None,
                             channel_events: Optional[List[int]] = None) -> ReconstructionReport:
    """由 (事件时刻, 幅度样本) 完成重构"""
    x_hat, fit = solve_fourier(times, samples, model.K, T, channel=channel)
    params, filt, residual = estimate_parameters(x_hat, model)
    error_estimate = fit.fourier_error * params.error_gain
    dc = float(x_hat.at(0).real) if model.kind == SignalKind.LSPLINE else None
    return ReconstructionReport(tau=params.tau, a=params.a[0], L=int(times.size), cond_G=fit.condition_number,
                                residual=fit.residual, annihilation_residual=residual,
                                ill_conditioned=is_ill_conditioned(fit.condition_number, params,
                                                                   error_estimate, channel),
                                channel=channel, dc=dc, channel_events=channel_events,
                                gap_ratio=filt.gap_ratio, cond_regression=params.cond_regression,
                                error_estimate=error_estimate)


def reconstruct(stream: EventStream, model: ModelSpec, T: float = 1.0) -> ReconstructionReport:
    """
    单通道完美重构

    t_transform -> fourier_from_events -> annihilating_filter -> supports_from_roots
    -> fit_parameters (支撑精化) -> recover_coefficients
    """
    times, samples = t_transform(stream)
    report = reconstruct_from_samples(times, samples, model, T, channel=stream.channel)
    logger.info(f"通道 {stream.channel}: L={report.L}, cond(G)={report.cond_G:.3e}, "
                f"恢复支撑 {np.array2string(report.tau, precision=6)}")
    return report


def reconstructed_signal(report: ReconstructionReport, model: ModelSpec, T: float = 1.0) -> FriSignal:
    """由重构结果构造 x̆(t)"""
    order = np.argsort(report.tau)
    a = report.a[order]
    if model.kind == SignalKind.LSPLINE:
        a = a - a.mean()
    return FriSignal(model.kind, a, report.tau[order], T, pulse=model.pulse,
                     degree=model.degree, dc=report.dc or 0.0)
