#!/usr/bin/env python3
"""
调制样条和 (SMS, sum-of-modulated-splines) 采样核

g(t) = (1/T) β^(r)(t/T) Σ_{k=-K}^{K} exp(j k ω₀ t)

- 时域: 紧支撑于 [-T(r+1)/2, T(r+1)/2]
- 频域: ĝ(lω₀) = 1 (|l| ≤ K), ĝ(lω₀) = 0 (|l| > K)，即混叠消除条件
- r = 0 时与 SoS (sum-of-sincs) 核重合

B样条采用中心节点上的 Cox-de Boor 递推计算。
"""

import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from fri_errors import ensure_real

logger = logging.getLogger(__name__)

# B样条阶数的实际上限
MAX_SPLINE_ORDER = 8
ALIAS_TOLERANCE = 1e-9
KERNEL_FAMILIES = ('sms', 'bspline')


def bspline_eval(r: int, t):
    """
    中心B样条 β^(r)(t)

    Cox-de Boor递推，节点为 -(r+1)/2, ..., (r+1)/2 (间距为1)。
    0阶基函数取半开区间 [k_i, k_{i+1})，因此满足单位分解。

    Args:
        r: 样条阶数 (0 <= r <= 8)
        t: 标量或数组

    Returns:
        与t同形状的样条值
    """
    if not 0 <= int(r) <= MAX_SPLINE_ORDER:
        raise ValueError(f"B样条阶数必须在 [0, {MAX_SPLINE_ORDER}] 内: {r}")
    r = int(r)
    t = np.asarray(t, dtype=float)
    knots = np.arange(r + 2) - (r + 1) / 2.0

    basis = [((knots[i] <= t) & (t < knots[i + 1])).astype(float) for i in range(r + 1)]
    for p in range(1, r + 1):
        basis = [
            ((t - knots[i]) * basis[i] + (knots[i + p + 1] - t) * basis[i + 1]) / p
            for i in range(r + 1 - p)
        ]

    value = basis[0]
    return float(value) if value.ndim == 0 else value


def bspline_spectrum(r: int, nu):
    """β^(r) 的傅里叶变换: (sin(ν/2)/(ν/2))^(r+1)，ν=0处取1"""
    nu = np.asarray(nu, dtype=float)
    return np.sinc(nu / (2 * np.pi)) ** (r + 1)


@dataclass(frozen=True)
class SamplingKernel:
    """
    采样核描述

    Attributes:
        r: B样条阶数
        K: 模型阶数 (通带 |l| <= K)
        T: 周期 (秒)
        family: 'sms' 为调制样条和核; 'bspline' 为未调制的 (1/T)β^(r)(t/T)，
            仅用作混叠消除检查的反例
    """
    r: int
    K: int
    T: float = 1.0
    family: str = 'sms'

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"不支持的采样核类型: {self.family}")
        if not 0 <= int(self.r) <= MAX_SPLINE_ORDER:
            raise ValueError(f"采样核阶数必须在 [0, {MAX_SPLINE_ORDER}] 内: {self.r}")
        if int(self.K) < 1:
            raise ValueError(f"模型阶数K必须为正整数: {self.K}")
        if not self.T > 0:
            raise ValueError(f"周期T必须为正: {self.T}")
        object.__setattr__(self, 'r', int(self.r))
        object.__setattr__(self, 'K', int(self.K))
        object.__setattr__(self, 'T', float(self.T))

    @property
    def omega0(self) -> float:
        return 2 * np.pi / self.T

    @property
    def half_support(self) -> float:
        return self.T * (self.r + 1) / 2.0

    def __call__(self, t):
        return kernel_time_eval(self, t)

    def spectrum(self, omega):
        return kernel_fourier_eval(self, omega)

    def to_dict(self) -> Dict:
        return {'family': self.family, 'r': self.r, 'K': self.K, 'T': self.T}

    @classmethod
    def from_dict(cls, descriptor: Dict) -> 'SamplingKernel':
        return cls(r=descriptor.get('r', 0), K=descriptor['K'],
                   T=descriptor.get('T', 1.0), family=descriptor.get('family', 'sms'))


@dataclass(frozen=True)
class AliasCancellationReport:
    """混叠消除检查结果"""
    passed: bool
    K: int
    worst_l: int
    worst_deviation: float
    l_max: int
    tolerance: float = ALIAS_TOLERANCE


def kernel_time_eval(kernel: SamplingKernel, t):
    """
    采样核的时域取值

    复调制和 Σ exp(jkω₀t) 对称求和后为实的Dirichlet型因子，虚部残差断言 < 1e-12。
    """
    t = np.asarray(t, dtype=float)
    window = bspline_eval(kernel.r, t / kernel.T) / kernel.T
    if kernel.family == 'bspline':
        return window

    k = np.arange(-kernel.K, kernel.K + 1)
    modulation = np.exp(1j * kernel.omega0 * np.multiply.outer(t, k)).sum(axis=-1)
    modulation = ensure_real(modulation, 1e-12, "SMS调制和")
    value = window * modulation
    return float(value) if np.ndim(value) == 0 else value


def kernel_fourier_eval(kernel: SamplingKernel, omega):
    """
    采样核的闭式傅里叶变换

    ĝ(ω) = Σ_{k=-K}^{K} β̂^(r)((ω - kω₀)T)，在 ω = lω₀ 处恰为 1 (|l|<=K) 或 0。
    """
    omega = np.asarray(omega, dtype=float)
    if kernel.family == 'bspline':
        value = bspline_spectrum(kernel.r, omega * kernel.T).astype(complex)
    else:
        k = np.arange(-kernel.K, kernel.K + 1)
        nu = (omega[..., None] - k * kernel.omega0) * kernel.T
        value = bspline_spectrum(kernel.r, nu).sum(axis=-1).astype(complex)
    return complex(value) if value.ndim == 0 else value


def check_alias_cancellation(kernel: SamplingKernel, K: int) -> Tuple[bool, AliasCancellationReport]:
    """
    数值验证混叠消除条件

    在 |l| <= 4K 的谐波上检查 ĝ(lω₀) = 1 (|l| <= K) 与 ĝ(lω₀) = 0 (K < |l| <= 4K)。

    Returns:
        (是否通过, 检查报告)，报告给出偏差最大的谐波l
    """
    if int(K) < 1:
        raise ValueError(f"模型阶数K必须为正整数: {K}")
    K = int(K)
    l_max = 4 * K
    l = np.arange(-l_max, l_max + 1)
    values = kernel_fourier_eval(kernel, l * kernel.omega0)
    target = (np.abs(l) <= K).astype(float)
    deviation = np.abs(values - target)

    worst = int(np.argmax(deviation))
    passed = bool(deviation[worst] <= ALIAS_TOLERANCE)
    report = AliasCancellationReport(passed=passed, K=K, worst_l=int(l[worst]),
                                     worst_deviation=float(deviation[worst]), l_max=l_max)
    if not passed:
        logger.debug(f"混叠消除检查失败: l={report.worst_l}, 偏差={report.worst_deviation:.3e}")
    return passed, report
