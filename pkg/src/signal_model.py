#!/usr/bin/env python3
"""
有限新息率 (FRI) 参数化信号模型

支持三类周期化信号 (周期T):
- Dirac冲激流:      x(t) = Σ a_k δ(t - τ_k)
- 脉冲流:           x(t) = Σ a_k φ(t - τ_k)，φ 为具有闭式傅里叶变换的脉冲
- 非均匀L样条:      D^{n+1} x(t) = Σ a_k δ(t - τ_k)

傅里叶系数均具有加权复指数和 (SWCE) 结构:
    x̂_l = (1/T) w(l) Σ_k a_k exp(-j l ω₀ τ_k)
其中 w(l) = 1 (Dirac), φ̂(lω₀) (脉冲), (j ω₀ l)^{-(n+1)} (L样条, l≠0)。
L样条的 x̂₀ 定义为一个周期内的均值，由数值积分得到。
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import bernoulli, comb, factorial

from fri_errors import AliasingError, KernelNullsSignal, NeuroFriError, ensure_real
from sms_kernels import SamplingKernel, bspline_eval, bspline_spectrum, check_alias_cancellation

logger = logging.getLogger(__name__)


class SignalKind(str, Enum):
    DIRAC = 'dirac'
    PULSE = 'pulse'
    LSPLINE = 'lspline'


# ---------------------------------------------------------------------------
# 脉冲
# ---------------------------------------------------------------------------

class Pulse(ABC):
    """脉冲 φ 的抽象基类，子类需给出闭式傅里叶变换"""

    @abstractmethod
    def fourier(self, omega):
        ...

    @abstractmethod
    def __call__(self, t):
        ...

    @property
    @abstractmethod
    def half_support(self) -> float:
        ...

    @abstractmethod
    def to_dict(self) -> Dict:
        ...


@dataclass(frozen=True)
class DiracPulse(Pulse):
    """φ = δ，φ̂ ≡ 1"""

    def fourier(self, omega):
        return np.ones_like(np.asarray(omega, dtype=float), dtype=complex)

    def __call__(self, t):
        # 冲激没有有限的函数值，时域绘图时另行以茎线表示
        return np.zeros_like(np.asarray(t, dtype=float))

    @property
    def half_support(self) -> float:
        return 0.0

    def to_dict(self) -> Dict:
        return {'kind': 'dirac'}


@dataclass(frozen=True)
class BSplinePulse(Pulse):
    """
    时间缩放的中心B样条 φ(t) = β^(r)(t/s)

    φ̂(ω) = s (sin(sω/2)/(sω/2))^{r+1}，ω=0 处取 s。
    """
    order: int = 3
    scale: float = 0.1

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"脉冲缩放因子必须为正: {self.scale}")
        object.__setattr__(self, 'order', int(self.order))
        object.__setattr__(self, 'scale', float(self.scale))

    def fourier(self, omega):
        omega = np.asarray(omega, dtype=float)
        return (self.scale * bspline_spectrum(self.order, self.scale * omega)).astype(complex)

    def __call__(self, t):
        return bspline_eval(self.order, np.asarray(t, dtype=float) / self.scale)

    @property
    def half_support(self) -> float:
        return self.scale * (self.order + 1) / 2.0

    def to_dict(self) -> Dict:
        return {'kind': 'bspline', 'order': self.order, 'scale': self.scale}


def pulse_from_dict(descriptor: Optional[Dict]) -> Pulse:
    """由描述字典构造脉冲"""
    if descriptor is None or descriptor.get('kind', 'dirac') == 'dirac':
        return DiracPulse()
    if descriptor['kind'] == 'bspline':
        return BSplinePulse(order=descriptor.get('order', 3), scale=descriptor.get('scale', 0.1))
    raise ValueError(f"不支持的脉冲类型: {descriptor['kind']}")


# ---------------------------------------------------------------------------
# 傅里叶系数向量
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FourierVector:
    """
    2M+1 个连续傅里叶系数 x̂_{-M}, ..., x̂_M

    Attributes:
        values: 复数组，values[M + l] = x̂_l
        T: 周期，基频 ω₀ = 2π/T
    """
    values: np.ndarray
    T: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.ndim != 1 or values.size % 2 != 1:
            raise ValueError(f"傅里叶系数长度必须为奇数 2M+1: {values.shape}")
        if not self.T > 0:
            raise ValueError(f"周期T必须为正: {self.T}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'T', float(self.T))

    @property
    def M(self) -> int:
        return (self.values.size - 1) // 2

    @property
    def omega0(self) -> float:
        return 2 * np.pi / self.T

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def at(self, l):
        """按谐波序号取系数"""
        return self.values[np.asarray(l) + self.M]

    def truncated(self, M: int) -> 'FourierVector':
        """保留 |l| <= M 的系数"""
        if M > self.M:
            raise ValueError(f"无法截取 M={M} > {self.M}")
        return FourierVector(self.values[self.M - M:self.M + M + 1], self.T)

    def conjugate_symmetry_error(self) -> float:
        """max |x̂_{-l} - conj(x̂_l)|"""
        return float(np.max(np.abs(self.values[::-1] - np.conj(self.values))))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __add__(self, other: 'FourierVector') -> 'FourierVector':
        if other.M != self.M or other.T != self.T:
            raise ValueError("傅里叶系数向量的长度或周期不一致")
        return FourierVector(self.values + other.values, self.T)

    def __mul__(self, scalar) -> 'FourierVector':
        return FourierVector(self.values * scalar, self.T)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# FRI信号
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FriSignal:
    """
    周期化FRI信号

    Attributes:
        kind: 信号类型
        a: 系数 (长度K)
        tau: 支撑参数 (长度K, 严格递增, 位于 [0, T))
        T: 周期 (秒)
        pulse: 脉冲流的脉冲
        degree: L样条的次数 n
        dc: L样条在一个周期内的均值
    """
    kind: SignalKind
    a: np.ndarray
    tau: np.ndarray
    T: float = 1.0
    pulse: Optional[Pulse] = None
    degree: Optional[int] = None
    dc: float = 0.0

    def __post_init__(self):
        kind = SignalKind(self.kind)
        a = np.array(self.a, dtype=float).ravel()
        tau = np.array(self.tau, dtype=float).ravel()
        if a.size < 1:
            raise ValueError("模型阶数K必须 >= 1")
        if a.size != tau.size:
            raise ValueError(f"系数与支撑长度不一致: {a.size} vs {tau.size}")
        if not self.T > 0:
            raise ValueError(f"周期T必须为正: {self.T}")
        if np.any(np.diff(tau) <= 0):
            raise ValueError(f"支撑参数必须严格递增: {tau}")
        if tau[0] < 0 or tau[-1] >= self.T:
            raise ValueError(f"支撑参数必须位于 [0, T): {tau}")

        pulse = self.pulse
        degree = self.degree
        if kind == SignalKind.PULSE and pulse is None:
            raise ValueError("脉冲流必须给出脉冲φ")
        if kind == SignalKind.DIRAC:
            pulse = DiracPulse()
        if kind == SignalKind.LSPLINE:
            if degree is None or int(degree) < 0:
                raise ValueError(f"L样条次数必须为非负整数: {degree}")
            degree = int(degree)
            # 周期L样条的 (n+1) 阶导数为零均值冲激流
            if abs(a.sum()) > 1e-9 * max(1.0, np.abs(a).sum()):
                raise ValueError(f"周期L样条的系数之和必须为0: Σa = {a.sum():.3e}")
        else:
            degree = None

        a.setflags(write=False)
        tau.setflags(write=False)
        object.__setattr__(self, 'kind', kind)
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'tau', tau)
        object.__setattr__(self, 'T', float(self.T))
        object.__setattr__(self, 'pulse', pulse)
        object.__setattr__(self, 'degree', degree)
        object.__setattr__(self, 'dc', float(self.dc))

    @classmethod
    def dirac_stream(cls, a, tau, T: float = 1.0) -> 'FriSignal':
        return cls(SignalKind.DIRAC, a, tau, T)

    @classmethod
    def pulse_stream(cls, a, tau, pulse: Pulse, T: float = 1.0) -> 'FriSignal':
        return cls(SignalKind.PULSE, a, tau, T, pulse=pulse)

    @classmethod
    def lspline(cls, a, tau, degree: int, T: float = 1.0, dc: float = 0.0) -> 'FriSignal':
        return cls(SignalKind.LSPLINE, a, tau, T, degree=degree, dc=dc)

    @property
    def K(self) -> int:
        return int(self.a.size)

    @property
    def omega0(self) -> float:
        return 2 * np.pi / self.T

    @property
    def rate_of_innovation(self) -> float:
        return 2 * self.K / self.T

    def with_parameters(self, a=None, tau=None, dc=None) -> 'FriSignal':
        """替换参数后返回新信号 (用于构造重构信号 x̆)"""
        return FriSignal(self.kind, self.a if a is None else a, self.tau if tau is None else tau,
                         self.T, pulse=self.pulse, degree=self.degree,
                         dc=self.dc if dc is None else dc)

    def to_dict(self) -> Dict:
        descriptor = {
            'kind': self.kind.value,
            'K': self.K,
            'T': self.T,
            'a': self.a.tolist(),
            'tau': self.tau.tolist(),
        }
        if self.kind == SignalKind.PULSE:
            descriptor['pulse'] = self.pulse.to_dict()
        if self.kind == SignalKind.LSPLINE:
            descriptor['degree'] = self.degree
            descriptor['dc'] = self.dc
        return descriptor

    @classmethod
    def from_dict(cls, descriptor: Dict) -> 'FriSignal':
        kind = SignalKind(descriptor['kind'])
        if 'K' in descriptor and len(descriptor['a']) != descriptor['K']:
            raise ValueError(f"描述中K={descriptor['K']}与系数个数 {len(descriptor['a'])} 不一致")
        pulse = pulse_from_dict(descriptor.get('pulse')) if kind == SignalKind.PULSE else None
        return cls(kind, descriptor['a'], descriptor['tau'], descriptor.get('T', 1.0),
                   pulse=pulse, degree=descriptor.get('degree'), dc=descriptor.get('dc', 0.0))


def spectral_weights(l, omega0: float, kind: SignalKind, pulse: Optional[Pulse] = None,
                     degree: Optional[int] = None) -> np.ndarray:
    """
    SWCE结构中的谱权重 w(l)

    L样条在 l=0 处奇异，返回 nan，由调用方剔除。
    """
    l = np.asarray(l)
    kind = SignalKind(kind)
    if kind == SignalKind.DIRAC:
        return np.ones(l.shape, dtype=complex)
    if kind == SignalKind.PULSE:
        return pulse.fourier(l * omega0)
    weights = np.full(l.shape, np.nan, dtype=complex)
    nonzero = l != 0
    weights[nonzero] = (1j * omega0 * l[nonzero]) ** (-(degree + 1))
    return weights


def check_pulse_spectrum(pulse: Pulse, M: int, omega0: float):
    """φ̂(lω₀) 在 |l| <= M 内不得为零"""
    l = np.arange(-M, M + 1)
    spectrum = np.abs(pulse.fourier(l * omega0))
    floor = 1e-12 * max(abs(pulse.fourier(0.0)), 1e-300)
    nulls = l[spectrum <= floor]
    if nulls.size:
        raise KernelNullsSignal(f"脉冲频谱在谐波 l={nulls.tolist()} 处为零，支撑信息丢失")


def fourier_coefficients(signal: FriSignal, M: int) -> FourierVector:
    """
    解析计算傅里叶系数 x̂_l, l = -M..M

    Raises:
        NeuroFriError: L样条且 M=0 (没有可用系数)
        KernelNullsSignal: 脉冲频谱在某个 |l| <= M 处为零
    """
    M = int(M)
    if M < 0:
        raise ValueError(f"M必须为非负整数: {M}")
    if M == 0 and signal.kind == SignalKind.LSPLINE:
        raise NeuroFriError("L样条在 M=0 时没有可用于参数恢复的傅里叶系数")
    if signal.kind == SignalKind.PULSE:
        check_pulse_spectrum(signal.pulse, M, signal.omega0)

    l = np.arange(-M, M + 1)
    weights = spectral_weights(l, signal.omega0, signal.kind, signal.pulse, signal.degree)
    exponentials = np.exp(-1j * signal.omega0 * np.multiply.outer(l, signal.tau))
    values = weights / signal.T * (exponentials @ signal.a)

    if signal.kind == SignalKind.LSPLINE:
        values[M] = spline_mean(signal)
    return FourierVector(values, signal.T)


def bernoulli_polynomial(m: int, x):
    """伯努利多项式 B_m(x) = Σ_k C(m,k) B_k x^{m-k}"""
    x = np.asarray(x, dtype=float)
    numbers = bernoulli(m)
    return sum(comb(m, k) * numbers[k] * x ** (m - k) for k in range(m + 1))


def evaluate_signal(signal: FriSignal, t):
    """
    周期化信号 x(t) 的时域取值

    - Dirac冲激流: 返回0 (冲激以茎线形式单独给出)
    - 脉冲流: 周期化的脉冲加权和
    - L样条: dc - Σ a_k T^n B_{n+1}({(t-τ_k)/T}) / (n+1)!，Σa_k = 0 时其 (n+1) 阶导数恰为周期化冲激流
    """
    t = np.asarray(t, dtype=float)
    if signal.kind == SignalKind.DIRAC:
        return np.zeros_like(t)

    if signal.kind == SignalKind.PULSE:
        wraps = int(np.ceil(signal.pulse.half_support / signal.T)) + 1
        shifts = np.arange(-wraps, wraps + 1) * signal.T
        phase = np.mod(t, signal.T)
        offsets = phase[..., None, None] - signal.tau[:, None] - shifts[None, :]
        return np.sum(signal.pulse(offsets).sum(axis=-1) * signal.a, axis=-1)

    m = signal.degree + 1
    u = np.mod((t[..., None] - signal.tau) / signal.T, 1.0)
    terms = bernoulli_polynomial(m, u) * signal.T ** signal.degree / factorial(m)
    return signal.dc - np.sum(terms * signal.a, axis=-1)


def spline_mean(signal: FriSignal) -> float:
    """L样条在一个周期内的均值 (数值积分)"""
    integral, _ = quad(lambda s: float(evaluate_signal(signal, s)), 0.0, signal.T,
                       points=list(signal.tau), limit=200, epsabs=1e-13, epsrel=1e-13)
    return integral / signal.T


def _magnitudes(rng: np.random.Generator, n: int, amplitude: str) -> np.ndarray:
    if amplitude == 'normal':
        return rng.standard_normal(n)
    if amplitude == 'uniform':
        return rng.uniform(0.2, 1.0, n) * rng.choice([-1.0, 1.0], n)
    raise ValueError(f"不支持的系数分布: {amplitude}")


def _within_bounds(a: np.ndarray, amplitude: str, min_amplitude: float) -> bool:
    if amplitude == 'uniform':
        return bool(np.all((np.abs(a) >= 0.2) & (np.abs(a) <= 1.0)))
    return bool(np.all(np.abs(a) >= min_amplitude))


def _coefficients(rng: np.random.Generator, K: int, amplitude: str, min_amplitude: float,
                  max_tries: int) -> np.ndarray:
    for _ in range(max_tries):
        a = _magnitudes(rng, K, amplitude)
        if _within_bounds(a, amplitude, min_amplitude):
            return a
    raise ValueError(f"无法生成幅度不小于 {min_amplitude} 的系数")


def _zero_sum_coefficients(rng: np.random.Generator, K: int, amplitude: str, min_amplitude: float,
                           max_tries: int) -> np.ndarray:
    """Σa = 0 的系数: 前 K-1 个按分布抽取，最后一个取负和并拒绝越界者，再随机置换位置"""
    for _ in range(max_tries):
        head = _magnitudes(rng, K - 1, amplitude)
        a = np.append(head, -head.sum())
        if _within_bounds(a, amplitude, min_amplitude):
            return rng.permutation(a)
    raise ValueError(f"无法在 {max_tries} 次尝试内生成满足幅度范围且和为零的系数")


def random_fri_signal(rng: np.random.Generator, kind, K: int, T: float = 1.0,
                      min_gap: Optional[float] = None, amplitude: str = 'normal',
                      min_amplitude: float = 0.0, pulse: Optional[Pulse] = None,
                      degree: Optional[int] = None, tau: Optional[Sequence[float]] = None,
                      max_tries: int = 10000) -> FriSignal:
    """
    随机FRI信号

    Args:
        rng: 随机数生成器
        kind: 信号类型
        K: 模型阶数
        T: 周期
        min_gap: 相邻支撑 (含周期回绕) 的最小间隔，默认 T/(10K)
        amplitude: 'normal' 为标准正态系数; 'uniform' 为幅度在 [0.2, 1] 内、符号随机;
            L样条的系数另须满足 Σa = 0 (幅度范围不变)
        min_amplitude: 正态系数的最小幅度 (拒绝采样)
        pulse / degree: 脉冲流的脉冲 / L样条次数
        tau: 给定时复用该支撑 (MIMO共同支撑)
    """
    kind = SignalKind(kind)
    if min_gap is None:
        min_gap = T / (10 * K)

    if tau is None:
        for _ in range(max_tries):
            candidate = np.sort(rng.uniform(0.0, T, K))
            gaps = np.diff(np.concatenate([candidate, [candidate[0] + T]]))
            if np.all(gaps >= min_gap):
                tau = candidate
                break
        else:
            raise ValueError(f"无法在 {max_tries} 次尝试内生成最小间隔为 {min_gap} 的支撑")

    if kind == SignalKind.LSPLINE:
        if K < 2:
            raise ValueError("周期L样条至少需要2个节点")
        a = _zero_sum_coefficients(rng, K, amplitude, min_amplitude, max_tries)
    else:
        a = _coefficients(rng, K, amplitude, min_amplitude, max_tries)

    if kind == SignalKind.PULSE and pulse is None:
        pulse = BSplinePulse(order=3, scale=0.1)
    if kind == SignalKind.LSPLINE and degree is None:
        degree = 0
    return FriSignal(kind, a, tau, T, pulse=pulse, degree=degree)


# ---------------------------------------------------------------------------
# 滤波信号
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FilteredSignal:
    """
    经采样核滤波后的信号 f(t) = (x * g)(t)

    f(t) = Σ_{|l|<=K} x̂_l ĝ(lω₀) exp(j l ω₀ t)，为实三角多项式。
    构造时检查混叠消除条件。可直接作为编码器的输入 (向量化调用)。
    """
    signal: FriSignal
    kernel: SamplingKernel
    coefficients: FourierVector = field(init=False, repr=False)

    def __post_init__(self):
        if not np.isclose(self.kernel.T, self.signal.T, rtol=1e-12, atol=0.0):
            raise AliasingError(f"采样核周期 {self.kernel.T} 与信号周期 {self.signal.T} 不一致")
        passed, report = check_alias_cancellation(self.kernel, self.signal.K)
        if not passed:
            raise AliasingError(
                f"采样核不满足 K={self.signal.K} 的混叠消除条件: "
                f"l={report.worst_l} 处偏差 {report.worst_deviation:.3e}")

        x_hat = fourier_coefficients(self.signal, self.signal.K)
        gains = self.kernel.spectrum(x_hat.indices * self.signal.omega0)
        object.__setattr__(self, 'coefficients', FourierVector(x_hat.values * gains, self.signal.T))

    @property
    def T(self) -> float:
        return self.signal.T

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        phases = np.exp(1j * self.signal.omega0 * np.multiply.outer(t, self.coefficients.indices))
        value = ensure_real(phases @ self.coefficients.values, 1e-9, "滤波信号")
        return float(value) if value.ndim == 0 else value


def eval_filtered(signal: FriSignal, kernel: SamplingKernel, t):
    """f(t) 的取值，见 FilteredSignal"""
    return FilteredSignal(signal, kernel)(t)
