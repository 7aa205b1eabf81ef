#!/usr/bin/env python3
"""
Prony零化滤波器法: 由傅里叶系数恢复支撑参数与系数

流程:
1. Toeplitz化 Γ_M x̂，(Γ_M x̂)_{i,j} = x̂_{i-j}
2. 最小奇异值对应的右奇异向量即零化滤波器 h (Eckart-Young)
3. 友矩阵特征值给出滤波器根 ϑ_k = exp(-j 2π τ_k / T)
4. τ_k = -(T/2π) ∠ϑ_k (mod T)
5. 最小二乘回归恢复系数 a
6. 以 (τ, a) 的联合非线性最小二乘精化支撑 (Prony结果作初值)
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import companion, lstsq, svd, toeplitz
from scipy.optimize import least_squares, linear_sum_assignment

from fri_errors import KernelNullsSignal, ModelOrderMismatch, NumericalResidueError, ensure_real
from signal_model import FourierVector

logger = logging.getLogger(__name__)

# 干净零空间判据 σ_K / σ_{K+1}
NULLSPACE_GAP = 1e6
ILL_CONDITIONED = 1e12
ROOT_MODULUS_TOLERANCE = 1e-6
REFINE_TOLERANCE = 1e-15


@dataclass(frozen=True, eq=False)
class AnnihilatingFilter:
    """
    (K+1) 抽头零化滤波器

    Attributes:
        taps: 单位范数的滤波器系数 h (h_0 取为正实数)
        roots: 滤波器的K个根
        singular_values: 零化矩阵的奇异值 (降序)
        residual: ‖A h‖，A 为零化矩阵
    """
    taps: np.ndarray
    roots: np.ndarray
    singular_values: Optional[np.ndarray] = None
    residual: float = 0.0

    @property
    def K(self) -> int:
        return int(self.roots.size)

    @property
    def gap_ratio(self) -> float:
        s = self.singular_values
        return float(s[self.K - 1] / s[self.K]) if s[self.K] > 0 else np.inf


@dataclass(frozen=True, eq=False)
class ToeplitzMatrix:
    """(M+1)×(M+1) Toeplitz矩阵，沿对角线为常数"""
    entries: np.ndarray

    @property
    def M(self) -> int:
        return self.entries.shape[0] - 1

    def singular_values(self) -> np.ndarray:
        return svd(self.entries, compute_uv=False)

    def rank(self, rtol: float = 1e-9) -> int:
        s = self.singular_values()
        return int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0


def toeplitzify(x_hat: FourierVector) -> ToeplitzMatrix:
    """Γ_M: C^{2M+1} -> C^{(M+1)×(M+1)}"""
    lags = np.arange(x_hat.M + 1)
    return ToeplitzMatrix(toeplitz(x_hat.at(lags), x_hat.at(-lags)))


def annihilation_matrix(x_hat: FourierVector, K: int) -> np.ndarray:
    """
    (2M-K+1)×(K+1) 的矩形零化矩阵，行 i = K-M..M，列 j = 0..K，元素 x̂_{i-j}

    M = K 时即为 Γ_K x̂。
    """
    M = x_hat.M
    if M < K:
        raise ValueError(f"傅里叶系数不足: 需要 M >= K, 实际 M={M}, K={K}")
    column = x_hat.at(np.arange(K - M, M + 1))
    row = x_hat.at(K - M - np.arange(K + 1))
    return toeplitz(column, row)


def roots_from_taps(taps: np.ndarray) -> np.ndarray:
    """H(z) = Σ h_k z^{-k} 的零点，即友矩阵的特征值"""
    return np.linalg.eigvals(companion(taps))


def nullspace_filter(matrix: np.ndarray, K: int, gap_ratio: float = NULLSPACE_GAP) -> Tuple[np.ndarray, np.ndarray]:
    """
    矩阵的一维零空间向量

    Returns:
        (单位范数的 h, 奇异值)

    Raises:
        ModelOrderMismatch: σ_K/σ_{K+1} 未超过 gap_ratio
    """
    _, s, vh = svd(matrix)
    if s.size < K + 1:
        raise ModelOrderMismatch(f"零化矩阵行数不足: {matrix.shape}", s)
    smallest = s[K]
    ratio = s[K - 1] / smallest if smallest > 0 else (np.inf if s[K - 1] > 0 else 0.0)
    if not ratio > gap_ratio:
        raise ModelOrderMismatch(
            f"零空间维数不为1 (σ_K/σ_(K+1) = {ratio:.3e} <= {gap_ratio:.0e})，模型阶数 K={K} 可能有误", s)

    h = vh[-1].conj()
    if abs(h[0]) > 0:
        h = h * (abs(h[0]) / h[0])
    return h, s


def annihilating_filter(x_hat: FourierVector, K: int, gap_ratio: float = NULLSPACE_GAP) -> AnnihilatingFilter:
    """
    由 2M+1 个傅里叶系数 (M >= K) 求零化滤波器

    Raises:
        ModelOrderMismatch: 零空间维数不为1
        NumericalResidueError: 根偏离单位圆超过 1e-6
    """
    matrix = annihilation_matrix(x_hat, K)
    h, s = nullspace_filter(matrix, K, gap_ratio)
    residual = float(np.linalg.norm(matrix @ h))
    if residual > 1e-8 * x_hat.norm():
        logger.warning(f"零化残差偏大: {residual:.3e} (‖x̂‖ = {x_hat.norm():.3e})")

    roots = roots_from_taps(h)
    modulus_error = float(np.max(np.abs(np.abs(roots) - 1.0)))
    if modulus_error > ROOT_MODULUS_TOLERANCE:
        raise NumericalResidueError(f"零化滤波器的根偏离单位圆 {modulus_error:.3e}")
    return AnnihilatingFilter(taps=h, roots=roots, singular_values=s, residual=residual)


def annihilation_residual(taps: np.ndarray, x_hat: FourierVector) -> float:
    """所有有效时延上 |(h * x̂)_l| 的最大值"""
    K = taps.size - 1
    return float(np.max(np.abs(annihilation_matrix(x_hat, K) @ taps)))


def supports_from_roots(roots: np.ndarray, T: float = 1.0) -> np.ndarray:
    """
    τ_k = mod(-(T/2π) ∠ϑ_k, T)，升序

    根先径向投影到单位圆。
    """
    roots = np.asarray(roots, dtype=complex)
    projected = roots / np.abs(roots)
    tau = np.mod(-T / (2 * np.pi) * np.angle(projected), T)
    tau[tau >= T] -= T
    return np.sort(tau)


def _regression_rows(x_hat: FourierVector, weight: Callable,
                     drop_dc: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """回归使用的频率下标 l、缩放 w(l)/T 与右端项 x̂_l"""
    l = x_hat.indices
    weights = np.asarray(weight(l), dtype=complex)
    keep = np.isfinite(weights)
    if drop_dc:
        keep &= l != 0
    if np.any(np.abs(weights[keep]) == 0):
        raise KernelNullsSignal(f"谱权重在 l={l[keep][np.abs(weights[keep]) == 0].tolist()} 处为零")
    return l[keep], weights[keep] / x_hat.T, x_hat.values[keep]


def _design(rows: np.ndarray, scale: np.ndarray, tau: np.ndarray, omega0: float) -> np.ndarray:
    return scale[:, None] * np.exp(-1j * omega0 * np.multiply.outer(rows, np.asarray(tau, dtype=float)))


def coefficient_system(x_hat: FourierVector, tau: np.ndarray, weight: Callable,
                       drop_dc: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    系数回归的线性系统 x̂_l = w(l)/T Σ_k a_k exp(-j l ω₀ τ_k)

    w(l) 非有限的行 (L样条 l=0) 以及 drop_dc 时的 l=0 行被剔除。

    Returns:
        (回归矩阵, 右端项)
    """
    rows, scale, rhs = _regression_rows(x_hat, weight, drop_dc)
    return _design(rows, scale, tau, x_hat.omega0), rhs


def recover_coefficients(x_hat: FourierVector, tau: np.ndarray, weight: Callable,
                         drop_dc: bool = False) -> np.ndarray:
    """
    已知支撑时以线性最小二乘恢复实系数 a

    条件数超过 1e12 时仅记录警告 (不中断)，条件数由 fit_parameters 写入重构报告。
    """
    matrix, rhs = coefficient_system(x_hat, tau, weight, drop_dc)
    condition = float(np.linalg.cond(matrix))
    if condition > ILL_CONDITIONED:
        logger.warning(f"系数回归矩阵病态: cond = {condition:.3e}")
    a, *_ = lstsq(matrix, rhs)
    return ensure_real(a, 1e-8, "恢复系数")


@dataclass(frozen=True, eq=False)
class ParameterFit:
    """
    支撑与系数的联合最小二乘拟合

    Attributes:
        tau: 支撑 (升序, [0, T))
        a: 各通道系数, 形状 (Q, K)
        cond_regression: 系数回归矩阵的条件数
        error_gain: 参数误差相对傅里叶系数误差的一阶放大倍数 1/σ_min(J)
        refined: 是否采纳了非线性精化的结果
    """
    tau: np.ndarray
    a: np.ndarray
    cond_regression: float
    error_gain: float
    refined: bool = False


def _real_stack(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag], axis=0)


def _min_spacing(tau: np.ndarray, T: float) -> float:
    ordered = np.sort(np.mod(tau, T))
    return float(np.min(np.diff(np.concatenate([ordered, [ordered[0] + T]]))))


def fit_parameters(fouriers: Sequence[FourierVector], tau0: np.ndarray, weight: Callable,
                   drop_dc: bool = False, refine: bool = True) -> ParameterFit:
    """
    以Prony支撑为初值，对 (τ, a⁽¹⁾..a⁽Q⁾) 做联合非线性最小二乘精化

    残差 B(τ) a⁽ⁱ⁾ - x̂⁽ⁱ⁾ (实虚部堆叠)，解析雅可比，Levenberg-Marquardt。
    仅当代价不增且支撑位移小于最小间隔的一半时采纳精化结果；
    最终系数在精化后的支撑上由 recover_coefficients 给出。
    """
    x0 = fouriers[0]
    T, omega0 = x0.T, x0.omega0
    tau0 = np.sort(np.asarray(tau0, dtype=float))
    K, Q = tau0.size, len(fouriers)
    rows, scale, _ = _regression_rows(x0, weight, drop_dc)
    target = _real_stack(np.column_stack([_regression_rows(x, weight, drop_dc)[2] for x in fouriers]))
    R = rows.size

    def unpack(theta):
        return theta[:K], theta[K:].reshape(Q, K)

    def residual(theta):
        tau, a = unpack(theta)
        return (_real_stack(_design(rows, scale, tau, omega0) @ a.T) - target).ravel(order='F')

    def jacobian(theta):
        tau, a = unpack(theta)
        B = _design(rows, scale, tau, omega0)
        dB = B * (-1j * omega0 * rows)[:, None]
        J = np.zeros((2 * R * Q, K * (Q + 1)))
        for i in range(Q):
            block = slice(2 * R * i, 2 * R * (i + 1))
            J[block, :K] = _real_stack(dB * a[i])
            J[block, K * (i + 1):K * (i + 2)] = _real_stack(B)
        return J

    a0, *_ = lstsq(_real_stack(_design(rows, scale, tau0, omega0)), target)
    theta = np.concatenate([tau0, a0.T.ravel()])
    refined = False
    start_cost = float(np.sum(residual(theta) ** 2))
    if refine and start_cost > 0:
        result = least_squares(residual, theta, jac=jacobian, method='lm',
                               xtol=REFINE_TOLERANCE, ftol=REFINE_TOLERANCE, gtol=REFINE_TOLERANCE)
        shift = float(np.max(circular_distance(result.x[:K], tau0, T)))
        if 2 * result.cost <= start_cost and shift < 0.5 * _min_spacing(tau0, T):
            theta, refined = result.x, True
            logger.debug(f"支撑精化: 代价 {start_cost:.3e} -> {2 * result.cost:.3e}, 最大位移 {shift:.3e}")

    tau = np.sort(np.mod(theta[:K], T))
    tau[tau >= T] -= T
    a = np.array([recover_coefficients(x, tau, weight, drop_dc) for x in fouriers])
    s = svd(jacobian(np.concatenate([tau, a.ravel()])), compute_uv=False)
    gain = float(1.0 / s[-1]) if s[-1] > 0 else np.inf
    condition = float(np.linalg.cond(_design(rows, scale, tau, omega0)))
    return ParameterFit(tau=tau, a=a, cond_regression=condition, error_gain=gain, refined=refined)


def circular_distance(x, y, T: float = 1.0):
    """周期T上的距离"""
    d = np.mod(np.asarray(x) - np.asarray(y), T)
    return np.minimum(d, T - d)


def match_supports(estimated: np.ndarray, truth: np.ndarray, T: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    按周期距离做最优指派

    Returns:
        (assignment, errors): estimated[assignment[i]] 与 truth[i] 配对，errors[i] 为其周期距离
    """
    cost = circular_distance(np.asarray(truth)[:, None], np.asarray(estimated)[None, :], T)
    rows, cols = linear_sum_assignment(cost)
    assignment = cols[np.argsort(rows)]
    return assignment, cost[np.arange(len(truth)), assignment]
