#!/usr/bin/env python3
"""
神经形态FRI采样工具包的异常定义

所有异常均继承自 NeuroFriError (ValueError 子类)，命令行入口据此映射退出码:
- ConfigError / ThresholdBoundError -> 2
- 其余 NeuroFriError -> 3
"""

from typing import Optional

import numpy as np


class NeuroFriError(ValueError):
    """工具包异常基类"""


class ConfigError(NeuroFriError):
    """场景配置不符合schema"""


class ThresholdBoundError(NeuroFriError):
    """配置的时间对比阈值超出理论上界"""


class KernelNullsSignal(NeuroFriError):
    """脉冲频谱在所用傅里叶系数处为零，信息丢失"""


class AliasingError(NeuroFriError):
    """采样核不满足混叠消除条件"""


class TooFewEvents(NeuroFriError):
    """事件数不足以计算采样密度"""


class DegenerateSignal(NeuroFriError):
    """信号动态范围退化 (f_max - f_min 过小)"""


class ModelOrderMismatch(NeuroFriError):
    """零化矩阵的零空间维数不为1，模型阶数K有误"""

    def __init__(self, message: str, singular_values: Optional[np.ndarray] = None):
        super().__init__(message)
        self.singular_values = singular_values


class DuplicateTimes(NeuroFriError):
    """事件时间重复或非严格递增"""


class InsufficientEvents(NeuroFriError):
    """单通道事件数少于 2K+1"""

    def __init__(self, required: int, observed: int, channel: Optional[int] = None,
                 threshold_bound: Optional[float] = None):
        self.required = required
        self.observed = observed
        self.channel = channel
        self.threshold_bound = threshold_bound
        message = f"事件数不足: 需要 {required} 个, 实际 {observed} 个"
        if channel is not None:
            message += f" (通道 {channel})"
        if threshold_bound is not None:
            message += f"; 阈值应满足 C < {threshold_bound:.6g}"
        super().__init__(message)


class InsufficientTotalEvents(NeuroFriError):
    """SIMO各通道事件总数少于 2K+1"""

    def __init__(self, required: int, observed: int):
        self.required = required
        self.observed = observed
        super().__init__(f"SIMO事件总数不足: 需要 {required} 个, 实际 {observed} 个")


class DuplicateThresholds(NeuroFriError):
    """SIMO各通道阈值必须两两不同"""


class NoCommonSupport(NeuroFriError):
    """MIMO各通道不共享支撑集"""


class NumericalResidueError(NeuroFriError):
    """理论上为实数的量出现了超出容差的虚部"""


def ensure_real(values, tol: float, what: str = "数值"):
    """
    断言虚部残差小于tol后返回实部

    Args:
        values: 复数标量或数组
        tol: 允许的最大虚部绝对值
        what: 出错时在消息中显示的名称
    """
    values = np.asarray(values)
    if np.iscomplexobj(values):
        residue = float(np.max(np.abs(values.imag))) if values.size else 0.0
        if residue >= tol:
            raise NumericalResidueError(f"{what}的虚部残差 {residue:.3e} 超过容差 {tol:.1e}")
        values = values.real
    return values
