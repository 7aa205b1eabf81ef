"""
测试公共夹具
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'src')))

from neuromorphic_encoder import encode
from scenarios import UNIFORM_DIRAC_TAU, PULSE_STREAM_A, PULSE_STREAM_TAU
from signal_model import BSplinePulse, FilteredSignal, FriSignal
from sms_kernels import SamplingKernel


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def dirac_signal():
    """5个等间距单位冲激"""
    return FriSignal.dirac_stream(np.ones(5), UNIFORM_DIRAC_TAU)


@pytest.fixture
def pulse_signal():
    """三次B样条脉冲流"""
    return FriSignal.pulse_stream(PULSE_STREAM_A, PULSE_STREAM_TAU, BSplinePulse(order=3, scale=0.1))


@pytest.fixture
def sms_kernel():
    return SamplingKernel(r=0, K=5)


@pytest.fixture
def dirac_filtered(dirac_signal, sms_kernel):
    return FilteredSignal(dirac_signal, sms_kernel)


@pytest.fixture
def dirac_events(dirac_filtered):
    return encode(dirac_filtered, 1 / 11, K=5)
