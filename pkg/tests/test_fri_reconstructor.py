"""
单通道重构测试
"""

import numpy as np
import pytest

from fri_errors import DuplicateTimes, InsufficientEvents
from fri_reconstructor import (ModelSpec, ReconstructionReport, build_G, fourier_from_events, is_ill_conditioned,
                               reconstruct, reconstructed_signal, solve_fourier)
from neuromorphic_encoder import EventStream, encode, max_threshold_for
from prony import ParameterFit
from signal_model import FilteredSignal, FriSignal, fourier_coefficients, random_fri_signal
from sms_kernels import SamplingKernel


def encode_at_fraction(signal, kernel, fraction=0.5):
    f = FilteredSignal(signal, kernel)
    return encode(f, fraction * max_threshold_for(f, 2 * signal.K + 1), K=signal.K)


class TestEventMatrix:
    """事件矩阵 G"""

    def test_entries(self):
        system = build_G([0.1, 0.4, 0.8], 1)
        assert system.G.shape == (3, 3)
        assert system.G[0, 2] == pytest.approx(np.exp(2j * np.pi * 0.1))
        np.testing.assert_allclose(system.G[:, 1], 1.0)

    def test_duplicate_times(self):
        with pytest.raises(DuplicateTimes):
            build_G([0.1, 0.2, 0.2], 1)

    def test_unordered_times(self):
        with pytest.raises(DuplicateTimes):
            build_G([0.3, 0.1], 1)

    def test_full_column_rank_with_distinct_times(self, rng):
        """一个周期内 2K+1 个不同时刻即可使 G 列满秩"""
        for K in (1, 3, 6):
            times = np.sort(rng.uniform(0, 1, 2 * K + 1))
            system = build_G(times, K)
            assert system.rank() == 2 * K + 1
            assert system.relative_min_singular_value > 0

    def test_period_scaling(self):
        system = build_G([0.5], 2, T=2.0)
        assert system.G[0, 3] == pytest.approx(np.exp(1j * np.pi * 0.5))


class TestFourierFromEvents:
    """由事件恢复傅里叶系数"""

    def test_uniform_diracs(self, dirac_signal, dirac_events):
        x_hat = fourier_from_events(dirac_events, 5)
        np.testing.assert_allclose(x_hat.values, fourier_coefficients(dirac_signal, 5).values, atol=1e-9)

    def test_bspline_pulses(self, pulse_signal, sms_kernel):
        stream = encode(FilteredSignal(pulse_signal, sms_kernel), 0.015)
        x_hat = fourier_from_events(stream, 5)
        np.testing.assert_allclose(x_hat.values, fourier_coefficients(pulse_signal, 5).values, atol=1e-9)

    def test_insufficient_events(self, dirac_filtered):
        stream = encode(dirac_filtered, 100.0, channel=2)
        with pytest.raises(InsufficientEvents) as excinfo:
            fourier_from_events(stream, 5)
        assert excinfo.value.required == 11
        assert excinfo.value.observed == 0
        assert excinfo.value.channel == 2

    def test_fit_diagnostics(self, dirac_events):
        times = dirac_events.times
        samples = dirac_events.f0 + dirac_events.C * np.cumsum(dirac_events.polarities)
        _, fit = solve_fourier(times, samples, 5)
        assert fit.residual < 1e-8
        assert not fit.ill_conditioned
        assert fit.condition_number >= 1.0


class TestReconstruct:
    """单通道完美重构"""

    def test_uniform_diracs(self, dirac_signal, dirac_events):
        report = reconstruct(dirac_events, ModelSpec.from_signal(dirac_signal))
        np.testing.assert_allclose(report.tau, dirac_signal.tau, atol=1e-9)
        np.testing.assert_allclose(report.a, dirac_signal.a, atol=1e-9)
        assert report.evaluate_against(dirac_signal).max_error < 1e-9
        assert report.L == dirac_events.L
        assert report.channel == 0

    def test_bspline_pulses(self, pulse_signal, sms_kernel):
        stream = encode(FilteredSignal(pulse_signal, sms_kernel), 0.015)
        report = reconstruct(stream, ModelSpec.from_signal(pulse_signal)).evaluate_against(pulse_signal)
        assert report.max_error < 1e-9

    @pytest.mark.parametrize("degree, r", [(0, 0), (1, 1)])
    def test_lsplines(self, degree, r, rng):
        signal = random_fri_signal(rng, 'lspline', 5, degree=degree, amplitude='uniform', min_gap=0.02)
        stream = encode_at_fraction(signal, SamplingKernel(r=r, K=5))
        report = reconstruct(stream, ModelSpec.from_signal(signal)).evaluate_against(signal)
        assert report.max_error < 1e-8
        assert report.dc == pytest.approx(signal.dc, abs=1e-8)

    def test_random_dirac_order(self, rng):
        signal = random_fri_signal(rng, 'dirac', 8, min_amplitude=0.1)
        stream = encode_at_fraction(signal, SamplingKernel(r=2, K=8))
        report = reconstruct(stream, ModelSpec.from_signal(signal)).evaluate_against(signal)
        assert report.max_error < 1e-8

    def test_reconstructed_signal(self, pulse_signal, sms_kernel):
        stream = encode(FilteredSignal(pulse_signal, sms_kernel), 0.015)
        model = ModelSpec.from_signal(pulse_signal)
        rebuilt = reconstructed_signal(reconstruct(stream, model), model)
        assert rebuilt.kind == pulse_signal.kind
        np.testing.assert_allclose(rebuilt.tau, pulse_signal.tau, atol=1e-9)

    def test_empty_stream(self):
        model = ModelSpec('dirac', 2)
        with pytest.raises(InsufficientEvents):
            reconstruct(EventStream([], [], 0.1), model)


class TestModelSpec:
    """模型描述"""

    def test_requires_pulse(self):
        with pytest.raises(ValueError):
            ModelSpec('pulse', 3)

    def test_requires_degree(self):
        with pytest.raises(ValueError):
            ModelSpec('lspline', 3)

    def test_from_dict(self):
        model = ModelSpec.from_dict({'kind': 'pulse', 'K': 4, 'pulse': {'kind': 'bspline', 'order': 2}})
        assert model.K == 4
        assert model.pulse.order == 2
        assert not model.drop_dc

    def test_dirac_domain_removes_weights(self, pulse_signal):
        model = ModelSpec.from_signal(pulse_signal)
        y_hat = model.dirac_domain(fourier_coefficients(pulse_signal, 5))
        diracs = FriSignal.dirac_stream(pulse_signal.a, pulse_signal.tau)
        np.testing.assert_allclose(y_hat.values, fourier_coefficients(diracs, 5).values, atol=1e-12)

    def test_dirac_domain_zeroes_spline_mean(self):
        signal = FriSignal.lspline([0.5, -0.5], [0.2, 0.6], degree=0, dc=1.0)
        y_hat = ModelSpec.from_signal(signal).dirac_domain(fourier_coefficients(signal, 2))
        assert y_hat.at(0) == 0
        diracs = FriSignal.dirac_stream(signal.a, signal.tau)
        np.testing.assert_allclose(y_hat.values[3:], fourier_coefficients(diracs, 2).values[3:], atol=1e-12)


class TestReport:
    """重构报告"""

    def test_dict_round_trip(self, dirac_signal, dirac_events):
        report = reconstruct(dirac_events, ModelSpec.from_signal(dirac_signal)).evaluate_against(dirac_signal)
        restored = ReconstructionReport.from_dict(report.to_dict())
        assert restored.identical_to(report)

    def test_keys(self):
        record = ReconstructionReport(tau=[0.1], a=[1.0], L=3, cond_G=1.0, residual=0.0,
                                      annihilation_residual=0.0).to_dict()
        assert {'tau', 'a', 'L', 'condG', 'residual', 'err', 'gap_ratio', 'cond_regression',
                'error_estimate'} <= set(record)

    def test_error_uses_periodic_matching(self):
        signal = FriSignal.dirac_stream([1.0, 2.0], [0.001, 0.5])
        report = ReconstructionReport(tau=[0.5, 0.999], a=[2.0, 1.0], L=5, cond_G=1.0, residual=0.0,
                                      annihilation_residual=0.0)
        assert report.evaluate_against(signal).max_error == pytest.approx(0.002)

    def test_conditioning_diagnostics(self, dirac_signal, dirac_events):
        report = reconstruct(dirac_events, ModelSpec.from_signal(dirac_signal))
        assert report.gap_ratio > 1e6
        assert report.cond_regression >= 1.0
        assert np.isfinite(report.error_estimate) and report.error_estimate > 0


class TestConditioningFlag:
    """病态判定"""

    @staticmethod
    def params(cond_regression=10.0, error_gain=1e3):
        return ParameterFit(tau=np.array([0.1]), a=np.array([[1.0]]), cond_regression=cond_regression,
                            error_gain=error_gain)

    def test_well_conditioned(self):
        assert not is_ill_conditioned(1e3, self.params(), 1e-12)

    def test_large_error_estimate(self):
        assert is_ill_conditioned(1e3, self.params(), 1e-6)

    def test_event_matrix(self):
        assert is_ill_conditioned(1e13, self.params(), 0.0)

    def test_regression_matrix(self):
        assert is_ill_conditioned(1e3, self.params(cond_regression=1e13), 0.0)
