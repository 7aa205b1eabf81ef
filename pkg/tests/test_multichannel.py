"""
多通道 (SIMO / MIMO) 测试
"""

import numpy as np
import pytest

from fri_errors import DuplicateThresholds, InsufficientEvents, InsufficientTotalEvents, NoCommonSupport
from fri_reconstructor import ModelSpec, reconstruct
from multichannel import (ChannelBank, ChannelConfig, block_residuals, mimo_block_annihilate,
                          mimo_reconstruct, mimo_threshold_bounds, simo_reconstruct, simo_threshold_bounds,
                          simo_thresholds, stack_event_samples, subrate_thresholds)
from neuromorphic_encoder import EventStream, encode, encode_channels, max_threshold_for
from prony import annihilating_filter, supports_from_roots
from signal_model import FilteredSignal, FriSignal, fourier_coefficients, random_fri_signal
from sms_kernels import SamplingKernel


def mimo_bank(rng, Q, K, kernel_order=0):
    first = random_fri_signal(rng, 'dirac', K, min_amplitude=0.1)
    signals = [first] + [random_fri_signal(rng, 'dirac', K, tau=first.tau, min_amplitude=0.1)
                         for _ in range(Q - 1)]
    kernel = SamplingKernel(r=kernel_order, K=K)
    filtered = [FilteredSignal(s, kernel) for s in signals]
    thresholds = [0.5 * C for C in mimo_threshold_bounds(filtered, K)]
    streams = encode_channels(filtered, thresholds, K=K)
    return signals, ChannelBank('mimo', streams)


class TestChannelBank:
    """通道组"""

    def test_duplicate_simo_thresholds(self, dirac_filtered):
        streams = [encode(dirac_filtered, 0.1, channel=i) for i in range(2)]
        with pytest.raises(DuplicateThresholds):
            ChannelBank(ChannelConfig.SIMO, streams)

    def test_mimo_allows_equal_thresholds(self, dirac_filtered):
        streams = [encode(dirac_filtered, 0.1, channel=i) for i in range(2)]
        assert ChannelBank('mimo', streams).Q == 2

    def test_empty_bank(self):
        with pytest.raises(ValueError):
            ChannelBank('simo', [])

    def test_properties(self, dirac_filtered):
        streams = encode_channels(dirac_filtered, [0.3, 0.2])
        bank = ChannelBank('simo', streams)
        assert bank.config is ChannelConfig.SIMO
        assert bank.thresholds == [0.3, 0.2]
        assert bank.event_counts == [len(s) for s in streams]


class TestStacking:
    """SIMO样本堆叠"""

    def test_sorted_union(self):
        first = EventStream([0.1, 0.5], [1, 1], 0.2, channel=0)
        second = EventStream([0.3], [-1], 0.1, channel=1)
        times, samples = stack_event_samples([first, second])
        np.testing.assert_allclose(times, [0.1, 0.3, 0.5])
        np.testing.assert_allclose(samples, [0.2, -0.1, 0.4])

    def test_coincident_times_keep_first(self):
        first = EventStream([0.1, 0.2], [1, 1], 0.2, channel=0)
        second = EventStream([0.2 + 1e-13, 0.3], [1, 1], 0.4, channel=1)
        times, samples = stack_event_samples([first, second])
        assert times.size == 3
        assert samples[1] == pytest.approx(0.4)


class TestSimo:
    """SIMO联合重构"""

    def test_single_channel_matches_single_input(self, dirac_signal, dirac_events):
        model = ModelSpec.from_signal(dirac_signal)
        joint = simo_reconstruct(ChannelBank('simo', [dirac_events]), model)
        assert joint.identical_to(reconstruct(dirac_events, model))

    def test_two_channels(self, dirac_signal, dirac_filtered):
        upper = simo_threshold_bounds(dirac_filtered, 2, 5)[1]
        streams = encode_channels(dirac_filtered, simo_thresholds(upper, 2), K=5)
        report = simo_reconstruct(ChannelBank('simo', streams), ModelSpec.from_signal(dirac_signal))
        assert report.evaluate_against(dirac_signal).max_error < 1e-8
        assert report.channel is None
        assert report.channel_events == [len(s) for s in streams]

    def test_channel_order_does_not_matter(self, dirac_signal, dirac_filtered):
        streams = encode_channels(dirac_filtered, [0.3, 0.2, 0.15], K=5)
        model = ModelSpec.from_signal(dirac_signal)
        forward = simo_reconstruct(ChannelBank('simo', streams), model)
        backward = simo_reconstruct(ChannelBank('simo', streams[::-1]), model)
        np.testing.assert_allclose(forward.tau, backward.tau, atol=1e-12)
        np.testing.assert_allclose(forward.a, backward.a, atol=1e-12)

    def test_subrate_channels(self, dirac_signal, dirac_filtered):
        """每个通道单独不足 2K+1 个事件，联合后完美重构"""
        thresholds, counts = subrate_thresholds(dirac_filtered, 2, 5, search_max=4.0)
        assert len(set(thresholds)) == 2
        assert max(counts) < 11 <= sum(counts)

        streams = encode_channels(dirac_filtered, thresholds, K=5)
        assert [len(s) for s in streams] == counts
        for stream in streams:
            with pytest.raises(InsufficientEvents):
                reconstruct(stream, ModelSpec.from_signal(dirac_signal))
        report = simo_reconstruct(ChannelBank('simo', streams), ModelSpec.from_signal(dirac_signal))
        assert report.evaluate_against(dirac_signal).max_error < 1e-8

    def test_insufficient_total(self, dirac_signal, dirac_filtered):
        streams = encode_channels(dirac_filtered, [100.0, 50.0])
        with pytest.raises(InsufficientTotalEvents) as excinfo:
            simo_reconstruct(ChannelBank('simo', streams), ModelSpec.from_signal(dirac_signal))
        assert excinfo.value.required == 11

    def test_subrate_search_without_room(self, dirac_filtered):
        with pytest.raises(InsufficientTotalEvents):
            subrate_thresholds(dirac_filtered, 2, 5, fractions=[0.5, 0.4])

    def test_rejects_mimo_bank(self, dirac_signal, dirac_events):
        with pytest.raises(ValueError):
            simo_reconstruct(ChannelBank('mimo', [dirac_events]), ModelSpec.from_signal(dirac_signal))


class TestSimoThresholds:
    """SIMO阈值规则"""

    def test_bounds_scale_with_channels(self, dirac_filtered):
        lower, upper = simo_threshold_bounds(dirac_filtered, 3, 5)
        assert lower == 0.0
        assert upper == pytest.approx(3 * max_threshold_for(dirac_filtered, 11))

    def test_rule(self):
        np.testing.assert_allclose(simo_thresholds(2.0, 3), [1.8, 1.7, 1.6])
        np.testing.assert_allclose(simo_thresholds(1.0, 2, start=0.5, step=0.1), [0.5, 0.4])

    def test_rule_must_stay_positive(self):
        with pytest.raises(ValueError):
            simo_thresholds(1.0, 20)
        with pytest.raises(ValueError):
            simo_thresholds(1.0, 2, step=0.0)


class TestBlockAnnihilation:
    """MIMO块零化"""

    def test_identical_blocks_match_single_filter(self, dirac_signal):
        x_hat = fourier_coefficients(dirac_signal, 5)
        joint = mimo_block_annihilate([x_hat, x_hat], 5)
        single = annihilating_filter(x_hat, 5)
        np.testing.assert_allclose(supports_from_roots(joint.roots), supports_from_roots(single.roots), atol=1e-12)

    def test_shared_support(self, rng):
        first = random_fri_signal(rng, 'dirac', 4)
        second = random_fri_signal(rng, 'dirac', 4, tau=first.tau)
        fouriers = [fourier_coefficients(s, 4) for s in (first, second)]
        joint = mimo_block_annihilate(fouriers, 4)
        np.testing.assert_allclose(supports_from_roots(joint.roots), first.tau, atol=1e-10)
        assert max(block_residuals(joint.taps, fouriers)) < 1e-10

    def test_different_supports(self):
        first = FriSignal.dirac_stream([1.0, -0.5, 0.8], [0.1, 0.4, 0.7])
        second = FriSignal.dirac_stream([0.6, 1.2, -0.9], [0.2, 0.55, 0.9])
        with pytest.raises(NoCommonSupport):
            mimo_block_annihilate([fourier_coefficients(first, 3), fourier_coefficients(second, 3)], 3)


class TestMimo:
    """MIMO重构"""

    def test_two_channels(self, rng):
        signals, bank = mimo_bank(rng, 2, 5)
        reports = mimo_reconstruct(bank, ModelSpec.from_signal(signals[0]))
        assert [r.channel for r in reports] == [0, 1]
        for signal, report in zip(signals, reports):
            assert report.evaluate_against(signal).max_error < 1e-8

    def test_three_channels(self, rng):
        signals, bank = mimo_bank(rng, 3, 4, kernel_order=1)
        reports = mimo_reconstruct(bank, ModelSpec.from_signal(signals[0]))
        assert len(reports) == 3
        for signal, report in zip(signals, reports):
            assert report.evaluate_against(signal).max_error < 1e-8
        np.testing.assert_array_equal(reports[0].tau, reports[2].tau)

    def test_joint_support_agrees_with_single_channel(self, rng):
        signals, bank = mimo_bank(rng, 2, 5)
        model = ModelSpec.from_signal(signals[0])
        joint = mimo_reconstruct(bank, model)
        single = reconstruct(bank.streams[0], model)
        np.testing.assert_allclose(joint[0].tau, single.tau, atol=1e-9)

    def test_starved_channel_is_reported(self, rng):
        signals, bank = mimo_bank(rng, 2, 5)
        starved = encode(FilteredSignal(signals[1], SamplingKernel(r=0, K=5)), 1e3, channel=1)
        with pytest.raises(InsufficientEvents) as excinfo:
            mimo_reconstruct(ChannelBank('mimo', [bank.streams[0], starved]), ModelSpec.from_signal(signals[0]))
        assert excinfo.value.channel == 1

    def test_rejects_simo_bank(self, dirac_signal, dirac_events):
        with pytest.raises(ValueError):
            mimo_reconstruct(ChannelBank('simo', [dirac_events]), ModelSpec.from_signal(dirac_signal))
