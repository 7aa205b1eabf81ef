"""
事件与报告持久化测试
"""

import json

import numpy as np
import pytest

from event_io import (EVENT_FORMAT, default_meta_path, events_to_frame, read_event_streams, read_reports,
                      write_event_streams, write_reports)
from fri_reconstructor import ModelSpec, reconstruct
from neuromorphic_encoder import EventStream, encode_channels


class TestEventFiles:
    """事件CSV + 元数据"""

    def test_round_trip_is_bit_exact(self, tmp_path, dirac_filtered):
        streams = encode_channels(dirac_filtered, [0.3, 1 / 11], K=5)
        meta_path = write_event_streams(streams, tmp_path / 'events.csv')
        assert meta_path == tmp_path / 'events.meta.json'

        restored = read_event_streams(tmp_path / 'events.csv')
        assert len(restored) == 2
        for original, loaded in zip(streams, restored):
            assert loaded.identical_to(original)

    def test_reconstruction_from_file_is_identical(self, tmp_path, dirac_signal, dirac_events):
        write_event_streams([dirac_events], tmp_path / 'events.csv')
        loaded = read_event_streams(tmp_path / 'events.csv')[0]
        model = ModelSpec.from_signal(dirac_signal)
        assert reconstruct(loaded, model).identical_to(reconstruct(dirac_events, model))

    def test_empty_channel_survives(self, tmp_path, dirac_events):
        empty = EventStream([], [], 5.0, f0=1.25, channel=3, K=5)
        write_event_streams([dirac_events, empty], tmp_path / 'events.csv')
        restored = read_event_streams(tmp_path / 'events.csv')
        assert restored[1].L == 0
        assert restored[1].channel == 3
        assert restored[1].f0 == 1.25

    def test_csv_columns(self, tmp_path, dirac_events):
        write_event_streams([dirac_events], tmp_path / 'events.csv')
        header = (tmp_path / 'events.csv').read_text().splitlines()[0]
        assert header == 'channel,t,p'

    def test_metadata(self, tmp_path, dirac_events):
        meta_path = write_event_streams([dirac_events], tmp_path / 'run' / 'events.csv')
        meta = json.loads(meta_path.read_text())
        assert meta['format'] == EVENT_FORMAT
        assert meta['channels'][0]['C'] == dirac_events.C
        assert meta['channels'][0]['K'] == 5

    def test_duplicate_channels(self, tmp_path, dirac_events):
        with pytest.raises(ValueError):
            write_event_streams([dirac_events, dirac_events], tmp_path / 'events.csv')

    def test_unknown_format(self, tmp_path, dirac_events):
        write_event_streams([dirac_events], tmp_path / 'events.csv')
        (tmp_path / 'events.meta.json').write_text(json.dumps({'format': 'aedat', 'channels': []}))
        with pytest.raises(ValueError):
            read_event_streams(tmp_path / 'events.csv')

    def test_frame(self, dirac_events):
        df = events_to_frame([dirac_events])
        assert list(df.columns) == ['channel', 't', 'p']
        assert len(df) == dirac_events.L
        np.testing.assert_array_equal(df['p'].to_numpy(), dirac_events.polarities)

    def test_default_meta_path(self, tmp_path):
        assert default_meta_path(tmp_path / 'a' / 'ev.csv') == tmp_path / 'a' / 'ev.meta.json'


class TestReportFiles:
    """重构报告JSON"""

    def test_single_report(self, tmp_path, dirac_signal, dirac_events):
        report = reconstruct(dirac_events, ModelSpec.from_signal(dirac_signal)).evaluate_against(dirac_signal)
        write_reports(report, tmp_path / 'report.json', extra={'scenario': 'uniform_diracs'})
        payload = json.loads((tmp_path / 'report.json').read_text())
        assert payload['scenario'] == 'uniform_diracs'
        assert payload['L'] == report.L
        restored = read_reports(tmp_path / 'report.json')
        assert len(restored) == 1
        assert restored[0].identical_to(report)

    def test_channel_list(self, tmp_path, dirac_signal, dirac_events):
        report = reconstruct(dirac_events, ModelSpec.from_signal(dirac_signal))
        write_reports([report, report], tmp_path / 'report.json')
        payload = json.loads((tmp_path / 'report.json').read_text())
        assert len(payload['channels']) == 2
        assert len(read_reports(tmp_path / 'report.json')) == 2
