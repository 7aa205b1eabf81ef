"""
实验运行器测试: 场景运行、退出码、批量试验
"""

import json

import pandas as pd
import pytest

from fri_errors import ConfigError, ThresholdBoundError
from scenario_runner import (EXIT_CONFIG, EXIT_OK, build_parser, exit_code_for, main, parse_random_order,
                             resolve_thresholds, run_scenario, run_sweep, sweep_configs)
from scenarios import builtin_scenario, validate_config
from signal_model import FilteredSignal
from sms_kernels import SamplingKernel


def write_config(path, **changes):
    raw = {
        'name': 'tiny',
        'signal': {'kind': 'dirac', 'K': 2, 'a': [1.0, -0.6], 'tau': [0.2, 0.7]},
        'kernel': {'family': 'sms', 'r': 0, 'K': 2},
        'threshold': {'policy': 'bound_fraction', 'fraction': 0.8},
    }
    raw.update(changes)
    path.write_text(json.dumps(raw))
    return path


class TestRunScenario:
    """单场景运行"""

    def test_uniform_diracs(self, tmp_path):
        result = run_scenario(builtin_scenario('uniform_diracs'), tmp_path)
        assert result.passed
        assert result.status == 'passed'
        assert result.max_error < 1e-9
        assert result.events[0] >= 11
        for name in ('events.csv', 'events.meta.json', 'report.json', 'plot_signal.csv',
                     'plot_stems.csv', 'plot_events.csv'):
            assert (tmp_path / name).exists()

        report = json.loads((tmp_path / 'report.json').read_text())
        assert report['passed'] is True
        assert report['thresholds'] == [1 / 11]
        assert len(report['channels']) == 1

    def test_bspline_pulses(self, tmp_path):
        result = run_scenario(builtin_scenario('bspline_pulses'), tmp_path)
        assert result.passed
        stems = pd.read_csv(tmp_path / 'plot_stems.csv')
        assert (stems['tau'] - stems['tau_rec']).abs().max() < 1e-9

    def test_output_is_deterministic(self, tmp_path):
        config = builtin_scenario('piecewise_constant')
        run_scenario(config, tmp_path / 'first')
        run_scenario(config, tmp_path / 'second')
        for name in ('events.csv', 'report.json'):
            assert (tmp_path / 'first' / name).read_text() == (tmp_path / 'second' / name).read_text()

    def test_expected_failure(self, tmp_path):
        result = run_scenario(builtin_scenario('dirac_overthreshold'), tmp_path)
        assert result.status == 'expected_failure'
        assert result.passed
        assert result.events == [0]
        assert json.loads((tmp_path / 'report.json').read_text())['status'] == 'expected_failure'

    def test_threshold_above_bound(self, tmp_path):
        config = builtin_scenario('uniform_diracs').with_overrides(threshold={'policy': 'explicit', 'values': [100.0]})
        with pytest.raises(ThresholdBoundError):
            run_scenario(config, tmp_path)

    @pytest.mark.parametrize('name', ['mimo_shared_dirac', 'mimo_shared_pulse', 'mimo_shared_d1',
                                      'mimo_shared_d2'])
    def test_mimo_scenario(self, name, tmp_path):
        result = run_scenario(builtin_scenario(name), tmp_path)
        assert result.passed, result.message
        assert len(result.events) == 2
        channels = json.loads((tmp_path / 'report.json').read_text())['channels']
        assert len(channels) == 2
        assert all(channel['annihilation_residual'] < 1e-8 for channel in channels)

    @pytest.mark.parametrize('name', ['simo_subrate_dirac', 'simo_subrate_pulse', 'simo_subrate_d1',
                                      'simo_subrate_d2'])
    def test_subrate_scenario(self, name, tmp_path):
        config = builtin_scenario(name)
        result = run_scenario(config, tmp_path)
        assert result.passed, result.message
        assert max(result.events) < 2 * config.K + 1 <= sum(result.events)
        channels = json.loads((tmp_path / 'report.json').read_text())['channels']
        assert channels[0]['annihilation_residual'] < 1e-8


class TestThresholdPolicies:
    """阈值策略"""

    def test_simo_bound_fraction(self):
        config = validate_config({
            'name': 'simo', 'configuration': 'simo', 'Q': 3,
            'signal': {'kind': 'dirac', 'K': 2, 'a': [1.0, -0.6], 'tau': [0.2, 0.7]},
            'kernel': {'r': 0, 'K': 2},
            'threshold': {'policy': 'bound_fraction', 'fraction': 0.6},
        })
        filtered = [FilteredSignal(s, SamplingKernel(r=0, K=2)) for s in config.build_signals()]
        thresholds, bounds = resolve_thresholds(config, filtered)
        upper = bounds['upper'][0]
        assert thresholds == pytest.approx([0.6 * upper, 0.55 * upper, 0.5 * upper])
        assert bounds['rule'] == 'simo'


class TestCommandLine:
    """命令行与退出码"""

    def test_list(self, capsys):
        assert main(['list']) == EXIT_OK
        out = capsys.readouterr().out
        assert 'uniform_diracs' in out and 'mimo_shared_d2' in out
        assert 'fig5a' in out

    def test_run_builtin(self, tmp_path, capsys):
        assert main(['run', 'uniform_diracs', '--out', str(tmp_path)]) == EXIT_OK
        assert 'uniform_diracs' in capsys.readouterr().out

    def test_run_alias(self, tmp_path, capsys):
        assert main(['run', 'fig5a', '--out', str(tmp_path)]) == EXIT_OK
        assert 'uniform_diracs' in capsys.readouterr().out
        assert (tmp_path / 'report.json').exists()

    def test_run_config_file(self, tmp_path):
        path = write_config(tmp_path / 'tiny.json')
        assert main(['run', str(path), '--out', str(tmp_path / 'out')]) == EXIT_OK
        assert (tmp_path / 'out' / 'report.json').exists()

    def test_expected_failure_exits_zero(self, tmp_path):
        assert main(['run', 'dirac_overthreshold', '--out', str(tmp_path)]) == EXIT_OK

    def test_threshold_bound_exits_two(self, tmp_path):
        path = write_config(tmp_path / 'loud.json', threshold={'policy': 'explicit', 'values': [50.0]})
        assert main(['run', str(path), '--out', str(tmp_path / 'out')]) == EXIT_CONFIG

    def test_invalid_config_exits_two(self, tmp_path):
        path = write_config(tmp_path / 'bad.json', Q=0)
        assert main(['run', str(path)]) == EXIT_CONFIG

    def test_missing_config_exits_two(self, tmp_path):
        assert main(['run', str(tmp_path / 'absent.json')]) == EXIT_CONFIG

    def test_log_file(self, tmp_path):
        log_path = tmp_path / 'run.log'
        main(['--log-file', str(log_path), 'run', 'uniform_diracs', '--out', str(tmp_path / 'out')])
        assert 'uniform_diracs' in log_path.read_text(encoding='utf-8')

    def test_exit_code_mapping(self):
        assert exit_code_for(ConfigError('x')) == 2
        assert exit_code_for(ThresholdBoundError('x')) == 2
        assert exit_code_for(ValueError('x')) == 3

    def test_random_order_parsing(self):
        assert parse_random_order('K=6') == 6
        assert parse_random_order('4') == 4
        args = build_parser().parse_args(['sweep', '--random', 'K=3', '--trials', '2'])
        assert args.random == 3
        with pytest.raises(SystemExit):
            build_parser().parse_args(['sweep', '--random', 'K=x'])


class TestSweep:
    """批量随机试验"""

    def test_seeds_are_derived(self):
        configs = sweep_configs(3, seed=11, K=3)
        assert len({c.seed for c in configs}) == 3
        assert [c.name for c in configs] == ['trial_0000', 'trial_0001', 'trial_0002']
        assert [c.seed for c in sweep_configs(3, seed=11, K=3)] == [c.seed for c in configs]

    def test_small_sweep(self, tmp_path):
        summary = run_sweep(2, seed=5, K=3, out_dir=tmp_path)
        assert len(summary) == 2
        assert bool(summary['pass'].all())
        assert (tmp_path / 'sweep_summary.csv').exists()
        assert (tmp_path / 'trial_0001' / 'report.json').exists()

    def test_sweep_command(self, tmp_path):
        assert main(['sweep', '--trials', '2', '--random', 'K=2', '--out', str(tmp_path)]) == EXIT_OK
