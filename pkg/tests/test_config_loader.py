# tests/test_config_loader.py
from pathlib import Path

import pytest
import yaml

from src.errors import ConfigError
from src.experiment_record import run_settings_from
from src.services.sweep_service import expand_cells
from src.utils.config_loader import OUT_DIR_ENV, config_int, dump_config, flatten, load_config, parse_override, unflatten

RECIPES = Path(__file__).parent.parent / 'recipes'


class TestOverrides:

    @pytest.mark.parametrize("text, expected", [
        ("net.th=0.99", ('net.th', 0.99)),
        ("net.eta=1e-3", ('net.eta', 0.001)),
        ("run.epochs=3", ('run.epochs', 3)),
        ("device.linear=true", ('device.linear', True)),
        ("net.activation=relu", ('net.activation', 'relu')),
        ("net.upper_bound=", ('net.upper_bound', None)),
        (" run.name = cell ", ('run.name', 'cell')),
    ])
    def test_values_are_yaml_scalars(self, text, expected):
        assert parse_override(text) == expected

    def test_missing_equals_sign(self):
        with pytest.raises(ConfigError):
            parse_override("net.th")


class TestLoadConfig:

    def test_defaults_are_flat(self):
        config = load_config()
        assert config['device.anl'] == 0.0
        assert config['net.hidden'] == 300
        assert config['sweep.axes'] == {}

    def test_overlay_then_overrides(self, tmp_path):
        overlay = tmp_path / 'recipe.yaml'
        overlay.write_text("# comment\nnet:\n  th: 0.6\n  s: 1.0\n", encoding='utf-8')
        config = load_config(overlay, ['net.s=2.5'])
        assert config['net.th'] == 0.6
        assert config['net.s'] == 2.5

    def test_unknown_key_in_overlay(self, tmp_path):
        overlay = tmp_path / 'bad.yaml'
        overlay.write_text("net:\n  thresh: 0.6\n", encoding='utf-8')
        with pytest.raises(ConfigError, match="net.thresh"):
            load_config(overlay)

    def test_unknown_key_in_override(self):
        with pytest.raises(ConfigError, match="--set"):
            load_config(overrides=['device.colour=red'])

    def test_missing_overlay_names_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="missing.yaml"):
            load_config(tmp_path / 'missing.yaml')

    def test_malformed_yaml(self, tmp_path):
        overlay = tmp_path / 'broken.yaml'
        overlay.write_text("net: [unclosed\n", encoding='utf-8')
        with pytest.raises(ConfigError):
            load_config(overlay)

    def test_out_dir_from_environment(self, monkeypatch):
        monkeypatch.setenv(OUT_DIR_ENV, '/tmp/elsewhere')
        assert load_config()['out.dir'] == '/tmp/elsewhere'

    def test_sweep_axes_stay_whole(self, tmp_path):
        overlay = tmp_path / 'sweep.yaml'
        overlay.write_text("sweep:\n  axes:\n    net.th: [0.0, 0.99]\n", encoding='utf-8')
        assert load_config(overlay)['sweep.axes'] == {'net.th': [0.0, 0.99]}


class TestEcho:

    def test_flatten_unflatten(self):
        tree = {'net': {'th': 0.6}, 'sweep': {'axes': {'net.s': [0, 1]}}}
        assert flatten(tree) == {'net.th': 0.6, 'sweep.axes': {'net.s': [0, 1]}}
        assert unflatten(flatten(tree)) == tree

    def test_echo_reproduces_config(self, tmp_path):
        config = load_config(overrides=['device.anl=0.8', 'net.upper_bound=4.0', 'run.name=echo'])
        path = dump_config(config, tmp_path / 'effective_config.yaml')
        assert load_config(path) == config
        assert yaml.safe_load(path.read_text(encoding='utf-8'))['device']['anl'] == 0.8


class TestIntegerKeys:

    @pytest.mark.parametrize("value", [0, -1, 1.5, 'abc', '3', True, None, float('nan'), float('inf')])
    def test_rejects(self, value):
        with pytest.raises(ConfigError, match='run.batch'):
            config_int({'run.batch': value}, 'run.batch', minimum=1)

    def test_accepts_whole_numbers(self):
        assert config_int({'run.batch': 10}, 'run.batch', minimum=1) == 10
        assert config_int({'run.batch': 10.0}, 'run.batch', minimum=1) == 10
        assert config_int({'run.train_limit': None}, 'run.train_limit', optional=True) is None

    def test_defaults_give_run_settings(self):
        settings = run_settings_from(load_config())
        assert (settings.epochs, settings.batch, settings.seed) == (15, 10, 0)
        assert settings.train_limit is None


class TestRecipes:

    @pytest.mark.parametrize("recipe", sorted(RECIPES.glob('*.yaml')), ids=lambda p: p.stem)
    def test_recipe_expands(self, recipe):
        config = load_config(recipe)
        run_settings_from(config)
        axes = config['sweep.axes'] or {}
        if axes:
            cells = expand_cells(config, axes, config['sweep.mode'], config['sweep.seed_mode'])
            assert len({cell['run.name'] for cell in cells}) == len(cells)
