import pytest

from grounder.config import CONFIG_KEYS, RunConfig, load_config, parse_config
from utils.errors import ConfigError, DataIOError


def test_defaults():
    config = RunConfig()
    assert config.posenc.dim == 64
    assert config.se.blocks == 2 and config.se.heads == 4
    assert config.loss.tau == pytest.approx(0.07)
    assert config.loss.lambda_r == pytest.approx(0.3)
    assert config.train.steps == 1200 and config.train.batch_size == 8
    assert config.data.views == 4 and config.data.image_size == 64


def test_every_key_is_documented():
    assert set(RunConfig().to_flat()) == set(CONFIG_KEYS)


def test_text_round_trip(micro_run):
    assert parse_config(micro_run.to_text()) == micro_run


def test_comments_and_blank_lines():
    config = parse_config("""
# пробный запуск
train.steps = 10   # мало шагов

loss.tau = 0.1
recon.reg_sign = paper
""")
    assert config.train.steps == 10
    assert config.loss.tau == pytest.approx(0.1)
    assert config.recon.reg_sign == "paper"
    assert config.posenc.dim == 64


@pytest.mark.parametrize("text, key", [
    ("train.speed = 3", "train.speed"),
    ("train.steps = many", "train.steps"),
    ("loss.tau = 0", "loss.tau"),
    ("train.lr = 1e-3\ntrain.lr = 2e-3", "train.lr"),
    ("train.steps 10", "строка 1"),
    ("se.heads = 0", "se.heads"),
])
def test_bad_values_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key


def test_seed_from_environment(config_file):
    assert load_config(config_file, env={"G3DK_SEED": "99"}).train.seed == 99
    assert load_config(config_file, env={}).train.seed == 7
    with pytest.raises(ConfigError) as info:
        load_config(config_file, env={"G3DK_SEED": "seven"})
    assert info.value.key == "train.seed"


def test_defaults_without_file():
    assert load_config(None, env={}) == RunConfig()


def test_missing_file(tmp_path):
    with pytest.raises(DataIOError):
        load_config(tmp_path / "absent.cfg", env={})


def test_override_rejects_unknown_key():
    with pytest.raises(ConfigError):
        RunConfig().override({"model.depth": 3})
