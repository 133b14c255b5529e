import os

import pytest
from sanic import Sanic

from grounder.config import RunConfig
from grounder.training import train
from harness.gradcheck import micro_config, micro_episode
from synthscene.episodes import DataConfig, generate_episodes

# несколько приложений с одним именем в одном процессе
Sanic.test_mode = True

SMALL_DATA = {"data.views": 2, "data.image_size": 16, "data.objects": 4}
SMALL_TRAIN = {"train.steps": 3, "train.batch_size": 2, "train.log_every": 1}


def pytest_collection_modifyitems(config, items):
    if os.environ.get("G3DK_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="долгий тест, включается G3DK_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def small_data() -> DataConfig:
    return DataConfig(views=2, image_size=16, objects=4)


@pytest.fixture(scope="session")
def episodes(small_data):
    generated, _ = generate_episodes(11, 6, small_data)
    return generated


@pytest.fixture(scope="session")
def micro():
    return micro_episode()


@pytest.fixture
def micro_run():
    return micro_config().override({**SMALL_DATA, **SMALL_TRAIN})


@pytest.fixture
def config_file(tmp_path, micro_run):
    path = tmp_path / "run.cfg"
    path.write_text(micro_run.to_text(), encoding="utf-8")
    return path



@pytest.fixture(scope="session")
def standard_run() -> RunConfig:
    return RunConfig()


@pytest.fixture(scope="session")
def standard_sets(standard_run):
    """Стандартный набор: 500 обучающих эпизодов (зерно 7) и 200 тестовых (зерно 8)."""
    train_set, _ = generate_episodes(7, 500, standard_run.data)
    test_set, _ = generate_episodes(8, 200, standard_run.data)
    return train_set, test_set


@pytest.fixture(scope="session")
def standard_training(tmp_path_factory, standard_sets, standard_run):
    checkpoint = tmp_path_factory.mktemp("standard") / "full.ckpt"
    result = train(standard_sets[0], standard_run, checkpoint_path=checkpoint)
    return result, checkpoint
