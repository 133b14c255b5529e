import logging
import os
from pathlib import Path
from typing import Optional

from sanic import Sanic

from grounder.config import load_config
from grounder.evaluation import load_model
from .routes.health import bp as health_blueprint
from .routes.attention import bp as attention_blueprint
from .routes.ground import bp as ground_blueprint

CHECKPOINT_ENV = "G3DK_CHECKPOINT"
CONFIG_ENV = "G3DK_CONFIG"
DATA_DIR_ENV = "G3DK_DATA_DIR"

logger = logging.getLogger(__name__)


def create_app(checkpoint: Optional[str] = None, config: Optional[str] = None, data_dir: Optional[str] = None):
    """
    Application factory to create and configure the Sanic app.

    Чекпойнт и конфигурация берутся из аргументов или из переменных
    окружения G3DK_CHECKPOINT / G3DK_CONFIG. Без чекпойнта /api/ground
    отвечает 503. Наборы данных читаются только из каталога data_dir
    (G3DK_DATA_DIR, по умолчанию текущий каталог).
    """
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    app = Sanic("GroundingAPI")

    app.config.OAS_URL_PREFIX = "/swagger"
    app.config.OAS_UI_DEFAULT = "swagger"
    app.config.OAS_TITLE = "Toy 3D Grounding API"
    app.config.CORS_ORIGINS = "*"
    app.config.DATA_DIR = str(Path(data_dir or os.environ.get(DATA_DIR_ENV, ".")).resolve())

    checkpoint = checkpoint or os.environ.get(CHECKPOINT_ENV)
    app.ctx.run = load_config(config or os.environ.get(CONFIG_ENV))
    app.ctx.model = None
    if checkpoint:
        app.ctx.model = load_model(checkpoint, app.ctx.run)
        logger.info(f"Модель загружена из {checkpoint}")
    else:
        logger.warning("Чекпойнт не задан, /api/ground недоступен")

    app.blueprint(health_blueprint)
    app.blueprint(attention_blueprint)
    app.blueprint(ground_blueprint)

    return app
