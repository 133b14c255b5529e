"""
Конфигурация запуска: плоский текстовый файл `ключ = значение` с точечными
секциями (posenc.*, se.*, recon.*, loss.*, train.*, model.*, data.*).

Строки `#` - комментарии. У каждого ключа есть значение по умолчанию;
неизвестный ключ или значение, которое не разбирается, дают ConfigError с
именем ключа.
"""
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

from synthscene.episodes import DataConfig
from utils.errors import ConfigError, DataIOError
from .grounding import LossWeights
from .posenc import PosEncConfig
from .recon import ReconConfig

logger = logging.getLogger(__name__)

SEED_ENV = "G3DK_SEED"


@dataclass(frozen=True)
class SEConfig:
    blocks: int = 2
    heads: int = 4

    def __post_init__(self):
        if self.blocks < 0:
            raise ConfigError("se.blocks", "должно быть >= 0")
        if self.heads < 1:
            raise ConfigError("se.heads", "должно быть >= 1")


@dataclass(frozen=True)
class LossConfig:
    lambda_g: float = 1.0
    lambda_r: float = 0.3
    lambda_l: float = 1.0
    tau: float = 0.07

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("loss.tau", "температура должна быть положительной")
        LossWeights(self.lambda_g, self.lambda_r, self.lambda_l)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_g, self.lambda_r, self.lambda_l)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    encoder_lr_scale: float = 1.0
    steps: int = 1200
    batch_size: int = 8
    warmup_ratio: float = 0.05
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 7
    workers: int = 1
    log_every: int = 50

    def __post_init__(self):
        checks = {
            "lr": self.lr > 0,
            "encoder_lr_scale": self.encoder_lr_scale > 0,
            "steps": self.steps >= 1,
            "batch_size": self.batch_size >= 1,
            "warmup_ratio": 0 <= self.warmup_ratio < 1,
            "weight_decay": self.weight_decay >= 0,
            "beta1": 0 <= self.beta1 < 1,
            "beta2": 0 <= self.beta2 < 1,
            "eps": self.eps > 0,
            "workers": self.workers >= 1,
            "log_every": self.log_every >= 1,
        }
        for key, ok in checks.items():
            if not ok:
                raise ConfigError(f"train.{key}", f"недопустимое значение {getattr(self, key)!r}")


@dataclass(frozen=True)
class ModelSection:
    patch_size: int = 8
    fusion_blocks: int = 2
    max_query_len: int = 16

    def __post_init__(self):
        if self.patch_size < 1:
            raise ConfigError("model.patch_size", "должно быть >= 1")
        if self.fusion_blocks < 0:
            raise ConfigError("model.fusion_blocks", "должно быть >= 0")
        if self.max_query_len < 1:
            raise ConfigError("model.max_query_len", "должно быть >= 1")


@dataclass(frozen=True)
class RunConfig:
    posenc: PosEncConfig = field(default_factory=PosEncConfig)
    se: SEConfig = field(default_factory=SEConfig)
    recon: ReconConfig = field(default_factory=ReconConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelSection = field(default_factory=ModelSection)
    data: DataConfig = field(default_factory=DataConfig)

    def to_flat(self) -> Dict[str, Any]:
        flat = {}
        for section in fields(self):
            for key, value in asdict(getattr(self, section.name)).items():
                flat[f"{section.name}.{key}"] = value
        return flat

    def to_text(self) -> str:
        return "".join(f"{key} = {value}\n" for key, value in self.to_flat().items())

    def override(self, values: Mapping[str, Any]) -> "RunConfig":
        """Копия с замененными значениями по точечным ключам."""
        sections: Dict[str, Dict[str, Any]] = {}
        for key, value in values.items():
            section, name = _split_key(key)
            sections.setdefault(section, {})[name] = value
        return replace(self, **{
            section: replace(getattr(self, section), **changes) for section, changes in sections.items()
        })


SECTIONS: Dict[str, type] = {
    "posenc": PosEncConfig,
    "se": SEConfig,
    "recon": ReconConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "model": ModelSection,
    "data": DataConfig,
}

CONFIG_KEYS: Dict[str, str] = {
    "posenc.dim": "ширина признаков патчей и токенов",
    "posenc.num_freqs": "число частот синусоидального кода на ось",
    "posenc.coord_scale": "масштаб координат в метрах для частот 2^k / scale",
    "posenc.pool_kernel": "сторона окна усреднения патчей",
    "posenc.ray_mlp_hidden": "скрытый слой MLP кода лучей",
    "se.blocks": "число структурных блоков внимания",
    "se.heads": "число голов внимания",
    "recon.alpha": "вес логарифмического регуляризатора уверенности",
    "recon.reg_sign": "знак регуляризатора: reward или paper",
    "recon.decoder_blocks": "число блоков декодера карт точек",
    "loss.lambda_g": "вес потери привязки",
    "loss.lambda_r": "вес потери реконструкции",
    "loss.lambda_l": "вес языковой потери",
    "loss.tau": "температура InfoNCE",
    "train.lr": "пиковая скорость обучения",
    "train.encoder_lr_scale": "множитель скорости обучения эмбеддинга патчей",
    "train.steps": "число шагов оптимизатора",
    "train.batch_size": "эпизодов на шаг (накопление градиентов)",
    "train.warmup_ratio": "доля шагов линейного разогрева",
    "train.weight_decay": "развязанный weight decay AdamW",
    "train.beta1": "коэффициент первого момента",
    "train.beta2": "коэффициент второго момента",
    "train.eps": "стабилизатор знаменателя AdamW",
    "train.seed": "зерно всех случайных величин (переопределяется G3DK_SEED)",
    "train.workers": "число потоков для прямых проходов пакета",
    "train.log_every": "период строк журнала в шагах",
    "model.patch_size": "сторона патча в пикселях",
    "model.fusion_blocks": "блоки совместного внимания над визуальными и текстовыми токенами",
    "model.max_query_len": "максимальная длина запроса в токенах",
    "data.views": "число видов в эпизоде",
    "data.image_size": "сторона кадра в пикселях",
    "data.objects": "объектов в сцене",
    "data.room_x": "размер комнаты по x, м",
    "data.room_y": "размер комнаты по y, м",
    "data.room_z": "высота комнаты, м",
    "data.fov_deg": "горизонтальный угол обзора камеры",
    "data.jitter_center": "СКО сдвига центра бокса в режиме jitter, м",
    "data.jitter_scale": "СКО логарифма множителя размера в режиме jitter",
}


def _split_key(key: str) -> Tuple[str, str]:
    if key not in CONFIG_KEYS:
        raise ConfigError(key, "неизвестный ключ")
    section, name = key.split(".", 1)
    return section, name


def _field_type(key: str) -> type:
    section, name = _split_key(key)
    default = getattr(SECTIONS[section](), name)
    return type(default)


def _parse_value(key: str, raw: str) -> Any:
    kind = _field_type(key)
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(key, f"ожидалось {kind.__name__}, получено {raw!r}") from None
    return raw


def parse_config(text: str) -> RunConfig:
    values: Dict[str, Any] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"строка {line_number}", f"ожидалось 'ключ = значение', получено {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(key, f"ключ повторяется (строка {line_number})")
        values[key] = _parse_value(key, raw)
    return RunConfig().override(values)


def load_config(path: Union[str, Path, None] = None, env: Mapping[str, str] = os.environ) -> RunConfig:
    """
    Конфигурация из файла (или значения по умолчанию при path=None) с
    переопределением зерна из переменной окружения G3DK_SEED.
    """
    config = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise DataIOError(f"Не удалось прочитать конфигурацию {path}: {e}") from e
        config = parse_config(text)
    seed = env.get(SEED_ENV)
    if seed is not None:
        try:
            config = config.override({"train.seed": int(seed)})
        except ValueError:
            raise ConfigError("train.seed", f"{SEED_ENV}={seed!r} не является целым числом") from None
        logger.info(f"Зерно переопределено из {SEED_ENV}: {seed}")
    return config
