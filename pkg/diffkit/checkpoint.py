"""
Бинарный формат чекпойнта параметров.

Заголовок: магические байты b"G3DK" и версия (u32). Далее записи до конца
файла: длина имени (u32), имя в UTF-8, ранг (u32), размеры (u64 каждый),
данные в little-endian float64.
"""
import logging
import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from utils.errors import CheckpointError, DataIOError

logger = logging.getLogger(__name__)

MAGIC = b"G3DK"
VERSION = 1


def save_checkpoint(path: Union[str, Path], tensors: Mapping[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, array in tensors.items():
        data = np.ascontiguousarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        chunks.append(data.tobytes())
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as e:
        raise DataIOError(f"Не удалось записать чекпойнт {path}: {e}") from e
    logger.info(f"Чекпойнт сохранен: {path} ({len(tensors)} тензоров)")


def load_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DataIOError(f"Не удалось прочитать чекпойнт {path}: {e}") from e

    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: неверная сигнатура {raw[:4]!r}")
    if len(raw) < 8:
        raise CheckpointError(f"{path}: файл обрезан в заголовке")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: неподдерживаемая версия {version}")

    tensors: Dict[str, np.ndarray] = {}
    offset = 8
    try:
        while offset < len(raw):
            (name_len,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            name = raw[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}Q", raw, offset)
            offset += 8 * rank
            count = int(np.prod(shape)) if rank else 1
            nbytes = 8 * count
            if offset + nbytes > len(raw):
                raise CheckpointError(f"{path}: запись {name} обрезана")
            tensors[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
            offset += nbytes
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: поврежденная запись ({e})") from e
    return tensors
