"""
Хранение эпизодов: JSON Lines с инлайн-сценой и запросом, кадры - в
бинарных файлах рядом, на которые строка ссылается относительным путем.

Формат кадра (little-endian):
    b"G3DF", u32 версия, u32 H, u32 W,
    9 x f64 матрица K, 16 x f64 матрица камера -> мир,
    H*W*3 байт цвета (цвет * 255), H*W x f64 глубина.
"""
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Iterator, List, Sequence, Union

import numpy as np

from utils.boxes import Aabb, ObjectProposal
from utils.camera import CameraFrame, Extrinsics, Intrinsics
from utils.errors import DataIOError, DatasetFormatError
from .episodes import GroundingEpisode
from .queries import Query
from .scene import CATEGORY_INDEX, SceneObject, SceneSpec

logger = logging.getLogger(__name__)

FRAME_MAGIC = b"G3DF"
FRAME_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_MATRICES = struct.Struct("<25d")

REQUIRED_KEYS = ("episode_id", "seed", "scene", "objects", "frames", "query", "proposals", "target_id")


def frames_dir(path: Path) -> Path:
    return path.with_name(path.stem + ".frames")


def encode_frame(frame: CameraFrame) -> bytes:
    h, w = frame.height, frame.width
    extr = np.eye(4)
    extr[:3, :3] = frame.extrinsics.rotation
    extr[:3, 3] = frame.extrinsics.translation
    color = np.clip(np.rint(frame.color * 255.0), 0, 255).astype(np.uint8)
    return b"".join([
        _HEADER.pack(FRAME_MAGIC, FRAME_VERSION, h, w),
        _MATRICES.pack(*frame.intrinsics.matrix.reshape(-1), *extr.reshape(-1)),
        color.tobytes(),
        frame.depth.astype("<f8").tobytes(),
    ])


def decode_frame(blob: bytes) -> CameraFrame:
    if len(blob) < _HEADER.size + _MATRICES.size:
        raise ValueError("файл кадра короче заголовка")
    magic, version, h, w = _HEADER.unpack_from(blob, 0)
    if magic != FRAME_MAGIC or version != FRAME_VERSION:
        raise ValueError(f"неизвестный формат кадра {magic!r} v{version}")
    values = np.array(_MATRICES.unpack_from(blob, _HEADER.size))
    k, t = values[:9].reshape(3, 3), values[9:].reshape(4, 4)
    offset = _HEADER.size + _MATRICES.size
    expected = offset + h * w * 3 + h * w * 8
    if len(blob) != expected:
        raise ValueError(f"размер файла кадра {len(blob)} != {expected}")
    color = np.frombuffer(blob, dtype=np.uint8, count=h * w * 3, offset=offset).reshape(h, w, 3)
    depth = np.frombuffer(blob, dtype="<f8", count=h * w, offset=offset + h * w * 3).reshape(h, w)
    intrinsics = Intrinsics(fx=k[0, 0], fy=k[1, 1], cx=k[0, 2], cy=k[1, 2], width=w, height=h)
    return CameraFrame(
        color=color.astype(np.float64) / 255.0,
        depth=depth.astype(np.float64),
        intrinsics=intrinsics,
        extrinsics=Extrinsics(t[:3, :3], t[:3, 3]),
    )


def _box_json(box: Aabb) -> Dict[str, List[float]]:
    return {"min": box.min_corner.tolist(), "max": box.max_corner.tolist()}


def episode_to_json(episode: GroundingEpisode, frame_paths: Sequence[str]) -> Dict[str, Any]:
    scene = episode.scene
    return {
        "episode_id": episode.episode_id,
        "seed": episode.seed,
        "scene": {"seed": scene.seed, "room": list(scene.room)},
        "objects": [
            {"id": obj.id, "category": obj.category, **_box_json(obj.box), "albedo": list(obj.albedo)}
            for obj in scene.objects
        ],
        "frames": list(frame_paths),
        "query": {
            "tokens": list(episode.query.tokens),
            "relation": episode.query.relation,
            "anchor_ids": list(episode.query.anchor_ids),
            "target_id": episode.query.target_id,
            "uniqueness": episode.query.uniqueness,
        },
        "proposals": [
            {"id": p.id, **_box_json(p.box), "category": p.gt_category} for p in episode.proposals
        ],
        "target_id": episode.target_id,
    }


def write_dataset(path: Union[str, Path], episodes: Sequence[GroundingEpisode]) -> None:
    """Пустой список дает пустой, но корректный файл."""
    path = Path(path)
    blobs = frames_dir(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if episodes:
            blobs.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as out:
            for episode in episodes:
                frame_paths = []
                for view, frame in enumerate(episode.frames):
                    name = f"{episode.episode_id:06d}_{view:02d}.bin"
                    (blobs / name).write_bytes(encode_frame(frame))
                    frame_paths.append(f"{blobs.name}/{name}")
                out.write(json.dumps(episode_to_json(episode, frame_paths)) + "\n")
    except OSError as e:
        raise DataIOError(f"Не удалось записать набор данных {path}: {e}") from e
    logger.info(f"Записано эпизодов: {len(episodes)} -> {path}")


def _aabb(record: Dict[str, Any]) -> Aabb:
    return Aabb(np.asarray(record["min"], dtype=np.float64), np.asarray(record["max"], dtype=np.float64))


def episode_from_json(record: Dict[str, Any], root: Path) -> GroundingEpisode:
    missing = [key for key in REQUIRED_KEYS if key not in record]
    if missing:
        raise ValueError(f"нет полей {missing}")
    objects = []
    for obj in record["objects"]:
        if obj["category"] not in CATEGORY_INDEX:
            raise ValueError(f"неизвестная категория {obj['category']!r}")
        objects.append(SceneObject(
            id=int(obj["id"]), category=obj["category"], box=_aabb(obj), albedo=tuple(int(c) for c in obj["albedo"])
        ))
    scene = SceneSpec(room=tuple(float(r) for r in record["scene"]["room"]), objects=objects, seed=int(record["scene"]["seed"]))
    q = record["query"]
    query = Query(
        tokens=tuple(q["tokens"]),
        relation=q["relation"],
        anchor_ids=tuple(int(a) for a in q["anchor_ids"]),
        target_id=int(q["target_id"]),
        uniqueness=q["uniqueness"],
    )
    proposals = [
        ObjectProposal(id=int(p["id"]), box=_aabb(p), gt_category=None if p.get("category") is None else int(p["category"]))
        for p in record["proposals"]
    ]
    frames = []
    for rel in record["frames"]:
        try:
            blob = (root / rel).read_bytes()
        except OSError as e:
            raise DataIOError(f"Не удалось прочитать кадр {rel}: {e}") from e
        frames.append(decode_frame(blob))
    return GroundingEpisode(
        episode_id=int(record["episode_id"]),
        seed=int(record["seed"]),
        scene=scene,
        frames=frames,
        query=query,
        proposals=proposals,
        target_id=int(record["target_id"]),
    )


def read_dataset(path: Union[str, Path]) -> Iterator[GroundingEpisode]:
    """Поток эпизодов; некорректная строка -> DatasetFormatError с ее номером."""
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"Не удалось открыть набор данных {path}: {e}") from e
    with handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("строка должна быть JSON-объектом")
                yield episode_from_json(record, path.parent)
            except DataIOError:
                raise
            except (ValueError, KeyError, TypeError) as e:
                raise DatasetFormatError(f"некорректный эпизод: {e}", line_number=line_number) from e


def load_dataset(path: Union[str, Path]) -> List[GroundingEpisode]:
    return list(read_dataset(path))
