import itertools
import logging
import time
from contextlib import closing
from pathlib import Path

from sanic import Blueprint
from sanic.response import json

from grounder.evaluation import describe_prediction
from synthscene.dataset import read_dataset
from synthscene.episodes import PROPOSAL_MODES, episode_proposals
from utils.errors import DataIOError, DatasetFormatError

logger = logging.getLogger(__name__)

bp = Blueprint("ground", url_prefix="/api")


@bp.get("/ground")
async def ground(request):
    """
    Привязка запроса одного сохраненного эпизода загруженной моделью.
    openapi:
    summary: Ground a stored episode
    parameters:
      - {name: data, in: query, required: true, schema: {type: string}, description: путь внутри каталога данных}
      - {name: index, in: query, required: true, schema: {type: integer}}
      - {name: proposals, in: query, required: false, schema: {type: string, enum: [gt, jitter]}}
    responses:
      '200':
        description: Выбранный объект, его бокс, IoU с целью, категория и ответ.
      '400':
        description: Некорректные параметры, набор не читается или эпизода нет в наборе.
      '403':
        description: Путь вне каталога данных.
      '503':
        description: Модель не загружена.
    """
    request_start_time = time.time()
    model = request.app.ctx.model
    if model is None:
        return json({"message": "Model checkpoint is not loaded"}, status=503)
    try:
        try:
            path = request.args["data"][0]
            index = int(request.args["index"][0])
        except (KeyError, ValueError) as e:
            return json({"message": f"Некорректный параметр: {e}"}, status=400)
        mode = request.args.get("proposals", "gt")
        if mode not in PROPOSAL_MODES or index < 0:
            return json({"message": f"Некорректный параметр: proposals={mode}, index={index}"}, status=400)

        root = Path(request.app.config.DATA_DIR)
        path = (root / path).resolve()
        try:
            path.relative_to(root)
        except ValueError:
            return json({"message": "Набор данных вне каталога данных сервера"}, status=403)

        try:
            with closing(read_dataset(path)) as stream:
                episode = next(itertools.islice(stream, index, None), None)
        except (DataIOError, DatasetFormatError) as e:
            return json({"message": f"Набор данных не читается: {e}"}, status=400)
        if episode is None:
            return json({"message": f"В наборе {path} нет эпизода {index}"}, status=400)
        proposals = episode_proposals(episode, mode, request.app.ctx.run.data)
        result = describe_prediction(model, episode, proposals)

        logger.info(f"Запрос /ground успешно обработан за {time.time() - request_start_time:.4f} сек.")
        return json(result)

    except Exception as e:
        logger.error(f"Ошибка в /ground: {e}", exc_info=True)
        return json({"message": "An error occurred"}, status=500)
