import logging
import time

from sanic import Blueprint
from sanic.response import json

from grounder.se_attention import flops_estimate

logger = logging.getLogger(__name__)

bp = Blueprint("attention", url_prefix="/api")


@bp.get("/attention_cost")
async def attention_cost(request):
    """
    Аналитическое число операций разделенного и совместного внимания.
    openapi:
    summary: Attention cost
    parameters:
      - {name: views, in: query, required: true, schema: {type: integer}}
      - {name: patches, in: query, required: true, schema: {type: integer}}
      - {name: dim, in: query, required: true, schema: {type: integer}}
    responses:
      '200':
        description: Стоимость обоих вариантов и их отношение.
      '400':
        description: Отсутствующий или некорректный параметр.
    """
    request_start_time = time.time()
    try:
        try:
            views = int(request.args["views"][0])
            patches = int(request.args["patches"][0])
            dim = int(request.args["dim"][0])
        except (KeyError, ValueError) as e:
            return json({"message": f"Некорректный параметр: {e}"}, status=400)
        if views < 1 or patches < 1 or dim < 1:
            return json({"message": "views, patches и dim должны быть >= 1"}, status=400)

        divided = flops_estimate(views, patches, dim, "divided")
        joint = flops_estimate(views, patches, dim, "joint")

        logger.info(f"Запрос /attention_cost успешно обработан за {time.time() - request_start_time:.4f} сек.")
        return json({
            "views": views,
            "patches": patches,
            "dim": dim,
            "divided_flops": divided,
            "joint_flops": joint,
            "ratio": divided / joint,
        })

    except Exception as e:
        logger.error(f"Ошибка в /attention_cost: {e}", exc_info=True)
        return json({"message": "An error occurred"}, status=500)
