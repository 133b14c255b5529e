from sanic import Blueprint
from sanic.response import json

bp = Blueprint("health", url_prefix="/api")


@bp.get("/health")
async def health(request):
    """
    Проверка работоспособности сервиса и наличия загруженной модели.
    openapi:
    summary: Health Check
    description: Сервис отвечает всегда; model_loaded показывает, доступен ли /api/ground.
    responses:
      '200':
        description: Сервис работает.
        content:
          application/json:
            schema:
              type: object
              properties:
                status:
                  type: string
                  example: OK
                model_loaded:
                  type: boolean
                parameters:
                  type: integer
    """
    model = request.app.ctx.model
    return json({
        "status": "OK",
        "model_loaded": model is not None,
        "parameters": model.parameter_count() if model is not None else 0,
    })
