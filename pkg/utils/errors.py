"""
Исключения предметной области. Все наследуют встроенные классы, чтобы
вызывающий код мог ловить их как обычные ValueError / RuntimeError.
"""


class DimensionError(ValueError):
    """Несовместимые размерности тензоров."""


class DomainError(ValueError):
    """Аргумент вне области определения операции (например, log(x <= 0))."""


class DegenerateRayError(ValueError):
    """Луч нулевой длины: точка совпадает с центром камеры."""


class DegenerateSceneError(ValueError):
    """Все точки карты лежат в начале координат, нормировка невозможна."""


class SceneGenerationError(RuntimeError):
    """Не удалось расставить объекты за отведенное число попыток."""


class NoQueryError(ValueError):
    """Для сцены нельзя построить однозначный запрос."""


class DatasetFormatError(ValueError):
    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"строка {line_number}: {message}"
        super().__init__(message)


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class CheckpointError(ValueError):
    """Поврежденный или несовместимый файл чекпойнта."""


class ConfigMismatchError(ValueError):
    """Размерности чекпойнта не совпадают с конфигурацией модели."""


class NumericError(RuntimeError):
    def __init__(self, message: str, step: int | None = None, component: str | None = None):
        self.step = step
        self.component = component
        details = []
        if step is not None:
            details.append(f"шаг {step}")
        if component is not None:
            details.append(f"компонента {component}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class DataIOError(OSError):
    """Ошибка чтения или записи файлов набора данных."""
