"""
Исключения пакета cquant и соответствующие им коды завершения CLI.
"""


class QuantizationError(Exception):
    """Базовое исключение пакета."""

    exit_code = 1


class ConfigurationError(QuantizationError, ValueError):
    """Некорректная фигура, мера или сценарий."""

    exit_code = 2


class UsageError(QuantizationError, ValueError):
    """Некорректные аргументы операции: пустой кодбук, lambda <= 0, r < 1 и т.п."""

    exit_code = 3


class ResourceError(QuantizationError):
    """Превышен вычислительный бюджет (глубина Кантора, полный перебор)."""

    exit_code = 4


class DegenerateError(QuantizationError):
    """Численное вырождение, которое сценарий не допускает."""

    exit_code = 5
