"""Исключения пакета. Ошибки входных данных наследуют ValueError, нарушения контракта - RuntimeError."""


class ChainFormatError(ValueError):
    """Ошибка разбора файла цепи: неизвестное поле, неверная форма матрицы и т.п."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class InvalidParameterError(ValueError):
    """Параметр вне допустимого диапазона."""


class EnumerationCapError(ValueError):
    """Точный перебор превысил бы установленный предел."""


class IndistinguishableError(ValueError):
    """Ни одно разбиение конечной стоимости не разделяет пару состояний."""


class NotTestableError(ValueError):
    """Пара неразличима на данном разбиении (d_TV = 0)."""


class NonCanonicalChainError(ValueError):
    """Операции нужна каноническая цепь."""


class StrategyContractError(RuntimeError):
    """Стратегия выбрала несуществующую вершину."""


class PathAbortedError(RuntimeError):
    """Отфильтрованный путь превысил max_len."""
