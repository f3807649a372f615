import argparse
import sys

from rewinding.dependencies.settings import get_settings
from rewinding.routers import chains, experiments, identification
from rewinding.schemas.reports import TOOL_VERSION
from rewinding.utils.errors import (
    ChainFormatError,
    EnumerationCapError,
    IndistinguishableError,
    InvalidParameterError,
    NonCanonicalChainError,
    NotTestableError,
)
from rewinding.utils.logger import set_level, setup_logger

# Настраиваем логгер для основного модуля
logger = setup_logger("rewinding.main")

EXIT_FAILURE = 1
EXIT_IO = 2
EXIT_INDISTINGUISHABLE = 3
EXIT_CAP = 4
EXIT_PARAMETER = 5

# Порядок важен: первая подходящая запись определяет код выхода
ERROR_CODES = (
    (ChainFormatError, EXIT_IO),
    (OSError, EXIT_IO),
    (IndistinguishableError, EXIT_INDISTINGUISHABLE),
    (EnumerationCapError, EXIT_CAP),
    (InvalidParameterError, EXIT_PARAMETER),
    (NotTestableError, EXIT_PARAMETER),
    (NonCanonicalChainError, EXIT_PARAMETER),
)


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS позволяет писать флаги и до, и после имени команды
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Мастер-сид")
    common.add_argument("--out", default=argparse.SUPPRESS, help="Файл результата (по умолчанию stdout)")
    common.add_argument("--reveal", action="store_true", default=argparse.SUPPRESS, help="Показывать скрытые состояния")
    common.add_argument("--format", choices=["json"], default=argparse.SUPPRESS, help="Формат вывода")
    common.add_argument("--log-level", default=argparse.SUPPRESS, help="Уровень логирования")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="rewinding",
        description="Марковские цепи с откатом: планирование, идентификация и эксперименты",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Включаем роуты
    chains.register(subparsers, common)
    identification.register(subparsers, common)
    experiments.register(subparsers, common)
    return parser


def _apply_defaults(args: argparse.Namespace) -> argparse.Namespace:
    settings = get_settings()
    defaults = {"seed": settings.seed, "out": None, "reveal": False, "format": "json", "log_level": settings.log_level}
    for key, value in defaults.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    return args


def exit_code(error: Exception) -> int:
    for error_type, code in ERROR_CODES:
        if isinstance(error, error_type):
            return code
    return EXIT_FAILURE


def main(argv=None) -> int:
    """
    Точка входа командной строки.

    :return: Код выхода 0-5
    """
    args = _apply_defaults(build_parser().parse_args(argv))
    set_level(args.log_level)
    logger.debug(f"Команда {args.command}, сид {args.seed}")
    try:
        return args.handler(args)
    except (ValueError, OSError, RuntimeError) as e:
        code = exit_code(e)
        logger.error(f"Команда {args.command} завершилась с кодом {code}: {e}")
        print(f"ошибка: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
