import argparse
from pathlib import Path

from rewinding.dependencies.settings import get_chain_repository, get_report_repository
from rewinding.services.chain import BUILDERS, validate
from rewinding.services.reduce import CanonicalReduction, reduce_to_canonical
from rewinding.utils.errors import InvalidParameterError
from rewinding.utils.logger import setup_logger

# Настраиваем логгер для команд работы с цепями
logger = setup_logger("rewinding.routers.chains")

EXIT_OK = 0
EXIT_INVALID = 1


def register(subparsers, common: argparse.ArgumentParser) -> None:
    """Подключает команды validate, build и reduce."""
    parser = subparsers.add_parser("validate", parents=[common], help="Проверить файл цепи")
    parser.add_argument("path", help="JSON-файл цепи")
    parser.set_defaults(handler=validate_chain)

    parser = subparsers.add_parser("build", parents=[common], help="Записать цепь-пример в файл")
    parser.add_argument("name", choices=sorted(BUILDERS))
    parser.add_argument("--d", type=int, default=8, help="Параметр d (example1, gap)")
    parser.add_argument("--n", type=int, default=5, help="Число состояний gap-цепи")
    parser.add_argument("--m", type=int, default=3, help="Число слоев цепи ацикличности")
    parser.set_defaults(handler=build_chain)

    parser = subparsers.add_parser("reduce", parents=[common], help="Свести цепь к канонической")
    parser.add_argument("path", help="JSON-файл исходной цепи")
    parser.add_argument("--q", type=float, default=0.5, help="Вероятность обычного шага, 0 < q < 1")
    parser.set_defaults(handler=reduce_chain)


def validate_chain(args) -> int:
    """
    Проверка файла цепи.

    :return: 0, если цепь корректна, иначе 1
    """
    chain = get_chain_repository().read_chain(args.path)
    report = validate(chain)
    text = get_report_repository().write_report(report, args.out)
    if args.out is None:
        print(text, end="")
    if not report.ok:
        logger.warning(f"Цепь {chain.name!r} не прошла проверку")
        return EXIT_INVALID
    logger.info(f"Цепь {chain.name!r} корректна, каноническая: {report.canonical}")
    return EXIT_OK


def build_chain(args) -> int:
    """Построение цепи-примера по имени."""
    builder = BUILDERS[args.name]
    if args.name == "example1":
        chain = builder(args.d)
    elif args.name == "gap":
        chain = builder(args.n, args.d)
    elif args.name.startswith("acyclicity"):
        chain = builder(args.m)
    else:
        chain = builder()
    repository = get_chain_repository()
    if args.out is None:
        print(repository.dumps(chain), end="")
    else:
        repository.write_chain(chain, args.out)
    return EXIT_OK


def phi_map(reduction: CanonicalReduction) -> dict:
    """Описание отображения phi для файла-спутника."""
    source, target = reduction.source, reduction.target
    return {
        "source": source.name,
        "target": target.name,
        "q": reduction.q,
        "alphabet_size": reduction.k,
        "phi": {source.states[x]: target.states[image] for x, image in enumerate(reduction.phi)},
        "dummy_paths": {
            f"{source.states[x]}->{source.states[y]}": [target.states[u] for u in path]
            for (x, y), path in reduction.dummy_paths.items()
        },
        "special_states": [target.states[u] for u in reduction.special_states],
    }


def sidecar_path(out: str) -> Path:
    path = Path(out)
    return path.with_name(path.stem + ".phi.json")


def reduce_chain(args) -> int:
    """Сведение к канонической цепи; при --out рядом пишется файл-спутник с отображением phi."""
    if not 0.0 < args.q < 1.0:
        raise InvalidParameterError(f"q должно лежать в (0, 1), получено {args.q}")
    repository = get_chain_repository()
    reduction = reduce_to_canonical(repository.read_chain(args.path), args.q)
    if args.out is None:
        print(repository.dumps(reduction.target), end="")
        return EXIT_OK
    repository.write_chain(reduction.target, args.out)
    get_report_repository().write_json(phi_map(reduction), sidecar_path(args.out))
    return EXIT_OK
