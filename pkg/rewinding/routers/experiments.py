import argparse

from rewinding.dependencies.settings import get_experiment_service, get_report_repository
from rewinding.services.experiments import EXPERIMENTS
from rewinding.utils.errors import InvalidParameterError
from rewinding.utils.logger import setup_logger

# Настраиваем логгер для команды экспериментов
logger = setup_logger("rewinding.routers.experiments")

EXIT_OK = 0


def int_list(text: str) -> tuple[int, ...]:
    """Список целых через запятую: "8,16,32"."""
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидался список целых через запятую, получено {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("пустой список")
    return values


def register(subparsers, common: argparse.ArgumentParser) -> None:
    """Подключает команду experiment."""
    parser = subparsers.add_parser("experiment", parents=[common], help="Запустить эксперимент и записать отчет")
    parser.add_argument("name", help=f"Один из: {', '.join(EXPERIMENTS)}")
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--D", type=int, default=None, help="Число потомков (intro, reduction)")
    parser.add_argument("--d", type=int_list, default=None, help="d или список d через запятую")
    parser.add_argument("--n", type=int, default=None)
    parser.add_argument("--k", type=int_list, default=None, help="Длины путей для decouple")
    parser.add_argument("--k-paths", type=int, default=None, help="Число путей gap-различителя (по умолчанию 100n)")
    parser.add_argument("--t-children", type=int, default=None)
    parser.add_argument("--q", type=float, default=None)
    parser.add_argument("--runs", type=int, default=None, help="Запусков на план (oracle)")
    parser.add_argument("--max-nodes", type=int, default=None)
    parser.add_argument("--method", choices=["dijkstra", "prim"], default=None)
    parser.set_defaults(handler=run_experiment)


def _single(values, name: str):
    if values is None:
        return None
    if len(values) != 1:
        raise InvalidParameterError(f"Эксперимент {name} принимает одно значение d, получено {list(values)}")
    return values[0]


def experiment_params(args) -> dict:
    """Параметры конкретного эксперимента из флагов; None означает значение по умолчанию."""
    name = args.name
    if name == "intro":
        return {"D": args.D, "trials": args.trials}
    if name == "example1":
        return {"ds": args.d, "trials": args.trials}
    if name == "gap":
        return {"n": args.n, "d": _single(args.d, name), "k_paths": args.k_paths, "trials": args.trials, "t_children": args.t_children}
    if name == "decouple":
        return {"n": args.n, "ds": args.d, "ks": args.k, "trials": args.trials}
    if name == "reduction":
        return {"trials": args.trials, "q": args.q, "D": args.D}
    if name == "planner":
        return {"trials": args.trials, "method": args.method}
    if name == "oracle":
        return {"n": args.n, "max_nodes": args.max_nodes, "runs": args.runs}
    logger.error(f"Неизвестный эксперимент {name!r}")
    raise InvalidParameterError(f"Неизвестный эксперимент {name!r}; доступны {', '.join(EXPERIMENTS)}")


def run_experiment(args) -> int:
    """Запуск эксперимента; отчет пишется в --out или в stdout."""
    service = get_experiment_service()
    report = service.run(args.name, seed=args.seed, **experiment_params(args))
    text = get_report_repository().write_report(report, args.out)
    if args.out is None:
        print(text, end="")
    return EXIT_OK
