import argparse
from functools import partial

from rewinding.dependencies.settings import get_chain_repository, get_report_repository, get_settings
from rewinding.models.tree import NonAdaptivePlan
from rewinding.schemas.reports import ExperimentReport, PlanReport, TranscriptDump, TranscriptNode
from rewinding.services.chain import resolve_state
from rewinding.services.plan import identify, plan_identification
from rewinding.services.simulate import run_adaptive, run_plan, run_trials, success_interval
from rewinding.services.strategies import STRATEGY_NAMES, build_strategy
from rewinding.utils.errors import InvalidParameterError
from rewinding.utils.logger import setup_logger
from rewinding.utils.rng import trial_seed

# Настраиваем логгер для команд идентификации
logger = setup_logger("rewinding.routers.identification")

EXIT_OK = 0


def _pair_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("path", help="JSON-файл цепи")
    parser.add_argument("--a", required=True, help="Первое состояние пары")
    parser.add_argument("--b", required=True, help="Второе состояние пары")


def register(subparsers, common: argparse.ArgumentParser) -> None:
    """Подключает команды plan, identify и transcript."""
    parser = subparsers.add_parser("plan", parents=[common], help="Построить план идентификации")
    _pair_arguments(parser)
    parser.add_argument("--method", choices=["dijkstra", "prim"], default="dijkstra")
    parser.set_defaults(handler=plan_pair)

    parser = subparsers.add_parser("identify", parents=[common], help="Идентифицировать скрытый старт по плану")
    _pair_arguments(parser)
    parser.add_argument("--hidden", required=True, help="Скрытое начальное состояние (a или b)")
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--method", choices=["dijkstra", "prim"], default="dijkstra")
    parser.set_defaults(handler=identify_pair)

    parser = subparsers.add_parser("transcript", parents=[common], help="Один запуск стратегии с записью дерева")
    _pair_arguments(parser)
    parser.add_argument("--strategy", required=True, choices=STRATEGY_NAMES)
    parser.add_argument("--hidden", required=True)
    parser.add_argument("--budget", type=int, default=None, help="Предел запросов адаптивной стратегии")
    parser.add_argument("--D", type=int, default=None)
    parser.add_argument("--d", type=int, default=None)
    parser.add_argument("--T", type=int, default=None)
    parser.add_argument("--tau", type=int, default=None)
    parser.add_argument("--repetitions", type=int, default=None)
    parser.add_argument("--k-paths", type=int, default=None)
    parser.set_defaults(handler=transcript)


def plan_pair(args) -> int:
    """Построение плана для пары (a, b) и вывод PlanReport."""
    chain = get_chain_repository().read_chain(args.path)
    a, b = resolve_state(chain, args.a), resolve_state(chain, args.b)
    plan = plan_identification(chain, a, b, method=args.method, cap=get_settings().partition_cap)
    report = PlanReport(
        chain=chain.name,
        a=args.a,
        b=args.b,
        method=plan.method,
        path=[p.format(chain.states) for p in plan.path],
        weights=list(plan.weights),
        cost=plan.cost,
        k=plan.k,
        epsilon=plan.epsilon,
        degrees=list(plan.degrees),
        total_queries=plan.total_queries,
    )
    text = get_report_repository().write_report(report, args.out)
    if args.out is None:
        print(text, end="")
    return EXIT_OK


def _identify_trial(plan, hidden: int, seed: int, materialize_cap: int, i: int) -> dict:
    verdict = identify(plan.chain, plan.a, plan.b, hidden, trial_seed(seed, i), plan, materialize_cap)
    return {
        "trial": i,
        "verdict": None if verdict is None else plan.chain.states[verdict],
        "correct": verdict == hidden,
    }


def identify_pair(args) -> int:
    """
    Серия запусков identify с фиксированным скрытым стартом.

    trials = 0 дает пустой отчет.
    """
    settings = get_settings()
    chain = get_chain_repository().read_chain(args.path)
    a, b = resolve_state(chain, args.a), resolve_state(chain, args.b)
    hidden = resolve_state(chain, args.hidden)
    if hidden not in (a, b):
        logger.error(f"Скрытое состояние {args.hidden!r} не входит в пару")
        raise InvalidParameterError(f"--hidden должно совпадать с --a или --b, получено {args.hidden!r}")
    trials = settings.trials if args.trials is None else args.trials
    if trials < 0:
        raise InvalidParameterError(f"Число испытаний не может быть отрицательным, получено {trials}")
    records = []
    if trials:
        plan = plan_identification(chain, a, b, method=args.method, cap=settings.partition_cap)
        task = partial(_identify_trial, plan, hidden, args.seed, settings.materialize_cap)
        records = run_trials(task, trials, settings.workers)
    estimate = success_interval(sum(r["correct"] for r in records), trials)
    report = ExperimentReport(
        experiment="identify",
        parameters={
            "chain": chain.name,
            "a": args.a,
            "b": args.b,
            "hidden": args.hidden,
            "trials": trials,
            "method": args.method,
            "materialize_cap": settings.materialize_cap,
        },
        records=records,
        aggregates={"success": estimate.rate, "half_width": estimate.half_width, "correct": estimate.correct},
        seed=args.seed,
    )
    text = get_report_repository().write_report(report, args.out)
    if args.out is None:
        print(text, end="")
    return EXIT_OK


def transcript(args) -> int:
    """Запуск стратегии один раз; скрытые состояния попадают в дамп только с --reveal."""
    chain = get_chain_repository().read_chain(args.path)
    a, b = resolve_state(chain, args.a), resolve_state(chain, args.b)
    hidden = resolve_state(chain, args.hidden)
    strategy = build_strategy(
        args.strategy,
        chain,
        a,
        b,
        D=args.D,
        d=args.d,
        T=args.T,
        tau=args.tau,
        repetitions=args.repetitions,
        k_paths=args.k_paths,
    )
    if isinstance(strategy, NonAdaptivePlan):
        tree, verdict = run_plan(chain, hidden, strategy, args.seed)
    else:
        tree, verdict = run_adaptive(chain, hidden, strategy, args.budget, args.seed)
    name = strategy.name
    nodes = [
        TranscriptNode(
            parent=parent,
            observation=observation,
            hidden=chain.states[state] if args.reveal else None,
        )
        for parent, state, observation in zip(tree.parent, tree.hidden, tree.observation)
    ]
    dump = TranscriptDump(
        chain=chain.name,
        strategy=name,
        seed=args.seed,
        verdict=None if verdict is None else chain.states[verdict],
        queries=tree.queries,
        nodes=nodes,
        root_state=chain.states[tree.root_state] if args.reveal else None,
    )
    text = get_report_repository().write_report(dump, args.out)
    if args.out is None:
        print(text, end="")
    logger.info(f"Транскрипт {name}: {tree.queries} запросов, вердикт {dump.verdict}")
    return EXIT_OK
