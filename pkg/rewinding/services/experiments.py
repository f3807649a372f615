"""Сервис экспериментов: воспроизведение утверждений о сложности запросов в масштабе рабочей станции."""
from functools import partial
from typing import TYPE_CHECKING, Any, Callable, Optional

import numpy as np

from rewinding.models.chain import POMarkovChain, StateId
from rewinding.models.tree import NonAdaptivePlan, Verdict
from rewinding.schemas.reports import ExperimentReport
from rewinding.services.chain import build_example1_chain, build_gap_chain, build_intro_chain, build_three_state_chain, random_chain
from rewinding.services.gap import (
    adaptive_gap_identify,
    decoupling_bound,
    decoupling_probability_exact,
    decoupling_probability_mc,
    expected_path_length,
    split_probability_exact,
)
from rewinding.services.oracles import empirical_tv, exact_plan_tv, iter_plans_up_to, plan_from_parents
from rewinding.services.plan import IdentificationPlan, identify, plan_identification
from rewinding.services.reduce import (
    emulate_nonadaptive,
    max_marginal_deviation,
    nonadaptive_failure_bounds,
    nonadaptive_q,
    reduce_to_canonical,
    verify_reduction,
)
from rewinding.services.simulate import run_adaptive, run_trials, sample_plan, sample_plan_batch, success_interval
from rewinding.services.strategies import (
    IntroChildrenStrategy,
    PlanStrategy,
    children_test_plan,
    example1_naive_plan,
    example1_path_plan,
)
from rewinding.utils.errors import InvalidParameterError
from rewinding.utils.logger import setup_logger
from rewinding.utils.rng import as_seed_sequence, trial_rng, trial_seed

if TYPE_CHECKING:
    from rewinding.dependencies.settings import Settings

logger = setup_logger("rewinding.services.experiments")

EXPERIMENTS = ("intro", "example1", "gap", "decouple", "reduction", "planner", "oracle")


def plan_verdict(chain: POMarkovChain, x0: StateId, plan: NonAdaptivePlan, seed) -> Verdict:
    """Вердикт плана без построения QueryTree."""
    rng = np.random.default_rng(as_seed_sequence(seed))
    hidden = sample_plan(chain, x0, plan, rng)
    return plan.decision(chain.observation[hidden])


def _hidden(a: StateId, b: StateId, i: int) -> StateId:
    return a if i % 2 == 0 else b


def _intro_trial(chain: POMarkovChain, strategy: IntroChildrenStrategy, seed: int, i: int) -> dict[str, Any]:
    hidden = _hidden(strategy.a, strategy.b, i)
    tree, verdict = run_adaptive(chain, hidden, strategy, None, trial_seed(seed, i))
    return {
        "trial": i,
        "hidden": chain.states[hidden],
        "verdict": None if verdict is None else chain.states[verdict],
        "correct": verdict == hidden,
        "queries": tree.queries,
    }


def _plan_trial(chain: POMarkovChain, plan: NonAdaptivePlan, a: StateId, b: StateId, seed: int, i: int) -> bool:
    hidden = _hidden(a, b, i)
    return plan_verdict(chain, hidden, plan, trial_seed(seed, i)) == hidden


def _gap_trial(chain: POMarkovChain, k_paths: int, t_children: int, seed: int, i: int) -> dict[str, Any]:
    hidden = chain.index("q1") if i % 2 == 0 else chain.index("q2")
    stats = adaptive_gap_identify(chain, hidden, k_paths, t_children, seed=trial_seed(seed, i))
    record = {"trial": i, "hidden": chain.states[hidden], "correct": stats.verdict == chain.states[hidden]}
    record.update(stats.model_dump())
    return record


def _identify_trial(plan: IdentificationPlan, materialize_cap: int, seed: int, i: int) -> bool:
    hidden = _hidden(plan.a, plan.b, i)
    return identify(plan.chain, plan.a, plan.b, hidden, trial_seed(seed, i), plan, materialize_cap) == hidden


def _rate(correct: int, trials: int) -> dict[str, Any]:
    estimate = success_interval(correct, trials)
    return {"success": estimate.rate, "half_width": estimate.half_width, "correct": estimate.correct, "trials": trials}


class ExperimentService:
    """
    Сервис экспериментов. Каждый метод возвращает ExperimentReport,
    в параметрах которого перечислены все использованные значения по умолчанию.
    """

    def __init__(self, settings: "Settings"):
        """
        Инициализация сервиса.

        :param settings: Настройки (число испытаний, процессы, пределы)
        """
        self.settings = settings
        self._runners: dict[str, Callable[..., ExperimentReport]] = {
            "intro": self.intro,
            "example1": self.example1,
            "gap": self.gap,
            "decouple": self.decouple,
            "reduction": self.reduction,
            "planner": self.planner,
            "oracle": self.oracle,
        }
        logger.debug(f"Инициализирован ExperimentService: испытаний {settings.trials}, процессов {settings.workers}")

    def run(self, name: str, **params) -> ExperimentReport:
        """Запуск эксперимента по имени; параметры со значением None заменяются значениями по умолчанию."""
        try:
            runner = self._runners[name]
        except KeyError:
            logger.error(f"Неизвестный эксперимент {name!r}")
            raise InvalidParameterError(f"Неизвестный эксперимент {name!r}; доступны {', '.join(EXPERIMENTS)}") from None
        report = runner(**{key: value for key, value in params.items() if value is not None})
        logger.info(f"Эксперимент {name} завершен: {report.aggregates}")
        return report

    def _trials(self, trials: Optional[int]) -> int:
        trials = self.settings.trials if trials is None else trials
        if trials < 0:
            raise InvalidParameterError(f"Число испытаний не может быть отрицательным, получено {trials}")
        return trials

    def _seed(self, seed: Optional[int]) -> int:
        return self.settings.seed if seed is None else seed

    def intro(self, D: int = 7, trials: Optional[int] = None, seed: Optional[int] = None) -> ExperimentReport:
        """Вводная цепь: стратегия D потомков одного шага, a против a'."""
        trials, seed = self._trials(trials), self._seed(seed)
        chain = build_intro_chain()
        strategy = IntroChildrenStrategy(chain.index("a"), chain.index("a'"), D)
        records = run_trials(partial(_intro_trial, chain, strategy, seed), trials, self.settings.workers)
        correct = sum(r["correct"] for r in records)
        aggregates = _rate(correct, trials)
        aggregates["exact_success"] = 1.0 - 2.0**-D
        aggregates["mean_queries"] = float(np.mean([r["queries"] for r in records])) if records else 0.0
        return ExperimentReport(
            experiment="intro",
            parameters={"D": D, "trials": trials, "chain": chain.name},
            records=records,
            aggregates=aggregates,
            seed=seed,
        )

    def example1(
        self,
        ds: tuple[int, ...] = (8, 16, 32),
        trials: Optional[int] = None,
        repetitions: int = 10,
        test_factor: int = 3,
        seed: Optional[int] = None,
    ) -> ExperimentReport:
        """Пример 1: наивная звезда против плана с путями для нескольких d."""
        trials, seed = self._trials(trials), self._seed(seed)
        records = []
        queries: dict[str, list[int]] = {"naive": [], "path": []}
        for d in ds:
            chain = build_example1_chain(d)
            a, b = chain.index("a"), chain.index("a'")
            plans = {
                "naive": example1_naive_plan(a, b, d),
                "path": example1_path_plan(a, b, d, repetitions, test_factor),
            }
            for label, plan in plans.items():
                outcomes = run_trials(partial(_plan_trial, chain, plan, a, b, seed), trials, self.settings.workers)
                record = {"d": d, "strategy": label, "queries": plan.queries}
                record.update(_rate(sum(outcomes), trials))
                records.append(record)
                queries[label].append(plan.queries)
                logger.info(f"Пример 1, d={d}, {label}: успех {record['success']:.3f}, запросов {plan.queries}")
        aggregates = {
            f"{label}_growth_ratios": [q2 / q1 for q1, q2 in zip(counts, counts[1:])]
            for label, counts in queries.items()
        }
        aggregates["min_success"] = {
            label: min((r["success"] for r in records if r["strategy"] == label), default=0.0) for label in queries
        }
        return ExperimentReport(
            experiment="example1",
            parameters={"ds": list(ds), "trials": trials, "repetitions": repetitions, "test_factor": test_factor},
            records=records,
            aggregates=aggregates,
            seed=seed,
        )

    def gap(
        self,
        n: int = 6,
        d: int = 8,
        k_paths: Optional[int] = None,
        trials: Optional[int] = None,
        t_children: Optional[int] = None,
        seed: Optional[int] = None,
    ) -> ExperimentReport:
        """Адаптивный различитель gap-цепи, q1 против q2."""
        trials, seed = self._trials(trials), self._seed(seed)
        k_paths = 100 * n if k_paths is None else k_paths
        t_children = self.settings.t_children if t_children is None else t_children
        chain = build_gap_chain(n, d)
        records = run_trials(partial(_gap_trial, chain, k_paths, t_children, seed), trials, self.settings.workers)
        limit = 5000 * n * n * d
        total = [r["total_queries"] for r in records]
        aggregates = _rate(sum(r["correct"] for r in records), trials)
        first, second = expected_path_length(n, d, 1), expected_path_length(n, d, 2)
        aggregates.update(
            {
                "mean_queries": float(np.mean(total)) if total else 0.0,
                "query_limit": limit,
                "within_limit_fraction": float(np.mean([q <= limit for q in total])) if total else 0.0,
                "aborted": sum(r["aborted"] for r in records),
                "expected_length_q1": first.mean,
                "expected_length_q2": second.mean,
                "halved_length_q1": first.halved_mean,
                "halved_length_q2": second.halved_mean,
                "mean_length_q1": _mean_where(records, "q1"),
                "mean_length_q2": _mean_where(records, "q2"),
            }
        )
        return ExperimentReport(
            experiment="gap",
            parameters={"n": n, "d": d, "k_paths": k_paths, "trials": trials, "t_children": t_children},
            records=records,
            aggregates=aggregates,
            seed=seed,
        )

    def decouple(
        self,
        n: int = 5,
        ds: tuple[int, ...] = (2, 4),
        ks: tuple[int, ...] = (4, 8, 16),
        trials: int = 100_000,
        seed: Optional[int] = None,
    ) -> ExperimentReport:
        """
        Частоты двух событий связанной пары против замкнутой границы для сетки (d, k).

        violation относится к событию границы; split_exceeds_bound отмечает точки,
        где фактическое расхождение блужданий выходит за границу.
        """
        seed = self._seed(seed)
        records = []
        for index, (d, k) in enumerate((d, k) for d in ds for k in ks):
            estimate = decoupling_probability_mc(n, d, k, trials, seed=(seed, index))
            bound = decoupling_bound(n, d, k)
            records.append(
                {
                    "n": n,
                    "d": d,
                    "k": k,
                    "estimate": estimate.covered.estimate,
                    "standard_error": estimate.covered.standard_error,
                    "exact": decoupling_probability_exact(n, d, k),
                    "split_estimate": estimate.split.estimate,
                    "split_standard_error": estimate.split.standard_error,
                    "split_exact": split_probability_exact(n, d, k),
                    "bound": bound,
                    "violation": estimate.covered.estimate > bound + 3 * estimate.covered.standard_error,
                    "split_exceeds_bound": estimate.split.estimate > bound + 3 * estimate.split.standard_error,
                }
            )
        return ExperimentReport(
            experiment="decouple",
            parameters={"n": n, "ds": list(ds), "ks": list(ks), "trials": trials},
            records=records,
            aggregates={
                "violations": sum(r["violation"] for r in records),
                "split_exceeds_bound": sum(r["split_exceeds_bound"] for r in records),
                "points": len(records),
            },
            seed=seed,
        )

    def reduction(
        self,
        trials: Optional[int] = None,
        q: float = 0.5,
        D: int = 7,
        nonadaptive_trials: int = 200,
        c1: float = 20,
        c2: float = 120,
        seed: Optional[int] = None,
    ) -> ExperimentReport:
        """
        Сведение трехсостоянийной цепи: стратегия D потомков (s3 против s2)
        на исходной цепи и ее адаптивная и неадаптивная эмуляции.
        """
        trials, seed = self._trials(trials), self._seed(seed)
        source = build_three_state_chain()
        a, b = source.index("s3"), source.index("s2")
        plan = children_test_plan(a, b, D, symbol=0)
        reduction = reduce_to_canonical(source, q)
        deviation = max_marginal_deviation(reduction)
        records: list[dict[str, Any]] = []
        aggregates: dict[str, Any] = {"max_marginal_deviation": deviation, "alphabet_size": reduction.k}
        if trials:
            report = verify_reduction(source, a, b, PlanStrategy(plan), trials, seed, q=q)
            records.append({"mode": "adaptive", **report.model_dump()})
            aggregates["success_difference"] = report.success_difference
            aggregates["overhead_ratio"] = report.overhead_ratio
            aggregates["overhead_limit"] = 8 * reduction.k

        if nonadaptive_trials:
            na_reduction = reduce_to_canonical(source, nonadaptive_q(plan.size, c1))
            emulated = emulate_nonadaptive(na_reduction, plan, c1, c2)
            source_correct = sum(
                plan_verdict(source, _hidden(a, b, i), plan, (seed, i, 0)) == _hidden(a, b, i)
                for i in range(nonadaptive_trials)
            )
            target_correct = sum(
                plan_verdict(na_reduction.target, _hidden(a, b, i), emulated, (seed, i, 1)) == _hidden(a, b, i)
                for i in range(nonadaptive_trials)
            )
            continuation_bound, bundle_bound = nonadaptive_failure_bounds(plan.size, c1, c2)
            records.append(
                {
                    "mode": "nonadaptive",
                    "source_success": source_correct / nonadaptive_trials,
                    "target_success": target_correct / nonadaptive_trials,
                    "source_queries": plan.queries,
                    "target_queries": emulated.queries,
                    "continuation_failure_bound": continuation_bound,
                    "bundle_failure_bound": bundle_bound,
                    "trials": nonadaptive_trials,
                }
            )
        return ExperimentReport(
            experiment="reduction",
            parameters={
                "trials": trials,
                "q": q,
                "D": D,
                "nonadaptive_trials": nonadaptive_trials,
                "c1": c1,
                "c2": c2,
                "chain": source.name,
            },
            records=records,
            aggregates=aggregates,
            seed=seed,
        )

    def planner(self, trials: Optional[int] = None, method: str = "dijkstra", seed: Optional[int] = None) -> ExperimentReport:
        """План по пути разбиений на трех парах: вводная цепь, пример 1 (d=8), gap (n=5, d=4)."""
        trials, seed = self._trials(trials), self._seed(seed)
        cases = [
            (build_intro_chain(), "a", "a'"),
            (build_example1_chain(8), "a", "a'"),
            (build_gap_chain(5, 4), "q1", "q2"),
        ]
        records = []
        for chain, label_a, label_b in cases:
            plan = plan_identification(
                chain, chain.index(label_a), chain.index(label_b), method=method, cap=self.settings.partition_cap
            )
            outcomes = run_trials(
                partial(_identify_trial, plan, self.settings.materialize_cap, seed), trials, self.settings.workers
            )
            record = {
                "chain": chain.name,
                "a": label_a,
                "b": label_b,
                "path": [p.format(chain.states) for p in plan.path],
                "weights": list(plan.weights),
                "epsilon": plan.epsilon,
                "degrees": list(plan.degrees),
                "total_queries": plan.total_queries,
            }
            record.update(_rate(sum(outcomes), trials))
            records.append(record)
        return ExperimentReport(
            experiment="planner",
            parameters={"trials": trials, "method": method, "materialize_cap": self.settings.materialize_cap},
            records=records,
            aggregates={"min_success": min((r["success"] for r in records), default=0.0)},
            seed=seed,
        )

    def oracle(self, n: int = 5, max_nodes: int = 5, runs: int = 100_000, seed: Optional[int] = None) -> ExperimentReport:
        """Точная TV каждого плана из не более max_nodes вершин против оценки Монте-Карло."""
        seed = self._seed(seed)
        chain = random_chain(n, trial_rng(seed, 0))
        a, b = 0, 1
        records = []
        for index, parent in enumerate(iter_plans_up_to(max_nodes)):
            plan = plan_from_parents(parent)
            exact = exact_plan_tv(chain, plan, a, b, self.settings.enumeration_cap)
            rng_a, rng_b = trial_rng(seed, 2 * index + 1), trial_rng(seed, 2 * index + 2)
            obs_a = chain.observation[sample_plan_batch(chain, a, plan, runs, rng_a)]
            obs_b = chain.observation[sample_plan_batch(chain, b, plan, runs, rng_b)]
            estimate = empirical_tv(obs_a, obs_b, chain.alphabet_size)
            records.append({"parent": parent, "exact": exact, "estimate": estimate, "deviation": abs(exact - estimate)})
        max_deviation = max((r["deviation"] for r in records), default=0.0)
        return ExperimentReport(
            experiment="oracle",
            parameters={"n": n, "max_nodes": max_nodes, "runs": runs, "chain": chain.name},
            records=records,
            aggregates={"plans": len(records), "max_deviation": max_deviation, "tolerance": 0.03},
            seed=seed,
        )


def _mean_where(records: list[dict[str, Any]], hidden: str) -> Optional[float]:
    values = [r["mean_length"] for r in records if r["hidden"] == hidden and r["mean_length"] is not None]
    return float(np.mean(values)) if values else None

