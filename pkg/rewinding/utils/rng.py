"""
Детерминированные потоки случайных чисел.

Испытание i при мастер-сиде s получает генератор из SeedSequence([s, i]),
поэтому добавление испытаний не меняет уже посчитанные.
"""
import numpy as np


def trial_seed(master_seed: int, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(trial_index)])


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(trial_seed(master_seed, trial_index))


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Приводит int, кортеж или SeedSequence к SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.SeedSequence([int(s) for s in seed])
    return np.random.SeedSequence(int(seed))


def split_streams(seed, count: int) -> list[np.random.Generator]:
    """Независимые генераторы, например для цепи и для монет стратегии."""
    return [np.random.default_rng(child) for child in as_seed_sequence(seed).spawn(count)]
