import numpy as np
import pytest

from rewinding.services.chain import (
    build_example1_chain,
    build_gap_chain,
    build_intro_chain,
    build_three_state_chain,
    random_chain,
)
from rewinding.storage import FileChainRepository


@pytest.fixture
def intro_chain():
    return build_intro_chain()


@pytest.fixture
def example1_chain():
    return build_example1_chain(8)


@pytest.fixture
def gap_chain():
    return build_gap_chain(5, 4)


@pytest.fixture
def three_state_chain():
    return build_three_state_chain()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_chains():
    """Фиксированный набор случайных канонических цепей."""
    generator = np.random.default_rng(2024)
    return [random_chain(int(generator.integers(3, 7)), generator) for _ in range(50)]


@pytest.fixture
def repository():
    return FileChainRepository()


@pytest.fixture
def chain_file(tmp_path, repository, intro_chain):
    path = tmp_path / "intro.json"
    repository.write_chain(intro_chain, path)
    return path
