"""Shared grids, corpora and solved problems for the test suite."""

from pathlib import Path

import numpy as np
import pytest

from fmfg.config import SolverConfig
from fmfg.function_spaces import random_corpus
from fmfg.mfg import solve_mfg_fixed_point
from fmfg.model import benchmark_problem
from fmfg.spectral_core import SpectralField, make_grid

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture(scope="session")
def grid1d():
    return make_grid(1, 64)


@pytest.fixture(scope="session")
def grid2d():
    return make_grid(2, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def corpus1d(grid1d):
    return random_corpus(grid1d, seed=7, samples=20)


@pytest.fixture(scope="session")
def cosine1d(grid1d):
    return SpectralField.from_function(grid1d, lambda x: np.cos(2 * np.pi * x))


@pytest.fixture(scope="session")
def bench_problem():
    return benchmark_problem()


@pytest.fixture(scope="session")
def bench_config():
    return SolverConfig(nt=400, integrator="etd1")


@pytest.fixture(scope="session")
def solved_benchmark(bench_problem, bench_config):
    return solve_mfg_fixed_point(bench_problem, bench_config)
