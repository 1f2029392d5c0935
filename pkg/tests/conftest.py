"""Shared fixtures: the synthetic benchmark and one full pipeline run.

The benchmark run takes about a second but several test modules want its
artifacts, so it is session-scoped and executed once.
"""

import pytest

from textrules.fixture import FixtureBackend, benchmark_config, benchmark_setup
from textrules.pipeline import run_pipeline


@pytest.fixture(scope="session")
def bench():
    return benchmark_setup()


@pytest.fixture(scope="session")
def bench_config():
    return benchmark_config()


@pytest.fixture(scope="session")
def bench_result(bench, bench_config, tmp_path_factory):
    """One full benchmark run with a fresh backend, shared read-only."""
    out_dir = tmp_path_factory.mktemp("bench_run")
    backend = FixtureBackend(bench.fixture_spec)
    return run_pipeline(bench_config, bench.corpus, out_dir, backend=backend)
