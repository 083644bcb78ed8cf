import numpy as np
import pytest

from kinverify.data import SynthConfig, build_benchmark, synth_generate

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synth():
    return synth_generate(SynthConfig(families=60, members_per_family=6, dim=8, alpha=0.8, seed=3))


@pytest.fixture(scope="session")
def small_bench(small_synth):
    return build_benchmark(small_synth, val_fraction=0.25, seed=3)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
