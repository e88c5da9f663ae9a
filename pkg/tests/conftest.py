import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from embedmap.synthetic import default_world, emit_embeddings, generate_protocol  # noqa: E402

_acceptance = {}


@pytest.fixture(scope="session")
def world4():
    return default_world(n_systems=4)


@pytest.fixture(scope="session")
def systems4(world4):
    return [emit_embeddings(world4, k) for k in range(4)]


@pytest.fixture(scope="session")
def proto(world4):
    # the protocol depends only on identity counts and the seed
    return generate_protocol(world4)


@pytest.fixture(scope="session")
def pair01(systems4):
    return systems4[0], systems4[1]


@pytest.fixture(scope="session")
def small_world():
    from embedmap.synthetic import generate_world

    return generate_world(200, 8, 4, (16, 16), seed=7, latent_sigma=0.05)


@pytest.fixture(scope="session")
def small_data(small_world):
    sets = [emit_embeddings(small_world, k) for k in range(2)]
    return sets[0], sets[1], generate_protocol(small_world, 5, 30, 30)


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance[report.nodeid.split("::")[-1]] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance.items()):
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
