from __future__ import annotations

import functools

import numpy as np
import pytest

from tdlab.envs import ENV_NAMES, build_env, stationary_distribution
from tdlab.tdcore import enumerate_transitions, expected_matrices


@functools.lru_cache(maxsize=None)
def env_bundle(name: str):
    env = build_env(name)
    d = stationary_distribution(env)
    km = expected_matrices(env, d)
    trans, weights = enumerate_transitions(env, d)
    return env, d, km, trans, weights


@pytest.fixture(params=ENV_NAMES)
def bundle(request):
    return env_bundle(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria report one line each at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, summary: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {summary}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
