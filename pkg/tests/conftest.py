from __future__ import annotations

import numpy as np
import pytest

from artifact.env import generate_garnet, make_cycle2, make_policy
from artifact.stats import Problem, compute_radii, exact_moments, problem_constants

SMOKE = dict(n_states=20, n_actions=4, branching=3, d=5)
SMOKE_GAMMA = 0.9


def smoke_garnet(seed, gamma=SMOKE_GAMMA):
    model, feats = generate_garnet(SMOKE["n_states"], SMOKE["n_actions"], SMOKE["branching"],
                                   SMOKE["d"], seed, gamma=gamma)
    S, A = model.n_states, model.n_actions
    return Problem(model, feats, make_policy("random", S, A, [seed, 1]), make_policy("uniform", S, A))


def cycle2_problem():
    model, feats = make_cycle2()
    u = make_policy("uniform", 2, 1)
    return Problem(model, feats, u, u)


class Bundle:
    def __init__(self, problem):
        self.problem = problem
        self.moments = exact_moments(problem)
        self.radii = compute_radii(self.moments)
        self.spectral = problem_constants(problem, self.moments)


@pytest.fixture(scope="session")
def cycle2():
    return Bundle(cycle2_problem())


@pytest.fixture(scope="session")
def garnet():
    return Bundle(smoke_garnet(3))


def enumerate_transitions(problem):
    """All supported (s, a, s') with their stationary weights."""
    P = problem.model.kernel
    W = problem.mu[:, None, None] * problem.behavior.probs[:, :, None] * P
    s, a, s2 = np.nonzero(W)
    return s, a, s2, W[s, a, s2]


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""

    def note(n, passed, detail=""):
        _CRITERIA[n] = (bool(passed), detail)
        print(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return note


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
