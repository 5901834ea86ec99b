import functools

import pytest
from hypothesis import HealthCheck, settings

from mvfrenewal import presets, solver

settings.register_profile(
    "repro", derandomize=True, deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("repro")


@functools.lru_cache(maxsize=None)
def solved(name, **kw):
    """Converged solution of a preset at its default grid (cached per session)."""
    model = presets.make_preset(name, **kw)
    grid = presets.preset_grid(model)
    return model, grid, solver.picard_solve(model, grid)


def solved_kw(name, kw):
    return solved(name, **dict(kw))


@pytest.fixture(scope="session")
def classical():
    return solved("classical")


ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    """Store a one-line verdict for the acceptance summary and echo it."""
    line = f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
