import numpy as np
import pytest

from metaprior.nn import LayerSpec, mlp_layout


def central_difference_grad(loss_fn, values, step=1e-5):
    """Central finite differences of a scalar function of a flat vector."""
    values = np.array(values, dtype=float)
    grad = np.empty_like(values)
    for i in range(values.size):
        up = values.copy()
        down = values.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (loss_fn(up) - loss_fn(down)) / (2 * step)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_layout():
    return mlp_layout(hidden=6)


@pytest.fixture
def linear_layout():
    return (LayerSpec(1, 1, "identity"),)


_ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail=""):
    _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}"
                             + (f" ({detail})" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
