import numpy as np
import pytest

from zidrm import load_two_sample, make_basis
from zidrm.simulation import generate, get_scenario

# 3 positives per sample, one zero in sample 0 and two in sample 1
TOY0 = [0.0, 0.5, 1.0, 2.0]
TOY1 = [0.0, 0.0, 1.0, 3.0, 5.0]
# arg max of the dual likelihood on TOY, found by grid search (0.01 grid on
# [-5, 5]^2, then 1e-3, 1e-4 and 1e-5 refinements) in plain Python
TOY_THETA = np.array([-0.89446, 2.02200])
TOY_ELL1 = 1.1789630889


def central_diff(f, x, h=1e-5):
    """Central differences of f (scalar or array valued) at x, derivative
    index last."""
    x = np.asarray(x, float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


@pytest.fixture
def toy():
    return load_two_sample(TOY0, TOY1)


@pytest.fixture
def log_basis():
    return make_basis("log")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def model_data():
    """A handful of simulated data sets across presets."""
    return [generate(get_scenario(f"model{k}", 80, 120), seed=3, replicate=k)
            for k in range(1, 11)]


@pytest.fixture
def symmetric_data():
    x = [0.3, 0.7, 1.1, 2.5, 4.0, 0.9]
    return load_two_sample([0, 0] + x, x[::-1] + [0, 0])
