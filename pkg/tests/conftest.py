import numpy as np
import pytest


def v_quadratic(x):
    return np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)


def v_zero(x):
    return np.zeros(np.asarray(x).shape[:-1])


def w_zero(x, y):
    shape = np.broadcast(np.asarray(x)[..., 0], np.asarray(y)[..., 0]).shape
    return np.zeros(shape)


def w_sqdist(x, y):
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.sum(diff**2, axis=-1)


def v_const(c):
    def V(x):
        return np.full(np.asarray(x).shape[:-1], float(c))
    return V


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
