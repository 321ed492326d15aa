"""Shared helpers: finite-difference oracles and small random networks."""

import numpy as np

from mfpinn import network as net


def central_diff(f, x, h=1e-5):
    """Symmetric first difference of a scalar-to-scalar callable."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def central_diff2(f, x, h=1e-4):
    """Symmetric second difference of a scalar-to-scalar callable."""
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


def grad_fd(loss_of_vector, values, indices, h=1e-6):
    """Central-difference gradient entries of a flat-vector loss."""
    out = {}
    for idx in indices:
        bumped = values.copy()
        bumped[idx] += h
        up = loss_of_vector(bumped)
        bumped[idx] -= 2.0 * h
        down = loss_of_vector(bumped)
        out[idx] = (up - down) / (2.0 * h)
    return out


def random_small_arch(rng):
    """Architecture with 1-3 inputs, one or two thin hidden layers."""
    n_in = int(rng.integers(1, 4))
    n_out = int(rng.integers(1, 3))
    hidden = [int(rng.integers(2, 7))
              for _ in range(int(rng.integers(1, 3)))]
    return net.mlp([n_in] + hidden + [n_out])


def rel_err(approx, exact, floor=1e-8):
    """Relative error with an absolute floor so zeros do not explode."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return np.abs(approx - exact) / np.maximum(np.abs(exact), floor)
