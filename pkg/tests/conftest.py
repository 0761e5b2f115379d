"""Shared test helpers: central-difference gradient oracle and tiny datasets."""

import numpy as np
import pytest

from bct.tensor import Tensor


def numeric_grad(f, arrays, h=1e-3):
    """Central-difference gradients of scalar f w.r.t. each float64 array.

    f is called with no arguments and must read the arrays in place; entries
    are perturbed one at a time and restored exactly.
    """
    grads = []
    for a in arrays:
        assert a.dtype == np.float64, "numeric_grad needs float64 inputs"
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def check_gradients(make_loss, tensors, h=1e-3, rtol=1e-5, atol=1e-7):
    """Backprop through make_loss() and compare against numeric_grad.

    Every tensor must be a float64 leaf with requires_grad=True; make_loss
    must be a pure function of their current data.
    """
    for t in tensors:
        t.grad = None
    loss = make_loss()
    loss.backward()
    # a grad left at None means the op contributed exactly zero everywhere
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    numeric = numeric_grad(lambda: make_loss().item(), [t.data for t in tensors], h=h)
    for got, want in zip(analytic, numeric):
        err = np.abs(got - want)
        tol = atol + rtol * np.abs(want)
        assert np.all(err <= tol), (
            f"gradient mismatch: max abs err {err.max():.3e}, "
            f"worst rel {np.max(err / (np.abs(want) + 1e-30)):.3e}"
        )


@pytest.fixture
def f64():
    """Factory for float64 leaf tensors that require grad."""

    def make(data):
        return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True, dtype=np.float64)

    return make
