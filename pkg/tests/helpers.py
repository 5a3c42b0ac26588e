"""Shared test utilities: finite-difference oracles and tiny fixtures."""

from __future__ import annotations

import numpy as np

from pjfit import autodiff as ad
from pjfit.autodiff import Tensor


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max over elements of |a - n| / max(1, |a|)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))


def finite_difference_grads(loss_fn, tensors: list[Tensor], h: float = 1e-6):
    """Central-difference gradients of a scalar loss wrt each tensor's data.

    ``loss_fn`` must rebuild the forward pass from the tensors' current
    buffers and return a float.
    """
    grads = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            g[i] = (up - down) / (2.0 * h)
        grads.append(g.reshape(t.data.shape))
    return grads


def check_op_gradients(build_loss, tensors: list[Tensor], tol: float = 1e-4,
                       h: float = 1e-6) -> None:
    """Assert analytic gradients of build_loss() match central differences.

    ``build_loss`` constructs the graph from the tensors and returns the
    scalar loss Tensor; it is re-invoked for every perturbed evaluation.
    """
    for t in tensors:
        t.zero_grad()
    loss = build_loss()
    ad.backward(loss)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]

    def loss_value():
        with ad.no_grad():
            return build_loss().item()

    numeric = finite_difference_grads(loss_value, tensors, h=h)
    for t, a, n in zip(tensors, analytic, numeric):
        err = rel_error(a, n)
        assert err < tol, f"gradient mismatch {err:.3g} for tensor shape {t.shape}"


def random_tensor(rng: np.random.Generator, shape, scale: float = 1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True,
                  dtype=np.float64)
