"""Scalar functions on state space (V, W_i, phi) with gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

FD_STEP = 1e-7


@dataclass(frozen=True)
class ScalarField:
    """A C^1 map R^n -> R, evaluated row-wise on arrays of shape (..., n).

    When ``grad`` is omitted the gradient falls back to central differences
    at relative step 1e-7.  ``is_zero`` marks a structurally vanishing field,
    which lets region checks recognise empty regions without sampling.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "field"
    is_zero: bool = False

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(x), dtype=float)
        return float(out) if x.ndim == 1 else out

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float) * np.ones_like(x)
        return finite_difference_gradient(self.fn, x)


def finite_difference_gradient(fn, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    n = x.shape[-1]
    for j in range(n):
        h = FD_STEP * np.maximum(1.0, np.abs(x[..., j]))
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += h
        xm[..., j] -= h
        out[..., j] = (np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2 * h)
    return out


def quadratic(P) -> ScalarField:
    """``x' P x`` for symmetric ``P``."""
    P = np.asarray(P, dtype=float)
    P = 0.5 * (P + P.T)

    def fn(x):
        return np.einsum("...i,ij,...j->...", x, P, x)

    def grad(x):
        return 2.0 * x @ P

    return ScalarField(fn, grad, name="quadratic")


def squared_norm(n: int) -> ScalarField:
    f = quadratic(np.eye(n))
    return ScalarField(f.fn, f.grad, name="|x|^2")


def zero_field() -> ScalarField:
    return ScalarField(lambda x: np.zeros(np.shape(x)[:-1]), lambda x: np.zeros_like(x),
                       name="0", is_zero=True)


def constant_field(c: float) -> ScalarField:
    c = float(c)
    return ScalarField(lambda x: np.full(np.shape(x)[:-1], c), lambda x: np.zeros_like(x), name=repr(c))
