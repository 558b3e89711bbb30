"""Plain SGD and Adam, written out explicitly.

Adam keeps exponential moving averages of the gradient and its elementwise
square,

    M <- beta1 * M + (1 - beta1) * G
    V <- beta2 * V + (1 - beta2) * G**2

corrects their initialization bias with 1/(1 - beta^t), and scales the step
per entry:

    params <- params - alpha * M_hat / (sqrt(V_hat) + eps)

Note eps sits outside the square root.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError


@dataclass
class SgdState:
    alpha: float = 1e-3


@dataclass
class AdamState:
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    M: np.ndarray | None = None
    V: np.ndarray | None = None

    @classmethod
    def for_shape(cls, shape, alpha=1e-3, beta1=0.9, beta2=0.999,
                  epsilon=1e-8) -> "AdamState":
        return cls(alpha=alpha, beta1=beta1, beta2=beta2, epsilon=epsilon,
                   t=0, M=np.zeros(shape), V=np.zeros(shape))


def _check_shapes(params: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ShapeMismatchError(
            f"gradient shape {grad.shape} does not match parameters {params.shape}")
    return params, grad


def sgd_step(state: SgdState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One update: params - alpha * grad."""
    params, grad = _check_shapes(params, grad)
    return params - state.alpha * grad


def adam_step(state: AdamState, params: np.ndarray,
              grad: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One Adam update. Returns fresh arrays; the input state is not mutated."""
    params, grad = _check_shapes(params, grad)
    if state.M is None or state.V is None:
        state = AdamState(state.alpha, state.beta1, state.beta2, state.epsilon,
                          state.t, np.zeros_like(params), np.zeros_like(params))
    if state.M.shape != params.shape:
        raise ShapeMismatchError(
            f"moment shape {state.M.shape} does not match parameters {params.shape}")
    t = state.t + 1
    M = state.beta1 * state.M + (1.0 - state.beta1) * grad
    V = state.beta2 * state.V + (1.0 - state.beta2) * grad * grad
    M_hat = M / (1.0 - state.beta1 ** t)
    V_hat = V / (1.0 - state.beta2 ** t)
    new_params = params - state.alpha * M_hat / (np.sqrt(V_hat) + state.epsilon)
    new_state = AdamState(state.alpha, state.beta1, state.beta2, state.epsilon,
                          t, M, V)
    return new_params, new_state
