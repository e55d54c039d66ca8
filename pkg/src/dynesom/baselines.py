"""
Dynamic first-order and Network Newton baselines on the same round simulator.

* EXTRA: ``x_t = (I + Z) x_{t-1} - Wt x_{t-2} - eta [grad f_t(x_{t-1}) - grad f_{t-1}(x_{t-2})]``
  with ``Wt = (I + W) / 2`` and first step ``x_1 = Z x_0 - eta grad f_1(x_0)``.
  The previous gradient is the one each node computed a step earlier, so a
  change of ``f`` enters through the new gradient alone. (Re-evaluating both
  gradients on ``f_t`` would cancel the data term for quadratics, leaving the
  method blind to the change.)
* NN-0: one block-Jacobi Newton step on ``c f_t(x) + 1/2 x^T (I - Z) x``.
* DGD: ``x_t = Z x_{t-1} - eta grad f_t(x_{t-1})``.

Each method uses one neighbour exchange of primal iterates per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import SyncNetwork

METHODS = ("EXTRA", "NN0", "DGD")


@dataclass(frozen=True)
class BaselineConfig:
    """`step_size` is ``eta`` for EXTRA/DGD and the penalty weight ``c`` for NN-0."""

    method: str
    step_size: float

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown baseline {self.method!r}; expected one of {METHODS}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")


@dataclass
class BaselineState:
    x: np.ndarray
    x_prev: np.ndarray | None = None
    t: int = 0
    grad_prev: np.ndarray | None = None

    @classmethod
    def initial(cls, x0, t=0):
        return cls(np.array(x0, dtype=float), None, t)


def extra_step(obj, weights, config, state, t, network=None):
    network = network or SyncNetwork(weights.topology)
    eta = config.step_size
    W = weights.W
    nbr_idx = network.nbr_idx
    p = state.x.shape[1]

    if state.x_prev is None:
        def first(i, x_i, x_nbrs):
            grad = obj.gradient(i, t, x_i)
            mixed = W[i, i] * x_i + (W[i, nbr_idx[i]] @ x_nbrs if len(x_nbrs) else 0.0)
            return mixed - eta * grad, grad

        out = network.round("primal", state.x, first)
        return BaselineState(np.stack([o[0] for o in out]), state.x.copy(), t,
                             np.stack([o[1] for o in out]))

    # x_{t-2} of the neighbours is cached from the previous exchange
    both = np.concatenate([state.x, state.x_prev], axis=1)
    grad_prev = state.grad_prev

    def node(i, own, nbrs):
        x1, x2 = own[:p], own[p:]
        w_ii, w_nb = W[i, i], W[i, nbr_idx[i]]
        grad = obj.gradient(i, t, x1)
        out = x1 + w_ii * x1 - 0.5 * (1.0 + w_ii) * x2
        if len(nbrs):
            out = out + w_nb @ nbrs[:, :p] - 0.5 * (w_nb @ nbrs[:, p:])
        return out - eta * (grad - grad_prev[i]), grad

    out = network.round("primal", both, node)
    return BaselineState(np.stack([o[0] for o in out]), state.x.copy(), t,
                         np.stack([o[1] for o in out]))


def nn0_step(obj, weights, config, state, t, network=None):
    network = network or SyncNetwork(weights.topology)
    c = config.step_size
    W = weights.W
    nbr_idx = network.nbr_idx
    eye = np.eye(state.x.shape[1])

    def node(i, x_i, x_nbrs):
        w_ii = W[i, i]
        mixed = W[i, nbr_idx[i]] @ x_nbrs if len(x_nbrs) else 0.0
        grad = c * obj.gradient(i, t, x_i) + (1.0 - w_ii) * x_i - mixed
        D = c * obj.hessian(i, t, x_i) + 2.0 * (1.0 - w_ii) * eye
        return x_i - np.linalg.solve(D, grad)

    return BaselineState(np.stack(network.round("primal", state.x, node)), state.x.copy(), t)


def dgd_step(obj, weights, config, state, t, network=None):
    network = network or SyncNetwork(weights.topology)
    eta = config.step_size
    W = weights.W
    nbr_idx = network.nbr_idx

    def node(i, x_i, x_nbrs):
        mixed = W[i, i] * x_i + (W[i, nbr_idx[i]] @ x_nbrs if len(x_nbrs) else 0.0)
        return mixed - eta * obj.gradient(i, t, x_i)

    return BaselineState(np.stack(network.round("primal", state.x, node)), state.x.copy(), t)


STEPPERS = {"EXTRA": extra_step, "NN0": nn0_step, "DGD": dgd_step}


def baseline_step(obj, weights, config, state, t, network=None):
    return STEPPERS[config.method](obj, weights, config, state, t, network)


def nn0_penalized_optimum(obj, weights, c, t):
    """Dense minimizer of ``c f_t(x) + 1/2 x^T (I - Z) x`` (quadratic ``f`` only)."""
    n, p = weights.n, obj.p
    A = np.zeros((n * p, n * p))
    b = np.zeros(n * p)
    zero = np.zeros(p)
    for i in range(n):
        Hi = obj.hessian(i, t, zero)
        A[i * p:(i + 1) * p, i * p:(i + 1) * p] = c * Hi
        b[i * p:(i + 1) * p] = -c * obj.gradient(i, t, zero)
    A += np.kron(np.eye(n) - weights.W, np.eye(p))
    return np.linalg.solve(A, b).reshape(n, p)
