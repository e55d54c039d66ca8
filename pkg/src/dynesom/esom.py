"""
Dynamic ESOM-K: decentralized primal descent / dual ascent on a quadratic
model of the time-varying augmented Lagrangian.

The augmented-Lagrangian Hessian ``H_t = hess f_t + alpha (I - Z) + eps I`` is
split as ``D_t - B`` with block-diagonal

    D_ii = hess f_i,t(x_i) + (eps + 2 alpha (1 - w_ii)) I

and neighbour-sparse ``B_ii = alpha (1 - w_ii) I``, ``B_ij = alpha w_ij I``.
``K`` rounds of the recursion ``d <- D^-1 (B d - g)`` apply the first ``K + 1``
terms of the Neumann series of ``H_t^-1``, one neighbour exchange per round.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import SyncNetwork

DENSE_LIMIT = 2000


class EsomError(RuntimeError):
    pass


@dataclass(frozen=True)
class EsomConfig:
    """Penalty/dual step ``alpha``, proximal weight ``epsilon``, truncation ``K``."""

    alpha: float = 1.0
    epsilon: float = 1.0
    K: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.K) != self.K or self.K < 0:
            raise ValueError(f"K must be a nonnegative integer, got {self.K}")


@dataclass
class SolverState:
    """Stacked primal iterates ``x`` and dual images ``q``, shape ``(n, p)``."""

    x: np.ndarray
    q: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, x0, t=0):
        x0 = np.array(x0, dtype=float)
        return cls(x0, np.zeros_like(x0), t)

    def copy(self):
        return SolverState(self.x.copy(), self.q.copy(), self.t)


@dataclass
class SplitOperators:
    """Blocks of ``D_t`` and ``B`` for one time step."""

    D_blocks: np.ndarray
    B_self: np.ndarray
    B_nbr: list
    topology: object

    @property
    def n(self):
        return self.D_blocks.shape[0]

    @property
    def p(self):
        return self.D_blocks.shape[1]

    def apply_B(self, d):
        out = self.B_self[:, None] * d
        for i, nb in enumerate(self.topology.neighbor_lists):
            if nb:
                out[i] += self.B_nbr[i] @ d[list(nb)]
        return out

    def apply_D(self, d):
        return np.einsum("nij,nj->ni", self.D_blocks, d)

    def dense_D(self):
        n, p = self.n, self.p
        _check_size(n * p)
        D = np.zeros((n * p, n * p))
        for i in range(n):
            D[i * p:(i + 1) * p, i * p:(i + 1) * p] = self.D_blocks[i]
        return D

    def dense_B(self):
        n, p = self.n, self.p
        _check_size(n * p)
        Bw = np.diag(self.B_self)
        for i, nb in enumerate(self.topology.neighbor_lists):
            Bw[i, list(nb)] = self.B_nbr[i]
        return np.kron(Bw, np.eye(p))

    def normalized_B(self):
        """Dense ``D^{-1/2} B D^{-1/2}`` and the block factor ``D^{-1/2}``."""
        Dm = np.zeros_like(self.dense_D())
        p = self.p
        for i in range(self.n):
            lam, U = np.linalg.eigh(self.D_blocks[i])
            Dm[i * p:(i + 1) * p, i * p:(i + 1) * p] = (U / np.sqrt(lam)) @ U.T
        return Dm @ self.dense_B() @ Dm, Dm

    def spectral_radius(self):
        M, _ = self.normalized_B()
        return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (M + M.T)))))


def _check_size(dim):
    if dim > DENSE_LIMIT:
        raise EsomError(f"dense operator of size {dim} exceeds limit {DENSE_LIMIT}")


def build_split_operators(obj, weights, config, x_prev, t):
    """Assemble ``D_t`` blocks at ``x_prev`` and the fixed ``B`` blocks.

    Raises
    ------
    EsomError
        If some ``D_ii`` is not positive definite.
    """
    a, eps = config.alpha, config.epsilon
    x_prev = np.asarray(x_prev, dtype=float).reshape(weights.n, -1)
    w_diag = weights.diag
    D = np.stack([obj.hessian(i, t, x_prev[i]) for i in range(weights.n)])
    shift = eps + 2.0 * a * (1.0 - w_diag)
    D = D + shift[:, None, None] * np.eye(D.shape[1])
    for i in range(weights.n):
        try:
            np.linalg.cholesky(D[i])
        except np.linalg.LinAlgError:
            raise EsomError(f"D block of node {i} at t={t} is not positive definite") from None
    B_nbr = [a * weights.neighbor_weights(i) for i in range(weights.n)]
    return SplitOperators(D, a * (1.0 - w_diag), B_nbr, weights.topology)


def _node_gradient(grad_i, q_i, x_i, x_nbrs, w_ii, w_nbrs, alpha):
    mixed = w_nbrs @ x_nbrs if len(w_nbrs) else 0.0
    return grad_i + q_i + alpha * (1.0 - w_ii) * x_i - alpha * mixed


def local_gradient(obj, weights, config, state, i, t):
    """Node ``i``'s block of the augmented-Lagrangian gradient at ``(x_{t-1}, q_{t-1})``."""
    nb = list(weights.topology.neighbors(i))
    x_i = state.x[i]
    return _node_gradient(obj.gradient(i, t, x_i), state.q[i], x_i, state.x[nb],
                          weights.W[i, i], weights.W[i, nb], config.alpha)


def descent_recursion_round(split, g, d_k, network=None):
    """One exchange of ``d^(k)`` followed by ``d^(k+1) = D^-1 (B d^(k) - g)``."""
    network = network or SyncNetwork(split.topology)
    g = np.asarray(g, dtype=float)

    def node(i, d_i, d_nbrs):
        s = split.B_self[i] * d_i
        if len(d_nbrs):
            s = s + split.B_nbr[i] @ d_nbrs
        return np.linalg.solve(split.D_blocks[i], s - g[i])

    return np.stack(network.round("direction", d_k, node))


def truncated_direction(split, g, K, network=None):
    """``d^(K) = -Hhat^-1(K) g`` via the per-node recursion."""
    g = np.asarray(g, dtype=float)
    d = -np.stack([np.linalg.solve(split.D_blocks[i], g[i]) for i in range(split.n)])
    for _ in range(K):
        d = descent_recursion_round(split, g, d, network)
    return d


def esom_step(obj, weights, config, state, t, network=None):
    """
    One time step of dynamic ESOM-K at every node.

    Each node builds its ``D_ii``, forms its gradient block from its own
    ``(x, q)`` and the neighbour iterates received at the end of the previous
    step, runs ``K`` direction exchanges, moves ``x`` and then exchanges the
    new iterates to update ``q``. Communication per step: ``K + 1`` exchanges.
    """
    network = network or SyncNetwork(weights.topology)
    a, eps, K = config.alpha, config.epsilon, config.K
    W = weights.W
    nbr_idx = network.nbr_idx
    p = state.x.shape[1]
    eye = np.eye(p)
    q_prev = state.q

    def prepare(i, x_i, x_nbrs):
        w_ii = W[i, i]
        D_i = obj.hessian(i, t, x_i) + (eps + 2.0 * a * (1.0 - w_ii)) * eye
        try:
            np.linalg.cholesky(D_i)
        except np.linalg.LinAlgError:
            raise EsomError(f"D block of node {i} at t={t} is not positive definite") from None
        g_i = _node_gradient(obj.gradient(i, t, x_i), q_prev[i], x_i, x_nbrs,
                             w_ii, W[i, nbr_idx[i]], a)
        D_inv = np.linalg.inv(D_i)
        return D_inv, g_i, -(D_inv @ g_i)

    # neighbour iterates x_{t-1} were received in the previous primal exchange
    prepared = network.round("gradient", state.x, prepare, exchange=False)
    D_inv = [r[0] for r in prepared]
    g = [r[1] for r in prepared]
    d = np.stack([r[2] for r in prepared])

    def direction(i, d_i, d_nbrs):
        s = a * (1.0 - W[i, i]) * d_i
        if len(d_nbrs):
            s = s + a * (W[i, nbr_idx[i]] @ d_nbrs)
        return D_inv[i] @ (s - g[i])

    for _ in range(K):
        d = np.stack(network.round("direction", d, direction))

    x_new = state.x + d

    def dual(i, x_i, x_nbrs):
        mixed = W[i, nbr_idx[i]] @ x_nbrs if len(x_nbrs) else 0.0
        return q_prev[i] + a * (1.0 - W[i, i]) * x_i - a * mixed

    q_new = np.stack(network.round("primal", x_new, dual))
    return SolverState(x_new, q_new, t)


def esom_init(x0, network=None):
    """Initial state ``(x0, q = 0)`` plus the exchange that shares ``x0``."""
    state = SolverState.initial(x0)
    if network is not None:
        network.round("primal", state.x, lambda i, own, nbrs: own)
    return state


def dense_truncated_inverse(split, K):
    """``D^{-1/2} sum_{u=0}^{K} (D^{-1/2} B D^{-1/2})^u D^{-1/2}`` as a dense matrix."""
    M, Dm = split.normalized_B()
    S = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for _ in range(K):
        term = term @ M
        S = S + term
    return Dm @ S @ Dm


def save_checkpoint(state, path):
    """Little-endian ``int64 t`` then ``x`` and ``q``, each as ``uint64`` length + float64 data."""
    x = np.ascontiguousarray(state.x, dtype="<f8").ravel()
    q = np.ascontiguousarray(state.q, dtype="<f8").ravel()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<q", int(state.t)))
        for arr in (x, q):
            fh.write(struct.pack("<Q", arr.size))
            fh.write(arr.tobytes())


def load_checkpoint(path, p):
    """Read a checkpoint written by `save_checkpoint`; rows have length `p`."""
    buf = Path(path).read_bytes()
    (t,) = struct.unpack_from("<q", buf, 0)
    off = 8
    arrays = []
    for _ in range(2):
        (size,) = struct.unpack_from("<Q", buf, off)
        off += 8
        arrays.append(np.frombuffer(buf, dtype="<f8", count=size, offset=off).astype(float))
        off += 8 * size
    if off != len(buf):
        raise EsomError(f"{path}: {len(buf) - off} trailing bytes in checkpoint")
    x, q = (a.reshape(-1, p) for a in arrays)
    return SolverState(x, q, int(t))
