"""
Network topologies and consensus weight matrices.

A network is an undirected connected graph on nodes ``0 .. n-1``. The weight
matrix ``W`` mixes neighbouring values; its lifted version ``Z = W (x) I_p``
acts on stacked vectors of shape ``(n, p)`` and is never materialized here.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_GRAPH_ATTEMPTS = 10_000
ZERO_EIG_TOL = 1e-9


class TopologyError(ValueError):
    """Invalid graph parameters or a weight matrix that cannot be used."""


@dataclass(frozen=True)
class NetworkTopology:
    """Undirected simple graph with sorted neighbour lists.

    Parameters
    ----------
    n : int
        Number of nodes.
    edges : frozenset of tuple
        Unordered pairs ``(i, j)`` stored with ``i < j``.
    """

    n: int
    edges: frozenset
    neighbor_lists: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise TopologyError(f"node count must be positive, got {self.n}")
        nbrs = [[] for _ in range(self.n)]
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise TopologyError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise TopologyError(f"edge ({i}, {j}) out of range for n={self.n}")
            a, b = min(i, j), max(i, j)
            if (a, b) in normalized:
                continue
            normalized.add((a, b))
            nbrs[a].append(b)
            nbrs[b].append(a)
        object.__setattr__(self, "edges", frozenset(normalized))
        object.__setattr__(self, "neighbor_lists", tuple(tuple(sorted(v)) for v in nbrs))

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(v) for v in self.neighbor_lists], dtype=int)

    def neighbors(self, i: int) -> tuple:
        return self.neighbor_lists[i]

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            A[i, j] = A[j, i] = True
        return A

    def is_connected(self) -> bool:
        return len(self.hop_distances(0)) == self.n

    def hop_distances(self, source: int) -> dict:
        """Breadth-first hop distances from ``source`` to every reachable node."""
        dist = {source: 0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self.neighbor_lists[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def distance_matrix(self) -> np.ndarray:
        """All-pairs hop distances; unreachable pairs are ``inf``."""
        D = np.full((self.n, self.n), np.inf)
        for s in range(self.n):
            for v, d in self.hop_distances(s).items():
                D[s, v] = d
        return D


def complete_graph(n: int) -> NetworkTopology:
    return NetworkTopology(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))


def path_graph(n: int) -> NetworkTopology:
    return NetworkTopology(n, frozenset((i, i + 1) for i in range(n - 1)))


def generate_random_graph(n: int, r_c: float, seed: int,
                          max_attempts: int = MAX_GRAPH_ATTEMPTS) -> NetworkTopology:
    """
    Erdos-Renyi graph conditioned on connectivity.

    Every unordered pair is an edge independently with probability `r_c`.
    Disconnected draws are discarded and redrawn from the sub-seed
    ``(seed, attempt)``, so the result depends only on ``(n, r_c, seed)``.

    Raises
    ------
    TopologyError
        On invalid parameters, or when no connected draw is found within
        `max_attempts` (``r_c`` too small for ``n``).
    """
    if n < 2:
        raise TopologyError(f"need at least 2 nodes, got {n}")
    if not 0.0 < r_c <= 1.0:
        raise TopologyError(f"connectivity ratio must lie in (0, 1], got {r_c}")
    iu, ju = np.triu_indices(n, k=1)
    for attempt in range(max_attempts):
        rng = np.random.default_rng([int(seed), attempt])
        keep = rng.random(iu.size) < r_c
        g = NetworkTopology(n, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))
        if g.is_connected():
            return g
    raise TopologyError(
        f"no connected graph after {max_attempts} attempts (n={n}, r_c={r_c}); "
        "increase the connectivity ratio")


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric doubly stochastic mixing matrix tied to its graph."""

    W: np.ndarray
    topology: NetworkTopology

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.shape != (self.topology.n, self.topology.n):
            raise TopologyError(
                f"weight matrix shape {W.shape} does not match n={self.topology.n}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def diag(self) -> np.ndarray:
        return np.diag(self.W)

    def neighbor_weights(self, i: int) -> np.ndarray:
        return self.W[i, list(self.topology.neighbors(i))]

    def mix(self, x: np.ndarray) -> np.ndarray:
        """Apply ``Z`` to stacked ``x`` of shape ``(n, p)``: row i is sum_j w_ij x_j."""
        return self.W @ x

    def laplacian_apply(self, x: np.ndarray) -> np.ndarray:
        """Apply ``I - Z`` to stacked ``x``."""
        return x - self.W @ x

    def lifted_dense(self, p: int) -> np.ndarray:
        """Dense ``Z = W (x) I_p``; for tests and the dense oracle only."""
        return np.kron(self.W, np.eye(p))

    def to_csv(self, path) -> None:
        np.savetxt(path, self.W, delimiter=",", fmt="%.17g")


def metropolis_weights(g: NetworkTopology) -> WeightMatrix:
    """Metropolis-Hastings weights ``w_ij = 1 / (1 + max(deg_i, deg_j))``."""
    deg = g.degrees
    W = np.zeros((g.n, g.n))
    for i, j in g.edges:
        W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    for i in range(g.n):
        W[i, i] = 1.0 - W[i].sum()
    return WeightMatrix(W, g)


@dataclass
class WeightReport:
    symmetry_defect: float
    row_sum_deviation: float
    unit_eig_multiplicity: int
    pattern_ok: bool
    nonnegative: bool
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return (self.symmetry_defect <= self.tol
                and self.row_sum_deviation <= self.tol
                and self.unit_eig_multiplicity == 1
                and self.pattern_ok
                and self.nonnegative)

    def failures(self) -> list:
        out = []
        if self.symmetry_defect > self.tol:
            out.append(f"asymmetric (max |W - W^T| = {self.symmetry_defect:.3g})")
        if self.row_sum_deviation > self.tol:
            out.append(f"rows do not sum to 1 (max dev {self.row_sum_deviation:.3g})")
        if self.unit_eig_multiplicity != 1:
            out.append(f"eigenvalue 1 has multiplicity {self.unit_eig_multiplicity}")
        if not self.pattern_ok:
            out.append("sparsity pattern does not match graph")
        if not self.nonnegative:
            out.append("negative entries")
        return out


def validate_weight_matrix(W, g: NetworkTopology | None = None,
                           tol: float = 1e-10) -> WeightReport:
    """
    Check the mixing conditions: symmetry, unit row sums, a simple unit
    eigenvalue, nonnegativity, and (given a graph) the sparsity pattern
    ``w_ij != 0 iff i == j or j in N_i`` with positive diagonal.
    """
    if isinstance(W, WeightMatrix):
        g = W.topology if g is None else g
        W = W.W
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise TopologyError(f"weight matrix must be square, got shape {W.shape}")
    if g is not None and g.n != W.shape[0]:
        raise TopologyError(f"weight matrix size {W.shape[0]} != graph size {g.n}")
    n = W.shape[0]
    sym = float(np.max(np.abs(W - W.T)))
    rows = float(np.max(np.abs(W.sum(axis=1) - 1.0)))
    L = np.eye(n) - 0.5 * (W + W.T)
    mult = int(np.sum(np.abs(np.linalg.eigvalsh(L)) < ZERO_EIG_TOL))
    pattern_ok = True
    if g is not None:
        expected = g.adjacency() | np.eye(n, dtype=bool)
        pattern_ok = bool(np.array_equal(W != 0, expected)) and bool(np.all(np.diag(W) > 0))
    return WeightReport(sym, rows, mult, pattern_ok, bool(np.all(W >= 0)), tol)


def gamma_smallest_nonzero_eig(W, threshold: float = ZERO_EIG_TOL) -> float:
    """Smallest eigenvalue of ``I - W`` above `threshold`.

    The lifted ``I - Z`` has the same spectrum with multiplicity ``p``.
    """
    if isinstance(W, WeightMatrix):
        W = W.W
    W = np.asarray(W, dtype=float)
    eigs = np.linalg.eigvalsh(np.eye(W.shape[0]) - W)
    nonzero = eigs[eigs > threshold]
    if nonzero.size == 0:
        raise TopologyError("I - W has no eigenvalue above the zero threshold")
    return float(nonzero.min())


def write_edge_list(g: NetworkTopology, path) -> None:
    edges = sorted(g.edges)
    lines = [f"{g.n} {len(edges)}"] + [f"{i} {j}" for i, j in edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_edge_list(path) -> NetworkTopology:
    """Parse the ``n m`` header followed by ``m`` zero-based ``i j`` lines."""
    tokens = [ln.split() for ln in Path(path).read_text(encoding="utf-8").splitlines()
              if ln.strip()]
    if not tokens or len(tokens[0]) != 2:
        raise TopologyError(f"{path}: missing 'n m' header")
    n, m = int(tokens[0][0]), int(tokens[0][1])
    body = tokens[1:]
    if len(body) != m:
        raise TopologyError(f"{path}: header announces {m} edges, found {len(body)}")
    return NetworkTopology(n, frozenset((int(a), int(b)) for a, b in body))
