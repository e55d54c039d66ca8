"""
Bulk-synchronous communication rounds over a fixed graph.

Each round freezes a snapshot of one stacked quantity, then calls a per-node
update that receives only its own row and its neighbours' rows. Node updates
inside a round may run concurrently; the round itself is a barrier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RoundRecord:
    label: str
    exchange: bool
    reads: dict


@dataclass
class CommLog:
    """Records which node rows every node read, round by round.

    ``exchange=False`` marks rounds that reuse neighbour values already
    received in an earlier exchange (no new messages).
    """

    rounds: list = field(default_factory=list)

    def record(self, label, exchange, reads):
        self.rounds.append(RoundRecord(label, exchange, reads))

    def exchanges(self):
        return [r for r in self.rounds if r.exchange]

    def clear(self):
        self.rounds.clear()

    def reads_are_local(self, topology) -> bool:
        for r in self.rounds:
            for i, seen in r.reads.items():
                if not set(seen) <= {i, *topology.neighbors(i)}:
                    return False
        return True


class SyncNetwork:
    """Round executor bound to one topology.

    Parameters
    ----------
    topology : NetworkTopology
    log : CommLog, optional
        When given, every round is recorded.
    executor : concurrent.futures.Executor, optional
        Runs node updates of a round concurrently. Results are identical to
        sequential execution because each node's arithmetic is self contained.
    """

    def __init__(self, topology, log=None, executor=None):
        self.topology = topology
        self.log = log
        self.executor = executor
        self.nbr_idx = [np.array(nb, dtype=int) for nb in topology.neighbor_lists]

    @property
    def n(self):
        return self.topology.n

    def round(self, label, snapshot, node_fn, exchange=True):
        """Run ``node_fn(i, own_row, neighbour_rows)`` for every node.

        ``neighbour_rows[k]`` belongs to node ``topology.neighbors(i)[k]``.
        Returns the list of node outputs.
        """
        snap = np.array(snapshot, dtype=float, copy=True)
        snap.setflags(write=False)
        nbr_idx = self.nbr_idx

        def run(i):
            return node_fn(i, snap[i], snap[nbr_idx[i]])

        if self.log is not None:
            reads = {i: (i, *self.topology.neighbor_lists[i]) for i in range(self.n)}
            self.log.record(label, exchange, reads)
        if self.executor is None:
            out = [run(i) for i in range(self.n)]
        else:
            out = list(self.executor.map(run, range(self.n)))
        return out

    def local(self, label, node_fn):
        """Purely local computation ``node_fn(i)``; no neighbour reads."""
        if self.log is not None:
            self.log.record(label, False, {i: (i,) for i in range(self.n)})
        if self.executor is None:
            out = [node_fn(i) for i in range(self.n)]
        else:
            out = list(self.executor.map(node_fn, range(self.n)))
        return out
