"""Fixed-capacity FIFO of cross-lingual embedding pairs.

Each entry holds an HRL vector ``q1``, its paired LRL vector ``q2`` and the
id of the sample they came from. Lookups scan the whole queue: the pair whose
key side has the largest inner product with the query wins, and exact ties go
to the oldest entry.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError, EmptyQueueError


class PairedQueue:
    def __init__(self, capacity: int = 1024, dim: int | None = None):
        if capacity < 1:
            raise ContractError("queue capacity must be >= 1")
        self.capacity = capacity
        self.dim = dim
        self._q1: np.ndarray | None = None
        self._q2: np.ndarray | None = None
        self._ids = np.zeros(capacity, dtype=np.int64)
        self.head = 0  # slot of the oldest entry
        self.size = 0
        if dim is not None:
            self._alloc(dim)

    def _alloc(self, dim: int) -> None:
        self.dim = dim
        self._q1 = np.zeros((self.capacity, dim))
        self._q2 = np.zeros((self.capacity, dim))

    def __len__(self) -> int:
        return self.size

    def _order(self) -> np.ndarray:
        return (self.head + np.arange(self.size)) % self.capacity

    @property
    def q1(self) -> np.ndarray:
        """Stored HRL-side vectors, oldest first (a copy)."""
        return self._q1[self._order()] if self.size else np.zeros((0, self.dim or 0))

    @property
    def q2(self) -> np.ndarray:
        return self._q2[self._order()] if self.size else np.zeros((0, self.dim or 0))

    @property
    def ids(self) -> np.ndarray:
        return self._ids[self._order()]

    def enqueue(self, z1, z2, ids=None) -> "PairedQueue":
        """Append pairs in batch order, evicting the oldest when full."""
        z1 = np.atleast_2d(np.asarray(z1, dtype=np.float64))
        z2 = np.atleast_2d(np.asarray(z2, dtype=np.float64))
        if z1.size == 0 and z2.size == 0:
            return self
        if z1.shape != z2.shape:
            raise ContractError(f"paired batches differ in shape: {z1.shape} vs {z2.shape}")
        if self.dim is None:
            self._alloc(z1.shape[1])
        if z1.shape[1] != self.dim:
            raise ContractError(f"queue holds {self.dim}-dim vectors, got {z1.shape[1]}")
        n = z1.shape[0]
        ids = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64)
        if ids.shape != (n,):
            raise ContractError("one id per pair is required")
        if n > self.capacity:  # only the newest ``capacity`` rows survive
            z1, z2, ids = z1[-self.capacity:], z2[-self.capacity:], ids[-self.capacity:]
            n = self.capacity
        tail = (self.head + self.size) % self.capacity
        slots = (tail + np.arange(n)) % self.capacity
        self._q1[slots] = z1
        self._q2[slots] = z2
        self._ids[slots] = ids
        overflow = max(0, self.size + n - self.capacity)
        self.head = (self.head + overflow) % self.capacity
        self.size = min(self.capacity, self.size + n)
        return self

    def is_warm(self, threshold: int) -> bool:
        return self.size >= threshold

    def _lookup(self, queries, key: str):
        if self.size == 0:
            raise EmptyQueueError("nearest-pair lookup on an empty queue")
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if q.shape[1] != self.dim:
            raise ContractError(f"query dim {q.shape[1]} != queue dim {self.dim}")
        order = self._order()
        keys = (self._q1 if key == "q1" else self._q2)[order]
        sims = q @ keys.T
        idx = np.argmax(sims, axis=1)  # first maximum -> oldest entry on ties
        partner = (self._q2 if key == "q1" else self._q1)[order[idx]]
        return partner, idx, sims[np.arange(len(idx)), idx]

    def nearest_pairs(self, queries, key: str = "q1"):
        """Batched lookup. ``key='q1'`` matches HRL queries and returns LRL partners.

        Returns ``(partners, fifo_indices, similarities)``.
        """
        if key not in ("q1", "q2"):
            raise ContractError("key must be 'q1' or 'q2'")
        return self._lookup(queries, key)

    def nearest_pair(self, query, key: str = "q1"):
        partners, idx, sims = self.nearest_pairs(np.asarray(query).reshape(1, -1), key)
        return partners[0], int(idx[0]), float(sims[0])

    def snapshot(self) -> "PairedQueue":
        """Independent copy for read-only inspection."""
        other = PairedQueue(self.capacity, self.dim)
        if self.size:
            other.enqueue(self.q1, self.q2, self.ids)
        return other

    def dump(self, query, query_id: int, key: str = "q1", top: int | None = None) -> str:
        """One line per entry: fifo index, query id, entry id, similarity; best first."""
        if self.size == 0:
            raise EmptyQueueError("cannot dump an empty queue")
        keys = self.q1 if key == "q1" else self.q2
        sims = keys @ np.asarray(query, dtype=np.float64).ravel()
        order = np.lexsort((np.arange(self.size), -sims))
        if top is not None:
            order = order[:top]
        ids = self.ids
        lines = ["index\tquery_id\tentry_id\tsimilarity"]
        lines += [f"{i}\t{query_id}\t{ids[i]}\t{sims[i]:.6f}" for i in order]
        return "\n".join(lines)


def nearest_pair(q: PairedQueue, query):
    return q.nearest_pair(query)


def is_warm(q: PairedQueue, threshold: int) -> bool:
    return q.is_warm(threshold)
