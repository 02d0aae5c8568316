"""Contrastive objectives for bilingual image/caption alignment.

``infonce`` anchors on the first batch and draws negatives from the second
one only; the positive pair stays in its own denominator. The bilingual base
objective sums three such terms (HRL-image, LRL-image, HRL-LRL), and the
nearest-neighbour term reuses the same form with queue-selected anchors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .encoders import EmbeddingBatch
from .errors import ContractError

TERMS = ("av1", "av2", "a1a2")
FULL_MASK = frozenset(TERMS)
MONOLINGUAL_MASK = frozenset({"av2"})


def _as_node(z) -> nc.Node:
    if isinstance(z, EmbeddingBatch):
        return z.node
    if isinstance(z, nc.Node):
        return z
    return nc.constant(z)


def infonce(z1, z2, tau: float, symmetric: bool = False) -> nc.Node:
    """-mean_i log softmax_k(z1_i . z2_k / tau)[i].

    With ``symmetric=True`` the result is the average of both anchoring
    directions.
    """
    a, b = _as_node(z1), _as_node(z2)
    if a.shape[0] != b.shape[0] or a.shape[0] < 1:
        raise ContractError(f"infonce: batch sizes {a.shape[0]} and {b.shape[0]} must match and be >= 1")
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"infonce: dims {a.shape[1]} and {b.shape[1]} differ")
    if not tau > 0:
        raise ContractError(f"infonce: tau must be > 0, got {tau}")
    logits = nc.scale(a @ b.T, 1.0 / tau)
    loss = nc.mean(nc.logsumexp_rows(logits) - nc.diagonal(logits))
    if symmetric:
        logits_t = nc.transpose(logits)
        back = nc.mean(nc.logsumexp_rows(logits_t) - nc.diagonal(logits_t))
        loss = nc.scale(loss + back, 0.5)
    return loss


def base_loss(a1, a2, v, tau: float, active=FULL_MASK, symmetric: bool = False) -> dict:
    """The active subset of {av1: L(A1,V), av2: L(A2,V), a1a2: L(A1,A2)}.

    Returns ``{term: Node}`` holding only the active terms; ``a1`` may be
    ``None`` when the mask does not reference it.
    """
    unknown = set(active) - FULL_MASK
    if unknown:
        raise ContractError(f"unknown loss terms {sorted(unknown)}")
    pairs = {"av1": (a1, v), "av2": (a2, v), "a1a2": (a1, a2)}
    out = {}
    for term in TERMS:
        if term in active:
            x, y = pairs[term]
            if x is None or y is None:
                raise ContractError(f"term {term} needs both embeddings")
            out[term] = infonce(x, y, tau, symmetric)
    return out


def nn_loss(selected, z2, tau: float, symmetric: bool = False) -> nc.Node:
    """InfoNCE with queue-selected anchors; no gradient reaches ``selected``."""
    sel = nc.stop_gradient(_as_node(selected))
    target = _as_node(z2)
    if sel.shape[0] != target.shape[0]:
        raise ContractError(f"nn_loss: {sel.shape[0]} selected rows for a batch of {target.shape[0]}")
    return infonce(sel, target, tau, symmetric)


@dataclass(frozen=True)
class LossReport:
    """Scalar values of one step's objective. Absent terms are ``None``."""

    tau: float
    l_av1: float | None
    l_av2: float | None
    l_a1a2: float | None
    l_nn: float
    total: float

    @property
    def l_base(self) -> float:
        return sum(x for x in (self.l_av1, self.l_av2, self.l_a1a2) if x is not None)

    @property
    def components(self) -> dict[str, float | None]:
        return {"av1": self.l_av1, "av2": self.l_av2, "a1a2": self.l_a1a2}

    def csv_fields(self) -> list[str]:
        def fmt(x):
            return "" if x is None else repr(float(x))
        return [fmt(self.l_av1), fmt(self.l_av2), fmt(self.l_a1a2), fmt(self.l_nn), fmt(self.total)]


def total_loss(base: dict, nn_terms=(), tau: float = 0.3) -> tuple[nc.Node, LossReport]:
    """Sum the base terms and any nearest-neighbour terms into one scalar."""
    parts = list(base.values()) + list(nn_terms)
    if not parts:
        node = nc.constant(np.zeros((1, 1)))
    else:
        node = parts[0]
        for p in parts[1:]:
            node = node + p
    l_nn = float(sum(p.item() for p in nn_terms))
    report = LossReport(
        tau=tau,
        l_av1=base["av1"].item() if "av1" in base else None,
        l_av2=base["av2"].item() if "av2" in base else None,
        l_a1a2=base["a1a2"].item() if "a1a2" in base else None,
        l_nn=l_nn,
        total=node.item(),
    )
    return node, report
