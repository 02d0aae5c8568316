"""Cross-modal retrieval evaluation (recall@K over a 1-of-N gallery)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datagen import Split
from .encoders import Checkpoint, EmbeddingBatch, encode_caption, encode_image
from .errors import ContractError

KS = (1, 5, 10)
DIRECTIONS = ("HRL->I", "I->HRL", "LRL->I", "I->LRL", "HRL->LRL", "LRL->HRL")


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray
    direction: str = ""

    @property
    def shape(self):
        return self.values.shape


def _rows(x) -> np.ndarray:
    if isinstance(x, EmbeddingBatch):
        return x.rows
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def similarity_matrix(q, g, direction: str = "") -> SimilarityMatrix:
    """Inner products q_i . g_j."""
    qa, ga = _rows(q), _rows(g)
    if qa.shape[1] != ga.shape[1]:
        raise ContractError(f"query dim {qa.shape[1]} != gallery dim {ga.shape[1]}")
    return SimilarityMatrix(qa @ ga.T, direction)


def ground_truth_ranks(s) -> np.ndarray:
    """0-based rank of entry (i, i) in row i; ties go to the lower gallery index."""
    m = s.values if isinstance(s, SimilarityMatrix) else np.asarray(s, dtype=np.float64)
    n = m.shape[0]
    if m.ndim != 2 or m.shape[1] != n:
        raise ContractError(f"recall needs a square matrix, got {m.shape}")
    diag = np.diag(m)[:, None]
    above = (m > diag).sum(axis=1)
    tied_before = ((m == diag) & (np.arange(n)[None, :] < np.arange(n)[:, None])).sum(axis=1)
    return above + tied_before


def recall_at_k(s, k: int) -> float:
    m = s.values if isinstance(s, SimilarityMatrix) else np.asarray(s)
    if not 1 <= k <= m.shape[1]:
        raise ContractError(f"k={k} outside 1..{m.shape[1]}")
    return float(np.mean(ground_truth_ranks(s) < k))


@dataclass
class RetrievalReport:
    recalls: dict[str, dict[int, float]] = field(default_factory=dict)
    n_validation: int = 0
    variant: str = ""
    seed: int = 0

    def get(self, direction: str, k: int) -> float:
        return self.recalls[direction][k]

    def csv_rows(self) -> list[str]:
        rows = []
        for d in DIRECTIONS:
            if d in self.recalls:
                for k, r in sorted(self.recalls[d].items()):
                    rows.append(f"{self.variant},{self.seed},{d},{k},{r!r}")
        return rows

    CSV_HEADER = "variant,seed,direction,k,recall"

    def to_csv(self) -> str:
        return "\n".join([self.CSV_HEADER, *self.csv_rows()]) + "\n"


def evaluate(ckpt: Checkpoint, val: Split, ks=KS, seed: int | None = None) -> RetrievalReport:
    """Embed the validation split and score every direction the checkpoint supports."""
    enc = ckpt.encoders
    emb: dict[str, np.ndarray] = {}
    if "image" in enc:
        emb["I"] = encode_image(val.images, enc["image"]).rows
    if "hrl" in enc:
        emb["HRL"] = encode_caption(val.cap1, enc["hrl"]).rows
    if "lrl" in enc and val.cap2.shape[1] > 0:
        emb["LRL"] = encode_caption(val.cap2, enc["lrl"]).rows
    report = RetrievalReport(n_validation=len(val), variant=ckpt.variant,
                             seed=ckpt.config.get("seed", 0) if seed is None else seed)
    for d in DIRECTIONS:
        q, g = d.split("->")
        if q in emb and g in emb:
            s = similarity_matrix(emb[q], emb[g], d)
            report.recalls[d] = {k: recall_at_k(s, k) for k in ks if k <= len(val)}
    return report


def format_table(reports: list[RetrievalReport], directions=DIRECTIONS, ks=KS) -> str:
    """Plain-text table: one row per report, R@K columns grouped by direction."""
    present = [d for d in directions if any(d in r.recalls for r in reports)]
    name_w = max([len("Model")] + [len(f"{r.variant} (seed {r.seed})") for r in reports])
    group_w = 7 * len(ks) - 1
    head1 = " " * name_w + " | " + " | ".join(d.center(group_w) for d in present)
    head2 = "Model".ljust(name_w) + " | " + " | ".join(
        " ".join(f"R@{k}".rjust(6) for k in ks) for _ in present)
    lines = [head1, head2, "-" * len(head2)]
    for r in reports:
        cells = []
        for d in present:
            if d in r.recalls:
                cells.append(" ".join(f"{r.recalls[d].get(k, float('nan')):6.3f}" for k in ks))
            else:
                cells.append(" ".join("     -" for _ in ks))
        lines.append(f"{r.variant} (seed {r.seed})".ljust(name_w) + " | " + " | ".join(cells))
    return "\n".join(lines)
