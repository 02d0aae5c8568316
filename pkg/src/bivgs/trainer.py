"""Staged training: HRL pretraining, then one of five bilingual variants."""
from __future__ import annotations

import enum
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import numcore as nc
from .datagen import Split, SyntheticDataset
from .encoders import Checkpoint, Encoder, encode_caption, encode_image
from .errors import ConfigError, ContractError, NumericError
from .losses import FULL_MASK, MONOLINGUAL_MASK, LossReport, base_loss, nn_loss, total_loss
from .simqueue import PairedQueue


class TrainVariant(enum.Enum):
    MONOLINGUAL = "Monolingual"
    BILINGUAL = "Bilingual"
    BILINGUAL_NN = "BilingualNN"
    BILINGUAL_PHRL = "BilingualPHRL"
    OURS = "Ours"

    @classmethod
    def parse(cls, name: str) -> "TrainVariant":
        for v in cls:
            if v.value.lower() == name.lower() or v.name.lower() == name.lower():
                return v
        raise ConfigError(f"unknown variant {name!r}; choose from {[v.value for v in cls]}")

    @property
    def hrl_present(self) -> bool:
        return self is not TrainVariant.MONOLINGUAL

    @property
    def hrl_frozen(self) -> bool:
        return self in (TrainVariant.BILINGUAL_PHRL, TrainVariant.OURS)

    @property
    def needs_pretrained(self) -> bool:
        return self.hrl_frozen

    @property
    def nn_enabled(self) -> bool:
        return self in (TrainVariant.BILINGUAL_NN, TrainVariant.OURS)

    @property
    def nn_bidirectional(self) -> bool:
        return self is TrainVariant.BILINGUAL_NN

    @property
    def loss_terms(self) -> frozenset:
        return MONOLINGUAL_MASK if self is TrainVariant.MONOLINGUAL else FULL_MASK


@dataclass
class TrainConfig:
    tau: float = 0.3
    queue_capacity: int = 1024
    batch_size: int = 32
    steps: int = 300
    pretrain_steps: int = 600
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    normalize: bool = True
    warm_threshold: int | None = None  # None -> one batch
    embed_dim: int = 32
    hidden_dim: int = 64
    symmetric_infonce: bool = False
    progress: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("tau must be > 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.steps < 0 or self.pretrain_steps < 0:
            raise ConfigError("step counts must be >= 0")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity must be >= 1")

    @property
    def warm(self) -> int:
        return self.batch_size if self.warm_threshold is None else self.warm_threshold

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("progress")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class LogRow:
    step: int
    report: LossReport
    queue_size: int

    CSV_HEADER = "step,l_av1,l_av2,l_a1a2,l_nn,total,queue_size"

    def csv(self) -> str:
        return ",".join([str(self.step), *self.report.csv_fields(), str(self.queue_size)])


@dataclass
class TrainRun:
    checkpoint: Checkpoint
    log: list[LogRow] = field(default_factory=list)

    def log_csv(self) -> str:
        return "\n".join([LogRow.CSV_HEADER, *(r.csv() for r in self.log)]) + "\n"


def sgd_update(params: dict, grads: dict, lr: float, momentum: float, velocity: dict,
               frozen: bool = False) -> dict:
    """v <- momentum*v + g; theta <- theta - lr*v. ``velocity`` is updated in place."""
    if frozen:
        return params
    out = {}
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = theta
            continue
        if g.shape != theta.shape:
            raise ContractError(f"gradient for {name} has shape {g.shape}, parameter {theta.shape}")
        v = velocity.get(name)
        v = g.copy() if v is None else momentum * v + g
        velocity[name] = v
        out[name] = theta - lr * v
    return out


def _batches(n: int, batch: int, steps: int, rng: np.random.Generator):
    """Yield ``steps`` index batches: per-epoch shuffles, last partial batch dropped."""
    if n < batch:
        raise ConfigError(f"split of {n} samples cannot fill a batch of {batch}")
    done = 0
    while done < steps:
        perm = rng.permutation(n)
        for start in range(0, n - batch + 1, batch):
            if done == steps:
                return
            yield perm[start:start + batch]
            done += 1


def _new_encoders(split: Split, cfg: TrainConfig, roles) -> dict[str, Encoder]:
    in_dims = {"image": split.images.shape[1], "hrl": split.cap1.shape[2], "lrl": split.cap2.shape[2]}
    return {r: Encoder.init(r, in_dims[r], cfg.embed_dim, (cfg.hidden_dim,), cfg.seed, cfg.normalize)
            for r in roles}


def _check_finite(encoders: dict[str, Encoder], step: int) -> None:
    for role, enc in encoders.items():
        for name, arr in enc.params.items():
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite value in {role}/{name} after step {step}")


class _Stepper:
    """Owns the optimiser state for one training stage."""

    def __init__(self, encoders: dict[str, Encoder], cfg: TrainConfig):
        self.encoders = encoders
        self.cfg = cfg
        self.velocity = {r: {} for r in encoders}

    def apply(self, leaves: dict[str, dict[str, nc.Node]], loss: nc.Node, step: int) -> None:
        nc.backward(loss)
        for role, enc in self.encoders.items():
            if enc.frozen:
                continue
            grads = {k: n.grad for k, n in leaves[role].items() if n.grad is not None}
            enc.params = sgd_update(enc.params, grads, self.cfg.lr, self.cfg.momentum,
                                    self.velocity[role])
        _check_finite(self.encoders, step)


def _progress(cfg: TrainConfig, label: str, step: int, every: int, rep: LossReport) -> None:
    if cfg.progress and every and step % every == 0:
        print(f"[{label}] step {step} total {rep.total:.4f}", file=sys.stderr)


def pretrain_hrl(ds: SyntheticDataset, cfg: TrainConfig) -> TrainRun:
    """Image + HRL encoders trained with L(A_HRL, V) on the large HRL split."""
    split = ds.splits.get("train_hrl_large")
    if split is None or len(split) == 0:
        raise ConfigError("dataset has no HRL pretraining samples")
    encoders = _new_encoders(split, cfg, ("image", "hrl"))
    stepper = _Stepper(encoders, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x9E]))
    log = []
    epoch = max(1, len(split) // cfg.batch_size)
    for step, idx in enumerate(_batches(len(split), cfg.batch_size, cfg.pretrain_steps, rng)):
        leaves = {r: e.leaves() for r, e in encoders.items()}
        v = encode_image(split.images[idx], encoders["image"], leaves["image"])
        a1 = encode_caption(split.cap1[idx], encoders["hrl"], leaves["hrl"])
        terms = {"av1": base_loss(a1, None, v, cfg.tau, {"av1"}, cfg.symmetric_infonce)["av1"]}
        loss, rep = total_loss(terms, (), cfg.tau)
        stepper.apply(leaves, loss, step)
        log.append(LogRow(step, rep, 0))
        _progress(cfg, "pretrain", step, epoch, rep)
    ck = Checkpoint(encoders, cfg.to_dict(), cfg.pretrain_steps, "Pretrain")
    return TrainRun(ck, log)


def train(ds: SyntheticDataset, cfg: TrainConfig, variant: TrainVariant,
          init: Checkpoint | None = None) -> TrainRun:
    """Bilingual-stage training for one variant.

    Each step encodes a batch, picks queue neighbours when the variant uses
    them and the queue is warm, sums the variant's loss terms, backpropagates,
    updates every unfrozen encoder, then enqueues the batch embeddings.
    """
    if variant.needs_pretrained and init is None:
        raise ConfigError(f"variant {variant.value} requires a pretrained checkpoint")
    if not variant.needs_pretrained and init is not None:
        raise ConfigError(f"variant {variant.value} trains from scratch; no init checkpoint expected")
    split = ds.splits["train_bilingual"]
    roles = ("image", "hrl", "lrl") if variant.hrl_present else ("image", "lrl")
    encoders = _new_encoders(split, cfg, roles)
    if init is not None:
        for role in ("image", "hrl"):
            if role not in init.encoders:
                raise ConfigError(f"init checkpoint lacks the {role} encoder")
            encoders[role] = init.encoders[role].copy()
        encoders["hrl"].frozen = True
    stepper = _Stepper(encoders, cfg)
    queue = PairedQueue(cfg.queue_capacity, cfg.embed_dim) if variant.nn_enabled else None
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB1]))
    log = []
    epoch = max(1, len(split) // cfg.batch_size)
    for step, idx in enumerate(_batches(len(split), cfg.batch_size, cfg.steps, rng)):
        leaves = {r: e.leaves() for r, e in encoders.items()}
        v = encode_image(split.images[idx], encoders["image"], leaves["image"])
        a2 = encode_caption(split.cap2[idx], encoders["lrl"], leaves["lrl"])
        a1 = encode_caption(split.cap1[idx], encoders["hrl"], leaves["hrl"]) if variant.hrl_present else None
        terms = base_loss(a1, a2, v, cfg.tau, variant.loss_terms, cfg.symmetric_infonce)
        nn_terms = []
        if queue is not None and queue.is_warm(cfg.warm):
            partner2, _, _ = queue.nearest_pairs(a1.rows, key="q1")
            nn_terms.append(nn_loss(partner2, a2, cfg.tau, cfg.symmetric_infonce))
            if variant.nn_bidirectional:
                partner1, _, _ = queue.nearest_pairs(a2.rows, key="q2")
                nn_terms.append(nn_loss(partner1, a1, cfg.tau, cfg.symmetric_infonce))
        loss, rep = total_loss(terms, nn_terms, cfg.tau)
        stepper.apply(leaves, loss, step)
        if queue is not None:
            queue.enqueue(a1.rows, a2.rows, split.sample_ids[idx])
        log.append(LogRow(step, rep, len(queue) if queue is not None else 0))
        _progress(cfg, variant.value, step, epoch, rep)
    ck = Checkpoint(encoders, cfg.to_dict(), cfg.steps, variant.value)
    return TrainRun(ck, log)
