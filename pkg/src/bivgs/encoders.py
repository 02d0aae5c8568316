"""Image and spoken-caption encoders plus the binary checkpoint format.

Both encoder kinds are small ReLU MLPs ending in an optional row-wise L2
normalisation. Caption encoders first mean-pool the log-mel spectrogram over
time, so they only ever see an ``n_mels`` vector per caption.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numcore as nc
from .errors import DimensionError, FormatError, VersionError

ROLES = ("image", "hrl", "lrl")

CKPT_MAGIC = b"BIVGSCKP"
CKPT_VERSION = 1


@dataclass
class Encoder:
    """Parameters of one MLP tower.

    ``params`` maps ``W0, b0, W1, b1, ...`` to float64 arrays; ``W`` matrices
    are ``fan_in x fan_out`` and applied as ``x @ W + b``.
    """

    role: str
    params: dict[str, np.ndarray]
    frozen: bool = False
    normalize: bool = True

    @classmethod
    def init(cls, role: str, in_dim: int, embed_dim: int, hidden: Sequence[int] = (64,),
             seed: int = 0, normalize: bool = True) -> "Encoder":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation from ``seed``."""
        rng = np.random.default_rng(np.random.SeedSequence([seed, ROLES.index(role)]))
        widths = [in_dim, *hidden, embed_dim]
        params = {}
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            params[f"b{i}"] = rng.uniform(-bound, bound, size=(1, fan_out))
        return cls(role, params, normalize=normalize)

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    @property
    def in_dim(self) -> int:
        return self.params["W0"].shape[0]

    @property
    def embed_dim(self) -> int:
        return self.params[f"W{self.n_layers - 1}"].shape[1]

    def copy(self) -> "Encoder":
        return Encoder(self.role, {k: v.copy() for k, v in self.params.items()},
                       self.frozen, self.normalize)

    def leaves(self) -> dict[str, nc.Node]:
        """Fresh graph leaves for one step; frozen encoders get constants."""
        make = nc.constant if self.frozen else nc.parameter
        return {k: make(v) for k, v in self.params.items()}

    def forward(self, x, leaves: dict[str, nc.Node] | None = None) -> nc.Node:
        x = nc.as_matrix(x, f"{self.role} input")
        if x.shape[1] != self.in_dim:
            raise DimensionError(f"{self.role} encoder expects width {self.in_dim}, got {x.shape[1]}")
        p = leaves if leaves is not None else self.leaves()
        h = nc.constant(x)
        for i in range(self.n_layers):
            h = h @ p[f"W{i}"] + p[f"b{i}"]
            if i < self.n_layers - 1:
                h = nc.relu(h)
        return nc.l2_normalize_rows(h) if self.normalize else h


def freeze(enc: Encoder) -> Encoder:
    enc.frozen = True
    return enc


def unfreeze(enc: Encoder) -> Encoder:
    enc.frozen = False
    return enc


@dataclass
class EmbeddingBatch:
    node: nc.Node
    normalized: bool = True

    @property
    def rows(self) -> np.ndarray:
        return self.node.value

    @property
    def n(self) -> int:
        return self.node.shape[0]

    @property
    def dim(self) -> int:
        return self.node.shape[1]


def pool_captions(specs) -> np.ndarray:
    """Mean over frames: (N, T, M) -> (N, M)."""
    s = np.asarray(specs, dtype=np.float64)
    if s.ndim == 2:
        s = s[None]
    if s.ndim != 3:
        raise DimensionError(f"caption batch must be N x frames x mels, got {s.shape}")
    return s.mean(axis=1)


def encode_image(x, enc: Encoder, leaves=None) -> EmbeddingBatch:
    return EmbeddingBatch(enc.forward(x, leaves), enc.normalize)


def encode_caption(specs, enc: Encoder, leaves=None, frames: int | None = None) -> EmbeddingBatch:
    """Encode a batch of spectrograms. ``frames``, when given, is enforced."""
    s = np.asarray(specs)
    if frames is not None and (s.ndim != 3 or s.shape[1] != frames):
        raise DimensionError(f"{enc.role}: expected {frames} frames per caption, got shape {s.shape}")
    return EmbeddingBatch(enc.forward(pool_captions(s), leaves), enc.normalize)


# ---------------------------------------------------------------- checkpoints

@dataclass
class Checkpoint:
    encoders: dict[str, Encoder]
    config: dict = field(default_factory=dict)
    step: int = 0
    variant: str = "init"

    def copy(self) -> "Checkpoint":
        return Checkpoint({r: e.copy() for r, e in self.encoders.items()},
                          json.loads(json.dumps(self.config)), self.step, self.variant)


_U32 = struct.Struct("<I")


def checkpoint_bytes(ck: Checkpoint) -> bytes:
    """Serialise: magic, version, JSON header, then shape-prefixed float64 blobs."""
    roles = [r for r in ROLES if r in ck.encoders]
    embed = {ck.encoders[r].embed_dim for r in roles}
    norm = {ck.encoders[r].normalize for r in roles}
    header = {
        "roles": roles,
        "embed_dim": embed.pop() if len(embed) == 1 else None,
        "normalize": norm.pop() if len(norm) == 1 else None,
        "encoders": {r: {"frozen": ck.encoders[r].frozen, "normalize": ck.encoders[r].normalize,
                         "params": list(ck.encoders[r].params)} for r in roles},
        "variant": ck.variant,
        "step": ck.step,
        "config": ck.config,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    out = [CKPT_MAGIC, _U32.pack(CKPT_VERSION), _U32.pack(len(hbytes)), hbytes]
    for r in roles:
        for name, arr in ck.encoders[r].params.items():
            tag = f"{r}/{name}".encode()
            out.append(_U32.pack(len(tag)) + tag)
            out.append(_U32.pack(arr.ndim) + b"".join(_U32.pack(d) for d in arr.shape))
            out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def save_checkpoint(ck: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ck))


def checkpoint_from_bytes(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError(f"{source}: truncated while reading {what}")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    if take(8, "magic") != CKPT_MAGIC:
        raise FormatError(f"{source}: not a checkpoint (bad magic)")
    (version,) = _U32.unpack(take(4, "version"))
    if version != CKPT_VERSION:
        raise VersionError(f"{source}: unsupported checkpoint version {version}")
    (hlen,) = _U32.unpack(take(4, "header length"))
    try:
        header = json.loads(take(hlen, "header"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}: header is not valid JSON ({exc})") from None
    encoders = {}
    for r in header["roles"]:
        meta = header["encoders"][r]
        params = {}
        for name in meta["params"]:
            (tlen,) = _U32.unpack(take(4, f"{r}/{name} tag"))
            tag = take(tlen, f"{r}/{name} tag").decode()
            if tag != f"{r}/{name}":
                raise FormatError(f"{source}: expected blob {r}/{name}, found {tag}")
            (ndim,) = _U32.unpack(take(4, f"{tag} rank"))
            shape = tuple(_U32.unpack(take(4, f"{tag} shape"))[0] for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(take(8 * n, f"{tag} data"), dtype="<f8")
            params[name] = data.astype(np.float64).reshape(shape)
        encoders[r] = Encoder(r, params, frozen=meta["frozen"], normalize=meta["normalize"])
    if pos != len(blob):
        raise FormatError(f"{source}: {len(blob) - pos} trailing bytes")
    return Checkpoint(encoders, header["config"], header["step"], header["variant"])


def load_checkpoint(path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes(), str(path))
