"""Synthetic bilingual image/caption triplets built from shared latent concepts.

Every sample draws a latent vector near one of ``n_concepts`` concept
centres. The image feature is a fixed linear view of that latent; each
language renders it through its own fixed nonlinear map into a
log-mel-shaped caption tensor, with caption-level and frame-level noise.
Several samples share a concept, which is what makes "semantically similar"
captions exist in the first place.

Datasets live in a directory holding ``manifest.json`` and one
little-endian float32 blob per split.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .audiofeat import FrontendConfig, Waveform, caption_features, mel_center_frequencies
from .errors import ConfigError, FormatError, VersionError

SPLITS = ("train_hrl_large", "train_bilingual", "validation")
FORMAT_TAG = "bivgs-dataset"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class GenerationConfig:
    n_concepts: int = 64
    duplicates_per_concept: int = 4
    hrl_factor: int = 4
    n_validation: int = 200
    image_dim: int = 512
    latent_dim: int = 16
    n_mels: int = 40
    frames_hrl: int = 32
    frames_lrl: int = 96
    sigma_sample: float = 0.2
    sigma_image: float = 2.0
    sigma_hrl: float = 0.05
    sigma_lrl: float = 0.1
    sigma_frame: float = 0.3
    mel_level: float = -4.0
    caption_mode: str = "mel"  # or "waveform"
    sample_rate: int = 16000

    def __post_init__(self):
        for name in ("n_concepts", "duplicates_per_concept", "hrl_factor", "n_validation",
                     "image_dim", "latent_dim", "n_mels", "frames_hrl", "frames_lrl"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("sigma_sample", "sigma_image", "sigma_hrl", "sigma_lrl", "sigma_frame"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.caption_mode not in ("mel", "waveform"):
            raise ConfigError(f"caption_mode must be 'mel' or 'waveform', got {self.caption_mode!r}")

    @property
    def n_bilingual(self) -> int:
        return self.n_concepts * self.duplicates_per_concept

    @property
    def n_hrl(self) -> int:
        return self.hrl_factor * self.n_bilingual


@dataclass(frozen=True)
class Triplet:
    image_feat: np.ndarray
    cap1: np.ndarray
    cap2: np.ndarray
    sample_id: int
    concept_id: int


@dataclass
class Split:
    """Column-stacked samples of one split, ordered by sample id."""

    sample_ids: np.ndarray  # (N,) int64
    concept_ids: np.ndarray  # (N,) int64
    images: np.ndarray  # (N, d_v) float32
    cap1: np.ndarray  # (N, T1, M) float32
    cap2: np.ndarray  # (N, T2, M) float32; T2 = 0 when the split has no LRL captions

    def __len__(self) -> int:
        return len(self.sample_ids)

    def __getitem__(self, i: int) -> Triplet:
        return Triplet(self.images[i], self.cap1[i], self.cap2[i],
                       int(self.sample_ids[i]), int(self.concept_ids[i]))

    def index_of(self, sample_id: int) -> int:
        hit = np.flatnonzero(self.sample_ids == sample_id)
        if hit.size == 0:
            raise KeyError(sample_id)
        return int(hit[0])


@dataclass
class SyntheticDataset:
    config: GenerationConfig
    seed: int
    splits: dict[str, Split]
    frontend: FrontendConfig | None = None  # set in waveform mode

    def concept_of(self, sample_id: int) -> int:
        for s in self.splits.values():
            hit = np.flatnonzero(s.sample_ids == sample_id)
            if hit.size:
                return int(s.concept_ids[hit[0]])
        raise KeyError(sample_id)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SyntheticDataset):
            return NotImplemented
        if (self.config != other.config or self.seed != other.seed or self.frontend != other.frontend
                or set(self.splits) != set(other.splits)):
            return False
        for name, a in self.splits.items():
            b = other.splits[name]
            for f in fields(Split):
                x, y = getattr(a, f.name), getattr(b, f.name)
                if x.shape != y.shape or x.dtype != y.dtype or x.tobytes() != y.tobytes():
                    return False
        return True


class _World:
    """Fixed concept centres and modality maps shared by every sample."""

    def __init__(self, cfg: GenerationConfig, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
        d = cfg.latent_dim
        self.concepts = rng.standard_normal((cfg.n_concepts, d))
        self.image_map = rng.standard_normal((d, cfg.image_dim)) / np.sqrt(d)
        self.lang_maps = [rng.standard_normal((d, cfg.n_mels)) / np.sqrt(d) for _ in range(2)]
        self.lang_bias = [rng.standard_normal(cfg.n_mels) * 0.5 for _ in range(2)]


def _mel_profile(world: _World, lang: int, latent: np.ndarray) -> np.ndarray:
    return np.tanh(latent @ world.lang_maps[lang] + world.lang_bias[lang])


def _render_caption(cfg, world, lang, latent, sigma, frames, rng, frontend):
    profile = _mel_profile(world, lang, latent) + sigma * rng.standard_normal(cfg.n_mels)
    if cfg.caption_mode == "mel":
        body = profile[None, :] + cfg.sigma_frame * rng.standard_normal((frames, cfg.n_mels))
        return (cfg.mel_level + body).astype(np.float32)
    # waveform mode: one sinusoid per mel filter centre, log-amplitude set by the profile
    fe = replace(frontend, target_frames=frames)
    n = fe.frame_length() + fe.hop_length() * (frames - 1)
    t = np.arange(n) / cfg.sample_rate
    centres = mel_center_frequencies(cfg.n_mels, cfg.sample_rate)
    amps = 0.02 * np.exp(np.clip(profile, -3, 3))
    phases = rng.uniform(0, 2 * np.pi, cfg.n_mels)
    wave = (amps[:, None] * np.sin(2 * np.pi * centres[:, None] * t[None, :] + phases[:, None])).sum(axis=0)
    wave += 1e-3 * cfg.sigma_frame * rng.standard_normal(n)
    wave = np.clip(wave, -1.0, 1.0)
    return caption_features(Waveform(wave, cfg.sample_rate), fe).data.astype(np.float32)


def _render(cfg: GenerationConfig, world: _World, seed: int, sample_id: int, concept: int,
            with_lrl: bool, frontend: FrontendConfig) -> tuple:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1, sample_id]))
    latent = world.concepts[concept] + cfg.sigma_sample * rng.standard_normal(cfg.latent_dim)
    image = latent @ world.image_map + cfg.sigma_image * rng.standard_normal(cfg.image_dim)
    cap1 = _render_caption(cfg, world, 0, latent, cfg.sigma_hrl, cfg.frames_hrl, rng, frontend)
    if with_lrl:
        cap2 = _render_caption(cfg, world, 1, latent, cfg.sigma_lrl, cfg.frames_lrl, rng, frontend)
    else:
        cap2 = np.zeros((0, cfg.n_mels), dtype=np.float32)
    return image.astype(np.float32), cap1, cap2


def generate(cfg: GenerationConfig = GenerationConfig(), seed: int = 0,
             frontend: FrontendConfig | None = None) -> SyntheticDataset:
    """Deterministic dataset for ``(cfg, seed)``.

    Sample ids are global and contiguous: HRL pretraining samples first,
    then the bilingual training split, then validation. ``frontend`` only
    matters in waveform mode, where captions go through the real log-mel
    frontend.
    """
    if cfg.caption_mode == "waveform":
        frontend = frontend or FrontendConfig(n_mels=cfg.n_mels, sample_rate=cfg.sample_rate)
        if frontend.n_mels != cfg.n_mels or frontend.sample_rate != cfg.sample_rate:
            raise ConfigError("frontend n_mels/sample_rate must match the generation config")
    else:
        frontend = None
    world = _World(cfg, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A]))
    layout = {
        "train_hrl_large": (np.arange(cfg.n_hrl) % cfg.n_concepts, False),
        "train_bilingual": (np.repeat(np.arange(cfg.n_concepts), cfg.duplicates_per_concept), True),
        "validation": (rng.integers(0, cfg.n_concepts, cfg.n_validation), True),
    }
    splits = {}
    next_id = 0
    for name in SPLITS:
        concepts, with_lrl = layout[name]
        ids = np.arange(next_id, next_id + len(concepts), dtype=np.int64)
        next_id += len(concepts)
        rendered = [_render(cfg, world, seed, int(i), int(c), with_lrl, frontend) for i, c in zip(ids, concepts)]
        splits[name] = Split(
            sample_ids=ids,
            concept_ids=np.asarray(concepts, dtype=np.int64),
            images=np.stack([r[0] for r in rendered]),
            cap1=np.stack([r[1] for r in rendered]),
            cap2=np.stack([r[2] for r in rendered]),
        )
    return SyntheticDataset(cfg, seed, splits, frontend)


# ---------------------------------------------------------------- file I/O

_U32 = struct.Struct("<I")
_REC = struct.Struct("<QQ")  # sample_id, concept_id


def _write_array(out: list, arr: np.ndarray) -> None:
    out.append(_U32.pack(arr.ndim) + b"".join(_U32.pack(d) for d in arr.shape))
    out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save(ds: SyntheticDataset, path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "seed": ds.seed,
        "config": asdict(ds.config),
        "frontend": asdict(ds.frontend) if ds.frontend is not None else None,
        "splits": {},
    }
    for name, s in ds.splits.items():
        out: list[bytes] = []
        for i in range(len(s)):
            out.append(_REC.pack(int(s.sample_ids[i]), int(s.concept_ids[i])))
            _write_array(out, s.images[i])
            _write_array(out, s.cap1[i])
            _write_array(out, s.cap2[i])
        fname = f"{name}.bin"
        (root / fname).write_bytes(b"".join(out))
        manifest["splits"][name] = {
            "file": fname,
            "n": len(s),
            "image_shape": list(s.images.shape[1:]),
            "cap1_shape": list(s.cap1.shape[1:]),
            "cap2_shape": list(s.cap2.shape[1:]),
        }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def _field(obj: dict, key: str, where: str):
    if key not in obj:
        raise FormatError(f"{where}: missing field '{key}'")
    return obj[key]


def _read_split(blob: bytes, name: str, n: int, source: str) -> Split:
    pos = 0
    ids, concepts, images, cap1, cap2 = [], [], [], [], []
    last_id = None
    for rec in range(n):
        sid_hint = f"sample after id {last_id}" if last_id is not None else "first sample"

        def need(k: int, what: str, sid: str) -> None:
            if pos + k > len(blob):
                raise FormatError(f"{source}: split {name}: truncated {what} of {sid} (record {rec})")

        need(_REC.size, "record header", sid_hint)
        sid, cid = _REC.unpack_from(blob, pos)
        pos += _REC.size
        label = f"sample {sid}"
        arrays = []
        for part in ("image", "cap1", "cap2"):
            need(4, f"{part} rank", label)
            (ndim,) = _U32.unpack_from(blob, pos)
            pos += 4
            need(4 * ndim, f"{part} shape", label)
            shape = tuple(_U32.unpack_from(blob, pos + 4 * k)[0] for k in range(ndim))
            pos += 4 * ndim
            count = int(np.prod(shape)) if shape else 1
            need(4 * count, f"{part} data", label)
            arrays.append(np.frombuffer(blob, dtype="<f4", count=count, offset=pos)
                          .astype(np.float32).reshape(shape))
            pos += 4 * count
        ids.append(sid)
        concepts.append(cid)
        images.append(arrays[0])
        cap1.append(arrays[1])
        cap2.append(arrays[2])
        last_id = sid
    if pos != len(blob):
        raise FormatError(f"{source}: split {name}: {len(blob) - pos} unexpected trailing bytes")
    return Split(np.asarray(ids, dtype=np.int64), np.asarray(concepts, dtype=np.int64),
                 np.stack(images), np.stack(cap1), np.stack(cap2))


def load(path) -> SyntheticDataset:
    root = Path(path)
    mpath = root / "manifest.json"
    try:
        text = mpath.read_text()
    except FileNotFoundError:
        raise FormatError(f"{mpath}: manifest not found") from None
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    where = str(mpath)
    if _field(manifest, "format", where) != FORMAT_TAG:
        raise FormatError(f"{where}: field 'format' is {manifest['format']!r}, expected {FORMAT_TAG!r}")
    version = _field(manifest, "version", where)
    if version != FORMAT_VERSION:
        raise VersionError(f"{where}: unknown dataset format version {version!r}")
    raw_cfg = _field(manifest, "config", where)
    known = {f.name for f in fields(GenerationConfig)}
    extra = set(raw_cfg) - known
    if extra:
        raise FormatError(f"{where}: field 'config' has unknown keys {sorted(extra)}")
    try:
        cfg = GenerationConfig(**raw_cfg)
    except (TypeError, ConfigError) as exc:
        raise FormatError(f"{where}: field 'config': {exc}") from None
    fe_raw = manifest.get("frontend")
    try:
        frontend = FrontendConfig(**fe_raw) if fe_raw is not None else None
    except (TypeError, ConfigError) as exc:
        raise FormatError(f"{where}: field 'frontend': {exc}") from None
    splits = {}
    for name, meta in _field(manifest, "splits", where).items():
        swhere = f"{where}: splits.{name}"
        blob = (root / _field(meta, "file", swhere)).read_bytes()
        splits[name] = _read_split(blob, name, int(_field(meta, "n", swhere)), str(root / meta["file"]))
    return SyntheticDataset(cfg, int(_field(manifest, "seed", where)), splits, frontend)
