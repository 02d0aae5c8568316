"""Log-mel spectrogram frontend for spoken captions.

Waveforms are cut into Hamming-windowed frames (25 ms, 10 ms hop by
default), transformed with a real FFT, pooled through a triangular mel
filterbank and log-compressed. :func:`fit_length` then pads or truncates the
result to the fixed number of frames the caption encoders expect.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, TooShortError

RAW_MAGIC = b"VGSW"
_RAW_HEADER = struct.Struct("<4sIQ")  # magic, sample_rate, n_samples -> 16 bytes


@dataclass(frozen=True)
class FrontendConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 40
    target_frames: int = 1024
    floor_epsilon: float = 1e-10
    sample_rate: int = 16000
    fft_size: int | None = None  # None -> smallest power of two >= frame length

    def __post_init__(self):
        if not self.hop_ms > 0 or self.frame_ms < self.hop_ms:
            raise ConfigError(f"need frame_ms >= hop_ms > 0, got {self.frame_ms}/{self.hop_ms}")
        if self.n_mels < 1:
            raise ConfigError("n_mels must be >= 1")
        if self.target_frames < 1:
            raise ConfigError("target_frames must be >= 1")
        if not self.floor_epsilon > 0:
            raise ConfigError("floor_epsilon must be positive")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")

    def frame_length(self, sr: int | None = None) -> int:
        return int(round((sr or self.sample_rate) * self.frame_ms / 1000.0))

    def hop_length(self, sr: int | None = None) -> int:
        return int(round((sr or self.sample_rate) * self.hop_ms / 1000.0))

    def n_fft(self, sr: int | None = None) -> int:
        if self.fft_size is not None:
            return self.fft_size
        n = 1
        while n < self.frame_length(sr):
            n *= 2
        return n

    @property
    def log_floor(self) -> float:
        return float(np.log(self.floor_epsilon))


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64).ravel()
        if s.size == 0:
            raise ConfigError("waveform is empty")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class MelSpectrogram:
    data: np.ndarray  # frames x mels

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def mels(self) -> int:
        return self.data.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels: int, sr: int) -> np.ndarray:
    """Peak frequency (Hz) of each filter, evenly spaced on the mel scale over [0, sr/2]."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sr / 2.0), n_mels + 2))
    return edges[1:-1]


def mel_filterbank(n_mels: int, n_fft: int, sr: int) -> np.ndarray:
    """Triangular filters (n_mels x n_fft//2+1) with unit peak, spanning [0, sr/2]."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sr / 2.0), n_mels + 2))
    bins = np.fft.rfftfreq(n_fft, d=1.0 / sr)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / (mid - lo)
    falling = (hi - bins[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def frame_count(n_samples: int, cfg: FrontendConfig, sr: int | None = None) -> int:
    flen, hop = cfg.frame_length(sr), cfg.hop_length(sr)
    if n_samples < flen:
        raise TooShortError(f"{n_samples} samples is shorter than one {flen}-sample frame")
    return (n_samples - flen) // hop + 1


def log_mel(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> MelSpectrogram:
    """Frames x n_mels log filterbank energies of ``w`` (before length fitting)."""
    sr = w.sample_rate
    flen, hop, n_fft = cfg.frame_length(sr), cfg.hop_length(sr), cfg.n_fft(sr)
    n = frame_count(w.samples.size, cfg, sr)
    idx = np.arange(flen)[None, :] + hop * np.arange(n)[:, None]
    frames = w.samples[idx] * np.hamming(flen)[None, :]
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    energy = power @ mel_filterbank(cfg.n_mels, n_fft, sr).T
    return MelSpectrogram(np.log(np.maximum(energy, cfg.floor_epsilon)))


def fit_length(s: MelSpectrogram, target_frames: int, floor_epsilon: float = 1e-10) -> MelSpectrogram:
    """Truncate at the end, or end-pad with log(floor_epsilon), to ``target_frames`` rows."""
    d = s.data
    if d.shape[0] >= target_frames:
        return MelSpectrogram(d[:target_frames].copy())
    pad = np.full((target_frames - d.shape[0], d.shape[1]), np.log(floor_epsilon), dtype=d.dtype)
    return MelSpectrogram(np.vstack([d, pad]))


def caption_features(w: Waveform, cfg: FrontendConfig) -> MelSpectrogram:
    """Full frontend: log-mel then fit to ``cfg.target_frames``."""
    return fit_length(log_mel(w, cfg), cfg.target_frames, cfg.floor_epsilon)


def write_raw(path, w: Waveform) -> None:
    data = w.samples.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(RAW_MAGIC, w.sample_rate, data.size))
        fh.write(data.tobytes())


def read_raw(path) -> Waveform:
    blob = Path(path).read_bytes()
    if len(blob) < _RAW_HEADER.size:
        raise FormatError(f"{path}: shorter than the 16-byte header")
    magic, sr, n = _RAW_HEADER.unpack_from(blob)
    if magic != RAW_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    body = blob[_RAW_HEADER.size:]
    if len(body) != 4 * n:
        raise FormatError(f"{path}: header says {n} samples, found {len(body) // 4}")
    return Waveform(np.frombuffer(body, dtype="<f4").astype(np.float64), sr)
