"""Waveform I/O, the canonical 20 ms frame grid, clip extraction, and baseline features.

Everything here is a pure function over immutable inputs; the canonical grid is
320 samples per frame (20 ms at 16 kHz), 64 frames per 1.28 s clip.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import DataError

SAMPLE_RATE = 16000
ENERGY_FLOOR = 1e-10         # added before every log
FEATURE_DIM = 20             # energy, zcr, centroid, flux + 16 log-mel bands
N_MEL_BANDS = 16
ANALYSIS_WINDOW = 400        # 25 ms analysis window
NFFT = 512


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono PCM audio: float64 samples plus a sample rate.

    File I/O keeps amplitudes normalized to [-1, 1]; in-memory processing
    (augmentation, splicing) may exceed that transiently and is clipped on
    write.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("waveform must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class FrameGridSpec:
    """Frame grid: hop per label frame, clip window, and inference step (all samples)."""

    hop_samples: int = 320
    window_samples: int = 20480
    step_samples: int = 10240

    def __post_init__(self):
        if self.hop_samples <= 0:
            raise ValueError("hop_samples must be positive")
        if self.window_samples % self.hop_samples != 0:
            raise ValueError("hop must divide the window")
        if not (0 < self.step_samples <= self.window_samples):
            raise ValueError("step must be in (0, window]")
        if self.step_samples % self.hop_samples != 0:
            raise ValueError("step must be a multiple of hop so clip grids align")

    @property
    def frames_per_window(self) -> int:
        return self.window_samples // self.hop_samples


@dataclass(frozen=True, eq=False)
class FrameFeatures:
    """Per-frame feature matrix on the 20 ms grid."""

    n_frames: int
    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (self.n_frames, self.dim):
            raise ValueError("feature matrix shape mismatch")
        if not np.all(np.isfinite(m)):
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "matrix", m)


def n_frames(n_samples: int, grid: FrameGridSpec) -> int:
    """Number of whole label frames in a signal of n_samples."""
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    return n_samples // grid.hop_samples


def read_wav(path) -> Waveform:
    """Read a PCM WAV file as normalized mono float64.

    Supports 16-bit PCM (scaled by 1/32768) and IEEE float32. Multi-channel
    input is averaged down to mono.
    """
    path = Path(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # scipy warns about extra RIFF chunks
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found")
    except Exception as exc:
        raise DataError(f"{path}: unreadable WAV ({exc})")

    if data.size == 0:
        raise DataError(f"{path}: zero-length audio")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample encoding {data.dtype}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    samples = np.clip(samples, -1.0, 1.0)
    return Waveform(samples, int(rate))


def write_wav(path, w: Waveform, encoding: str = "pcm16") -> None:
    """Write mono WAV as 16-bit PCM (default) or IEEE float32."""
    path = Path(path)
    if encoding == "pcm16":
        data = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif encoding == "float32":
        data = np.clip(w.samples, -1.0, 1.0).astype(np.float32)
    else:
        raise ValueError(f"unsupported encoding {encoding!r}")
    wavfile.write(path, w.sample_rate, data)


def extract_clip(w: Waveform, start_sample: int, length: int) -> Waveform:
    """Take `length` samples starting at `start_sample`.

    If fewer samples are available the extracted region is repeated
    cyclically until the requested length is filled.
    """
    if not 0 <= start_sample < len(w):
        raise ValueError(f"start_sample {start_sample} out of range [0, {len(w)})")
    if length <= 0:
        raise ValueError("length must be positive")
    avail = w.samples[start_sample:start_sample + length]
    if avail.size < length:
        avail = np.resize(avail, length)  # cyclic repetition
    return Waveform(avail.copy(), w.sample_rate)


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_band_edges(n_bands: int, sr: int, fmin: float = 0.0, fmax: float | None = None) -> tuple:
    """Band edge frequencies in Hz: n_bands + 2 points, mel-spaced."""
    if fmax is None:
        fmax = sr / 2.0
    mels = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_bands + 2)
    return tuple(_mel_to_hz(mels))


@lru_cache(maxsize=8)
def _mel_filterbank(n_bands: int, nfft: int, sr: int) -> np.ndarray:
    """Triangular mel filterbank, shape (n_bands, nfft//2 + 1)."""
    edges = np.array(mel_band_edges(n_bands, sr))
    freqs = np.arange(nfft // 2 + 1) * (sr / nfft)
    fb = np.zeros((n_bands, freqs.size))
    for b in range(n_bands):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - lo) / max(mid - lo, 1e-9)
        down = (hi - freqs) / max(hi - mid, 1e-9)
        fb[b] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def features(w: Waveform, grid: FrameGridSpec) -> FrameFeatures:
    """Baseline 20-dim spectral features per 20 ms frame.

    Columns: log energy, zero-crossing rate, spectral centroid (Hz),
    spectral flux, then 16 log-mel band energies. Frames use a 25 ms
    analysis window on the 20 ms hop; the tail window is zero-padded.
    """
    hop = grid.hop_samples
    if len(w) < hop:
        raise ValueError("input shorter than one frame hop")
    nf = n_frames(len(w), grid)
    x = w.samples
    window = np.hanning(ANALYSIS_WINDOW)
    fb = _mel_filterbank(N_MEL_BANDS, NFFT, w.sample_rate)
    freqs = np.arange(NFFT // 2 + 1) * (w.sample_rate / NFFT)

    # frame matrix with zero-padded tail
    frames = np.zeros((nf, ANALYSIS_WINDOW))
    for i in range(nf):
        seg = x[i * hop:i * hop + ANALYSIS_WINDOW]
        frames[i, :seg.size] = seg

    energy = np.log(np.mean(frames ** 2, axis=1) + ENERGY_FLOOR)
    signs = np.signbit(frames)
    zcr = np.mean(signs[:, 1:] != signs[:, :-1], axis=1)

    mag = np.abs(np.fft.rfft(frames * window, NFFT, axis=1))
    mag_sum = mag.sum(axis=1)
    centroid = (mag @ freqs) / (mag_sum + ENERGY_FLOOR)
    norm = mag / (mag_sum[:, None] + ENERGY_FLOOR)
    flux = np.zeros(nf)
    if nf > 1:
        flux[1:] = np.linalg.norm(norm[1:] - norm[:-1], axis=1)
        flux[0] = flux[1]  # no left context at a clip start
    logmel = np.log((mag ** 2) @ fb.T + ENERGY_FLOOR)

    matrix = np.column_stack([energy, zcr, centroid, flux, logmel])
    return FrameFeatures(n_frames=nf, dim=FEATURE_DIM, matrix=matrix)
