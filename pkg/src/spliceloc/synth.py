"""Desk-scale signal generation: speech-like genuine audio and the spectral
degradation used to produce the fake class.

Genuine audio is a harmonic source with gliding pitch, formant-shaped
partials, slow syllabic amplitude modulation, and a pink noise floor. The
fake class re-uses genuine audio passed through a 16-band amplitude
quantizer that snaps each band's level (relative to the frame level) onto
a coarse dB grid and gates bands that fall below a floor.
"""

from __future__ import annotations

import numpy as np
from scipy import signal as sps

from .audio import Waveform, mel_band_edges

DEGRADE_BANDS = 16
DEGRADE_STEP_DB = 6.0
DEGRADE_FLOOR_DB = -26.0
_STFT_NPERSEG = 512


def synth_genuine(rng: np.random.Generator, n_samples: int, sr: int = 16000) -> Waveform:
    """Generate one speech-like genuine utterance.

    Pitch, formants, modulation and noise level are drawn per call, so
    different draws give distinct "speakers".
    """
    t = np.arange(n_samples) / sr

    # gliding fundamental with mild vibrato, kept smooth so spectral flux stays low
    f0_start = rng.uniform(100.0, 240.0)
    f0_end = f0_start * rng.uniform(0.85, 1.2)
    vibrato = rng.uniform(1.0, 3.0) * np.sin(2 * np.pi * rng.uniform(4.0, 6.0) * t)
    f0 = np.linspace(f0_start, f0_end, n_samples) + vibrato
    phase = 2 * np.pi * np.cumsum(f0) / sr

    # formant-shaped harmonic stack
    n_harm = int(rng.integers(14, 24))
    centers = rng.uniform([350, 900, 2200], [800, 2000, 3600])
    widths = rng.uniform(120, 320, size=3)
    gains = rng.uniform(0.5, 1.0, size=3)
    x = np.zeros(n_samples)
    for k in range(1, n_harm + 1):
        fk = k * (f0_start + f0_end) / 2
        if fk >= sr / 2:
            break
        amp = 0.02 + np.sum(gains * np.exp(-0.5 * ((fk - centers) / widths) ** 2))
        amp /= k ** 0.3
        x += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    x /= np.max(np.abs(x)) + 1e-12

    # slow raised-cosine syllabic modulation (no abrupt onsets)
    am_rate = rng.uniform(1.5, 4.0)
    am_depth = rng.uniform(0.25, 0.6)
    am = 1.0 - am_depth * 0.5 * (1 + np.sin(2 * np.pi * am_rate * t + rng.uniform(0, 2 * np.pi)))
    x *= am

    # pink-ish noise floor (breathiness)
    spec = np.fft.rfft(rng.standard_normal(n_samples))
    freqs = np.fft.rfftfreq(n_samples, 1 / sr)
    spec /= np.sqrt(np.maximum(freqs, 40.0))
    noise = np.fft.irfft(spec, n_samples)
    noise /= np.std(noise) + 1e-12
    noise_db = rng.uniform(-30.0, -24.0)
    x += noise * np.std(x) * 10 ** (noise_db / 20.0)

    peak = rng.uniform(0.35, 0.6)
    x *= peak / (np.max(np.abs(x)) + 1e-12)
    return Waveform(x, sr)


def _band_bins(sr: int, n_bands: int = DEGRADE_BANDS) -> list[np.ndarray]:
    edges = np.array(mel_band_edges(n_bands, sr))
    freqs = np.arange(_STFT_NPERSEG // 2 + 1) * (sr / _STFT_NPERSEG)
    out = []
    for b in range(n_bands):
        lo, hi = edges[b], edges[b + 2]
        out.append(np.flatnonzero((freqs >= lo) & (freqs < hi)))
    return out


def spectral_degrade(
    w: Waveform,
    step_db: float = DEGRADE_STEP_DB,
    floor_db: float = DEGRADE_FLOOR_DB,
) -> Waveform:
    """16-band amplitude quantization: the desk-scale stand-in for synthesis artifacts.

    Each STFT frame's band levels (dB relative to the frame's mean level)
    are snapped to a `step_db` grid; bands below `floor_db` are gated to
    silence. The quantization is relative to the frame level so overall
    loudness contours survive while the fine spectral envelope is crushed.
    """
    sr = w.sample_rate
    _, _, z = sps.stft(w.samples, fs=sr, nperseg=_STFT_NPERSEG, noverlap=_STFT_NPERSEG // 2)
    bands = _band_bins(sr)
    power = np.abs(z) ** 2
    frame_db = 10 * np.log10(power.mean(axis=0) + 1e-20)
    smooth = np.hanning(7)
    smooth /= smooth.sum()
    for bins in bands:
        if bins.size == 0:
            continue
        band_db = 10 * np.log10(power[bins].mean(axis=0) + 1e-20)
        rel = band_db - frame_db
        q = step_db * np.round(rel / step_db)
        gain = np.where(q < floor_db, 0.0, 10 ** ((q - rel) / 20.0))
        # soften gain switching over ~100 ms: the artifact should be a
        # crushed envelope, not a train of clicks at every cell crossing
        if gain.size >= smooth.size:
            gain = np.convolve(gain, smooth, mode="same")
        z[bins] *= gain[None, :]
    _, y = sps.istft(z, fs=sr, nperseg=_STFT_NPERSEG, noverlap=_STFT_NPERSEG // 2)
    if y.size < len(w):
        y = np.pad(y, (0, len(w) - y.size))
    y = y[:len(w)]
    peak = np.max(np.abs(y))
    if peak > 1.0:
        y = y / peak
    return Waveform(y, sr)
