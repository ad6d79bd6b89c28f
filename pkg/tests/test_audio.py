import numpy as np
import pytest
from scipy.io import wavfile

from spliceloc.audio import (
    ENERGY_FLOOR,
    FrameGridSpec,
    Waveform,
    extract_clip,
    features,
    n_frames,
    read_wav,
    write_wav,
)
from spliceloc.errors import DataError

GRID = FrameGridSpec()


def test_read_wav_silence(tmp_path):
    p = tmp_path / "sil.wav"
    wavfile.write(p, 16000, np.zeros(16000, dtype=np.int16))
    w = read_wav(p)
    assert len(w) == 16000
    assert w.sample_rate == 16000
    assert np.all(w.samples == 0.0)


def test_read_wav_pcm16_normalization(tmp_path):
    p = tmp_path / "max.wav"
    wavfile.write(p, 16000, np.array([32767, -32768, 0] * 200, dtype=np.int16))
    w = read_wav(p)
    assert w.samples[0] == pytest.approx(32767 / 32768)
    assert w.samples[1] == pytest.approx(-1.0)


def test_read_wav_stereo_downmix(tmp_path):
    rng = np.random.default_rng(7)
    left = rng.uniform(-0.5, 0.5, 4000)
    right = rng.uniform(-0.5, 0.5, 4000)
    stereo = np.stack([left, right], axis=1).astype(np.float32)
    p = tmp_path / "st.wav"
    wavfile.write(p, 16000, stereo)
    w = read_wav(p)
    # independent oracle: per-channel mean computed directly from the source arrays
    oracle = (left.astype(np.float64) + right.astype(np.float64)) / 2.0
    assert len(w) == 4000
    np.testing.assert_allclose(w.samples, oracle, atol=1e-7)


def test_read_wav_errors(tmp_path):
    with pytest.raises(DataError):
        read_wav(tmp_path / "missing.wav")
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFFxxxxWAVE")
    with pytest.raises(DataError):
        read_wav(bad)
    empty = tmp_path / "empty.wav"
    wavfile.write(empty, 16000, np.zeros(0, dtype=np.int16))
    with pytest.raises(DataError):
        read_wav(empty)


def test_wav_roundtrip_pcm16_within_one_lsb(tmp_path):
    rng = np.random.default_rng(3)
    w = Waveform(rng.uniform(-0.99, 0.99, 8000))
    p = tmp_path / "rt.wav"
    write_wav(p, w, encoding="pcm16")
    back = read_wav(p)
    assert np.max(np.abs(back.samples - w.samples)) <= 1.0 / 32768


def test_wav_roundtrip_float32(tmp_path):
    rng = np.random.default_rng(4)
    w = Waveform(rng.uniform(-1, 1, 5000))
    p = tmp_path / "f32.wav"
    write_wav(p, w, encoding="float32")
    back = read_wav(p)
    np.testing.assert_allclose(back.samples, w.samples, atol=1e-7)


def test_waveform_invariants():
    with pytest.raises(ValueError):
        Waveform(np.array([]))
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        Waveform(np.array([0.0]), sample_rate=0)


def test_n_frames_paper_grid():
    assert n_frames(20480, GRID) == 64
    assert n_frames(0, GRID) == 0
    assert n_frames(20479, GRID) == 63


def test_n_frames_monotone_and_periodic():
    prev = 0
    for n in range(0, 3 * 320 + 5):
        nf = n_frames(n, GRID)
        assert nf >= prev
        prev = nf
    for k in range(10):
        assert n_frames(k * 320, GRID) == k


def test_grid_spec_invariants():
    with pytest.raises(ValueError):
        FrameGridSpec(hop_samples=300, window_samples=20480)
    with pytest.raises(ValueError):
        FrameGridSpec(step_samples=30000)
    with pytest.raises(ValueError):
        FrameGridSpec(step_samples=100)
    assert GRID.frames_per_window == 64


def test_extract_clip_verbatim():
    rng = np.random.default_rng(0)
    w = Waveform(rng.uniform(-1, 1, 48000))
    clip = extract_clip(w, 0, 20480)
    assert np.array_equal(clip.samples, w.samples[:20480])


def test_extract_clip_cyclic_pad():
    rng = np.random.default_rng(1)
    w = Waveform(rng.uniform(-1, 1, 10240))
    clip = extract_clip(w, 0, 20480)
    assert len(clip) == 20480
    assert np.array_equal(clip.samples[:10240], w.samples)
    assert np.array_equal(clip.samples[10240:], w.samples)


def test_extract_clip_random_slice_oracle():
    rng = np.random.default_rng(2)
    w = Waveform(rng.uniform(-1, 1, 60000))
    for _ in range(50):
        start = int(rng.integers(0, 39000))
        clip = extract_clip(w, start, 20480)
        assert np.array_equal(clip.samples, w.samples[start:start + 20480])


def test_extract_clip_length_property():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 4000))
        w = Waveform(rng.uniform(-1, 1, n))
        start = int(rng.integers(0, n))
        length = int(rng.integers(1, 5000))
        assert len(extract_clip(w, start, length)) == length
    with pytest.raises(ValueError):
        extract_clip(w, n, 100)


def test_features_silence():
    w = Waveform(np.zeros(20480))
    f = features(w, GRID)
    assert f.matrix.shape == (64, 20)
    np.testing.assert_allclose(f.matrix[:, 0], np.log(ENERGY_FLOOR))
    np.testing.assert_allclose(f.matrix[:, 1], 0.0)
    assert np.all(np.isfinite(f.matrix))


def _dft_centroid_oracle(seg, sr):
    """Naive O(N^2) DFT centroid of a Hann-windowed frame."""
    n = len(seg)
    windowed = np.zeros(512)
    windowed[:n] = seg * np.hanning(n)
    ks = np.arange(257)
    mags = np.empty(257)
    t = np.arange(512)
    for k in ks:
        re = np.sum(windowed * np.cos(-2 * np.pi * k * t / 512))
        im = np.sum(windowed * np.sin(-2 * np.pi * k * t / 512))
        mags[k] = np.hypot(re, im)
    freqs = ks * sr / 512
    return float((mags * freqs).sum() / mags.sum())


def test_features_sine_centroid():
    t = np.arange(20480) / 16000
    w = Waveform(0.5 * np.sin(2 * np.pi * 1000 * t))
    f = features(w, GRID)
    interior = f.matrix[5:55, 2]
    assert np.all(np.abs(interior - 1000.0) < 50.0)
    # independent oracle: naive DFT of one interior frame
    seg = w.samples[10 * 320:10 * 320 + 400]
    oracle = _dft_centroid_oracle(seg, 16000)
    assert abs(f.matrix[10, 2] - oracle) < 1.0


def test_features_deterministic():
    rng = np.random.default_rng(11)
    w = Waveform(rng.uniform(-0.8, 0.8, 20480))
    a = features(w, GRID).matrix
    b = features(w, GRID).matrix
    assert np.array_equal(a, b)


def test_features_finite_fuzz():
    rng = np.random.default_rng(12)
    for _ in range(20):
        n = int(rng.integers(320, 30000))
        w = Waveform(rng.uniform(-1, 1, n))
        f = features(w, GRID)
        assert f.n_frames == n // 320
        assert np.all(np.isfinite(f.matrix))
    with pytest.raises(ValueError):
        features(Waveform(np.zeros(100)), GRID)
