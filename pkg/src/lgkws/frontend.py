"""Audio front end: PCM WAV ingestion and MFCC extraction.

The feature pipeline frames the waveform (25 ms window, 10 ms hop at 16 kHz),
applies per-frame pre-emphasis and a Hamming window, takes a 512-point power
spectrum, pools it through 40 triangular mel filters between 20 Hz and
7600 Hz, floors the energies before the log, and finishes with an orthonormal
DCT-II keeping all 40 coefficients. One second of audio yields a 98 x 40
matrix.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, asdict

import numpy as np
from scipy.fft import dct


class WavFormatError(ValueError):
    """Raised when a file is not a mono 16-bit PCM RIFF/WAVE container."""


@dataclass(frozen=True)
class MfccConfig:
    sample_rate: int = 16000
    frame_len: int = 400
    hop: int = 160
    n_fft: int = 512
    n_mels: int = 40
    n_coeffs: int = 40
    fmin: float = 20.0
    fmax: float = 7600.0
    preemphasis: float = 0.97
    log_floor: float = 1e-10

    def to_dict(self) -> dict:
        return asdict(self)


def read_wav(path: str) -> tuple[np.ndarray, int]:
    """Parse a mono 16-bit PCM WAV file.

    Returns:
        (waveform, sample_rate) with samples scaled to [-1, 1) by 1/32768.

    Raises:
        WavFormatError: naming the offending field for non-PCM encodings,
            multi-channel audio, wrong sample widths, or truncated chunks.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    return decode_wav(raw)


def decode_wav(raw: bytes) -> tuple[np.ndarray, int]:
    if len(raw) < 12:
        raise WavFormatError("riff_header: file shorter than 12 bytes")
    if raw[0:4] != b"RIFF":
        raise WavFormatError(f"riff_magic: expected b'RIFF', got {raw[0:4]!r}")
    if raw[8:12] != b"WAVE":
        raise WavFormatError(f"wave_magic: expected b'WAVE', got {raw[8:12]!r}")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (csize,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + csize]
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavFormatError("fmt_chunk: truncated, need at least 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < csize:
                raise WavFormatError(
                    f"data_chunk: header claims {csize} bytes, file holds {len(body)}"
                )
            data = body
        pos += 8 + csize + (csize % 2)

    if fmt is None:
        raise WavFormatError("fmt_chunk: missing")
    if data is None:
        raise WavFormatError("data_chunk: missing")

    audio_format, channels, sample_rate, _, _, bits = fmt
    if audio_format != 1:
        raise WavFormatError(f"audio_format: expected PCM (1), got {audio_format}")
    if channels != 1:
        raise WavFormatError(f"channels: expected mono (1), got {channels}")
    if bits != 16:
        raise WavFormatError(f"bits_per_sample: expected 16, got {bits}")

    samples = np.frombuffer(data[: len(data) - (len(data) % 2)], dtype="<i2")
    return samples.astype(np.float64) / 32768.0, sample_rate


def write_wav(path: str, waveform: np.ndarray, sample_rate: int = 16000) -> None:
    """Write a mono 16-bit PCM WAV; float input is clipped to [-1, 1)."""
    x = np.asarray(waveform, dtype=np.float64)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    body = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(body))
    with open(path, "wb") as fh:
        fh.write(header + body)


def pad_or_crop(waveform: np.ndarray, target_len: int = 16000) -> np.ndarray:
    """Zero-pad at the end or center-crop to exactly `target_len` samples."""
    x = np.asarray(waveform, dtype=np.float64)
    n = x.shape[0]
    if n == target_len:
        return x
    if n < target_len:
        out = np.zeros(target_len, dtype=np.float64)
        out[:n] = x
        return out
    start = (n - target_len) // 2
    return x[start : start + target_len]


def num_frames(n_samples: int, cfg: MfccConfig) -> int:
    if n_samples < cfg.frame_len:
        raise ValueError(
            f"waveform too short: {n_samples} samples, need at least {cfg.frame_len}"
        )
    return 1 + (n_samples - cfg.frame_len) // cfg.hop


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MfccConfig) -> np.ndarray:
    """Triangular mel filters evaluated at rfft bin centers, (n_mels, n_fft//2+1)."""
    points = mel_to_hz(
        np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    )
    bin_freqs = np.arange(cfg.n_fft // 2 + 1, dtype=np.float64) * cfg.sample_rate / cfg.n_fft
    bank = np.zeros((cfg.n_mels, bin_freqs.shape[0]), dtype=np.float64)
    for m in range(cfg.n_mels):
        left, center, right = points[m], points[m + 1], points[m + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        bank[m] = np.maximum(0.0, np.minimum(up, down))
    return bank


def mel_filter_centers(cfg: MfccConfig) -> np.ndarray:
    points = mel_to_hz(
        np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    )
    return points[1:-1]


def mel_energies(waveform: np.ndarray, cfg: MfccConfig | None = None) -> np.ndarray:
    """Per-frame mel filter energies, (frames, n_mels), before log and DCT.

    Frames are taken without padding, so the frame count is
    1 + floor((len - frame_len) / hop); a waveform shorter than one frame is
    an error.
    """
    cfg = cfg or MfccConfig()
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-d waveform")
    t = num_frames(x.shape[0], cfg)

    idx = np.arange(cfg.frame_len)[None, :] + cfg.hop * np.arange(t)[:, None]
    frames = x[idx]

    # per-frame pre-emphasis, first sample filtered against itself
    pre = np.empty_like(frames)
    pre[:, 0] = frames[:, 0] - cfg.preemphasis * frames[:, 0]
    pre[:, 1:] = frames[:, 1:] - cfg.preemphasis * frames[:, :-1]

    window = np.hamming(cfg.frame_len)
    spectrum = np.fft.rfft(pre * window, n=cfg.n_fft, axis=1)
    power = np.abs(spectrum) ** 2
    return power @ mel_filterbank(cfg).T


def compute_mfcc(waveform: np.ndarray, cfg: MfccConfig | None = None) -> np.ndarray:
    """MFCC matrix of shape (frames, n_coeffs) for a raw waveform."""
    cfg = cfg or MfccConfig()
    energies = mel_energies(waveform, cfg)
    logmel = np.log(np.maximum(energies, cfg.log_floor))
    coeffs = dct(logmel, type=2, norm="ortho", axis=1)
    return coeffs[:, : cfg.n_coeffs]


def mfcc_from_file(path: str, cfg: MfccConfig | None = None, target_len: int = 16000) -> np.ndarray:
    wav, _sr = read_wav(path)
    return compute_mfcc(pad_or_crop(wav, target_len), cfg)
