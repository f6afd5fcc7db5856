"""WAV decoding and Whisper-convention log-mel features.

The frontend is fixed at 16 kHz, n_fft=400, hop=160, 80 mel bands over
0-8000 Hz (HTK scale), no STFT centering, so for N input samples the
frame count is exactly 1 + floor((N - 400) / 160).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
N_FFT = 400
HOP = 160
N_MELS = 80
FMIN = 0.0
FMAX = 8000.0
LOG_FLOOR_POWER = 1e-10
DYNAMIC_RANGE_DB = 8.0  # max(log_spec) - 8 floor before (x + 4) / 4


class WavFormatError(ValueError):
    """Malformed or unsupported WAV input; message carries the byte offset."""


@dataclass
class Waveform:
    samples: np.ndarray  # f32 in [-1, 1]
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.sample_rate != SAMPLE_RATE:
            raise WavFormatError(f"expected {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if not np.isfinite(self.samples).all():
            raise WavFormatError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # (T, N_MELS) f32
    n_mels: int = N_MELS
    hop_seconds: float = HOP / SAMPLE_RATE


# -- WAV --------------------------------------------------------------


def decode_wav(data: bytes, allow_resample: bool = False) -> Waveform:
    """Decode RIFF/WAVE (PCM16 or float32, mono/stereo) to mono 16 kHz."""
    if len(data) < 12 or data[0:4] != b"RIFF":
        raise WavFormatError("not a RIFF file (offset 0)")
    if data[8:12] != b"WAVE":
        raise WavFormatError("not a WAVE file (offset 8)")

    fmt = None
    raw = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        if body_start + size > len(data):
            raise WavFormatError(f"chunk '{cid.decode(errors='replace')}' truncated (offset {pos})")
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError(f"fmt chunk too small (offset {pos})")
            fmt = struct.unpack_from("<HHIIHH", data, body_start)
        elif cid == b"data":
            raw = data[body_start:body_start + size]
        pos = body_start + size + (size & 1)

    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if raw is None:
        raise WavFormatError("missing data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if channels not in (1, 2):
        raise WavFormatError(f"unsupported channel count {channels}")

    if audio_format == 1 and bits == 16:
        if len(raw) % (2 * channels):
            raise WavFormatError("data chunk truncated mid-sample")
        x = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    elif audio_format == 3 and bits == 32:
        if len(raw) % (4 * channels):
            raise WavFormatError("data chunk truncated mid-sample")
        x = np.frombuffer(raw, dtype="<f4").astype(np.float32)
    else:
        raise WavFormatError(f"unsupported codec: format={audio_format} bits={bits}")

    if channels == 2:
        x = x.reshape(-1, 2).mean(axis=1)

    if rate != SAMPLE_RATE:
        if not allow_resample:
            raise WavFormatError(
                f"sample rate {rate} != {SAMPLE_RATE}; pass allow_resample to convert")
        x = _linear_resample(x, rate, SAMPLE_RATE)
    return Waveform(x)


def encode_wav_pcm16(samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> bytes:
    """Minimal PCM16 mono writer (used by the mock TTS and demos)."""
    x = np.clip(np.asarray(samples, dtype=np.float32), -1.0, 1.0)
    pcm = (x * 32767.0).astype("<i2").tobytes()
    hdr = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(pcm), b"WAVE",
                      b"fmt ", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16,
                      b"data", len(pcm))
    return hdr + pcm


def _linear_resample(x: np.ndarray, src: int, dst: int) -> np.ndarray:
    n_out = int(round(len(x) * dst / src))
    t_out = np.arange(n_out) * (src / dst)
    return np.interp(t_out, np.arange(len(x)), x).astype(np.float32)


# -- features ---------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT,
                   sample_rate: int = SAMPLE_RATE,
                   fmin: float = FMIN, fmax: float = FMAX) -> np.ndarray:
    """Triangular HTK-mel filters, shape (n_mels, n_fft // 2 + 1)."""
    mels = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz = mel_to_hz(mels)
    bins = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    fb = np.zeros((n_mels, len(bins)), dtype=np.float64)
    for i in range(n_mels):
        lo, ctr, hi = hz[i], hz[i + 1], hz[i + 2]
        up = (bins - lo) / max(ctr - lo, 1e-12)
        down = (hi - bins) / max(hi - ctr, 1e-12)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb.astype(np.float32)


_FILTERBANK = None
_WINDOW = None


def _cached_filterbank():
    global _FILTERBANK
    if _FILTERBANK is None:
        _FILTERBANK = mel_filterbank()
    return _FILTERBANK


def _cached_window():
    global _WINDOW
    if _WINDOW is None:
        # periodic Hann
        _WINDOW = (0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(N_FFT) / N_FFT)).astype(np.float32)
    return _WINDOW


def num_frames(n_samples: int) -> int:
    if n_samples < N_FFT:
        raise ValueError(f"need at least {N_FFT} samples, got {n_samples}")
    return 1 + (n_samples - N_FFT) // HOP


def log_mel(w: Waveform) -> MelSpectrogram:
    """STFT power -> mel -> log10 with floor -> Whisper-style normalization."""
    x = w.samples
    T = num_frames(len(x))
    idx = np.arange(N_FFT)[None, :] + HOP * np.arange(T)[:, None]
    frames = x[idx] * _cached_window()[None, :]
    spec = np.fft.rfft(frames, axis=1)
    power = (spec.real ** 2 + spec.imag ** 2).astype(np.float32)
    mel = power @ _cached_filterbank().T
    log_spec = np.log10(np.maximum(mel, LOG_FLOOR_POWER))
    log_spec = np.maximum(log_spec, log_spec.max() - DYNAMIC_RANGE_DB)
    log_spec = (log_spec + 4.0) / 4.0
    return MelSpectrogram(log_spec.astype(np.float32))


def pad_or_trim(w: Waveform, max_seconds: float = 30.0) -> tuple[Waveform, bool]:
    """Zero-pad to or truncate at max_seconds; flag is True when truncated."""
    n = int(round(max_seconds * w.sample_rate))
    if len(w.samples) == n:
        return w, False
    if len(w.samples) > n:
        return Waveform(w.samples[:n].copy()), True
    out = np.zeros(n, dtype=np.float32)
    out[:len(w.samples)] = w.samples
    return Waveform(out), False
