"""WAV file I/O: 16-bit PCM, mono, 16 kHz little-endian RIFF only.

The reader rejects anything else with a descriptive error instead of
resampling or downmixing; the writer clamps to [-1, 1] before quantising.
"""

import io
import wave

import numpy as np

from .dsp import SAMPLE_RATE
from .util import atomic_write_bytes

_SCALE = 32767.0


class WavFormatError(ValueError):
    """File is not the 16-bit mono 16 kHz PCM this pipeline accepts."""


def read_wav(path) -> np.ndarray:
    """Samples as float64 in [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            rate = w.getframerate()
            sampwidth = w.getsampwidth()
            comptype = w.getcomptype()
            n = w.getnframes()
            raw = w.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if comptype != "NONE":
        raise WavFormatError(f"{path}: compressed WAV ({comptype}) not supported")
    if channels != 1:
        raise WavFormatError(f"{path}: expected mono, got {channels} channels")
    if rate != SAMPLE_RATE:
        raise WavFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
    if sampwidth != 2:
        raise WavFormatError(f"{path}: expected 16-bit samples, got {8 * sampwidth}-bit")
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def wav_bytes(samples: np.ndarray) -> bytes:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("expected a mono 1-D signal")
    q = np.round(np.clip(samples, -1.0, 1.0) * _SCALE).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(q.tobytes())
    return buf.getvalue()


def write_wav(path, samples: np.ndarray) -> None:
    atomic_write_bytes(path, wav_bytes(samples))
