"""Analysis-modification-synthesis DSP: framing, windowing, Fourier
transforms, overlap-add reconstruction, and SNR-controlled mixing.

Frames are 512 samples (32 ms at 16 kHz) with a 256-sample hop, windowed
with the periodic Hamming window on both analysis and synthesis. The
single-sided spectrum keeps bins 0..256 (DC through Nyquist). Overlap-add
divides by the accumulated squared synthesis window, which makes the
analyze -> synthesize round trip exact in the interior.

The transform is an in-repo iterative radix-2 FFT specialised to
power-of-two sizes, vectorised over the frame axis; tests pin it against
a direct O(n^2) transform.
"""

from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
FRAME_LEN = 512
HOP = 256
N_BINS = FRAME_LEN // 2 + 1
OLA_FLOOR = 1e-8


class SignalError(ValueError):
    """Input signal violates a DSP precondition."""


def hamming_window(n: int = FRAME_LEN) -> np.ndarray:
    """Periodic (DFT-even) Hamming window: 0.54 - 0.46 cos(2 pi k / n)."""
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / n)


_WINDOW = hamming_window(FRAME_LEN)

# ---------------------------------------------------------------------------
# radix-2 FFT over the last axis

_fft_cache = {}


def _fft_plan(n: int):
    if n not in _fft_cache:
        if n & (n - 1) or n < 2:
            raise ValueError(f"FFT size must be a power of two >= 2, got {n}")
        bits = n.bit_length() - 1
        rev = np.zeros(n, dtype=np.intp)
        for i in range(n):
            b = 0
            x = i
            for _ in range(bits):
                b = (b << 1) | (x & 1)
                x >>= 1
            rev[i] = b
        twiddles = []
        size = 2
        while size <= n:
            tw = np.exp(-2j * np.pi * np.arange(size // 2) / size)
            twiddles.append(tw)
            size *= 2
        _fft_cache[n] = (rev, twiddles)
    return _fft_cache[n]


def fft(x: np.ndarray) -> np.ndarray:
    """Forward DFT over the last axis (power-of-two length)."""
    x = np.asarray(x)
    n = x.shape[-1]
    rev, twiddles = _fft_plan(n)
    y = x[..., rev].astype(np.complex128)
    half = 1
    for tw in twiddles:
        size = half * 2
        y = y.reshape(x.shape[:-1] + (n // size, size))
        even = y[..., :half]
        odd = y[..., half:] * tw
        y = np.concatenate([even + odd, even - odd], axis=-1)
        half = size
    return y.reshape(x.shape[:-1] + (n,))


def ifft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


def rfft(frames: np.ndarray) -> np.ndarray:
    """Single-sided spectrum (bins 0..n/2) of real frames."""
    return fft(frames)[..., :frames.shape[-1] // 2 + 1]


def irfft(spec: np.ndarray, n: int = FRAME_LEN) -> np.ndarray:
    """Real signal from a single-sided spectrum (hermitian extension)."""
    full = np.empty(spec.shape[:-1] + (n,), dtype=np.complex128)
    full[..., :n // 2 + 1] = spec
    full[..., n // 2 + 1:] = np.conj(spec[..., n // 2 - 1:0:-1])
    return ifft(full).real


# ---------------------------------------------------------------------------
# framing and reconstruction

@dataclass
class SpectrogramFrames:
    """Per-frame single-sided magnitude and phase of one utterance."""
    magnitude: np.ndarray  # (T, 257), non-negative
    phase: np.ndarray      # (T, 257), radians
    frame_len: int = FRAME_LEN
    hop: int = HOP

    @property
    def n_frames(self) -> int:
        return self.magnitude.shape[0]


def frame_count(n_samples: int) -> int:
    if n_samples < FRAME_LEN:
        raise SignalError(f"signal of {n_samples} samples is shorter than one "
                          f"{FRAME_LEN}-sample frame")
    return (n_samples - FRAME_LEN) // HOP + 1


def analyze(signal: np.ndarray) -> SpectrogramFrames:
    """Window and transform a waveform into magnitude/phase frames.

    A trailing partial frame is dropped (frame count floors)."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise SignalError("analyze expects a mono 1-D signal")
    t = frame_count(signal.shape[0])
    idx = HOP * np.arange(t)[:, None] + np.arange(FRAME_LEN)[None, :]
    frames = signal[idx] * _WINDOW
    spec = rfft(frames)
    return SpectrogramFrames(magnitude=np.abs(spec), phase=np.angle(spec))


def synthesize(frames: SpectrogramFrames) -> np.ndarray:
    """Overlap-add reconstruction with squared-window normalisation.

    Output length is (T-1)*hop + frame_len."""
    mag = np.asarray(frames.magnitude, dtype=np.float64)
    phase = np.asarray(frames.phase, dtype=np.float64)
    if mag.shape != phase.shape or mag.ndim != 2 or mag.shape[1] != N_BINS:
        raise SignalError(f"expected (T, {N_BINS}) magnitude/phase pair")
    spec = mag * np.exp(1j * phase)
    blocks = irfft(spec) * _WINDOW
    t = mag.shape[0]
    out_len = (t - 1) * HOP + FRAME_LEN
    out = np.zeros(out_len)
    wsum = np.zeros(out_len)
    w2 = _WINDOW * _WINDOW
    for i in range(t):
        start = i * HOP
        out[start:start + FRAME_LEN] += blocks[i]
        wsum[start:start + FRAME_LEN] += w2
    return out / np.maximum(wsum, OLA_FLOOR)


# ---------------------------------------------------------------------------
# mixing

def power(signal: np.ndarray) -> float:
    signal = np.asarray(signal, dtype=np.float64)
    return float(np.mean(signal * signal))


def mix_at_snr(clean: np.ndarray, noise: np.ndarray, snr_db: float):
    """Scale noise so the mixture hits snr_db exactly; returns
    (noisy, scaled_noise). The noise section must match the clean length."""
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if clean.shape != noise.shape:
        raise SignalError(f"length mismatch: clean {clean.shape} vs noise {noise.shape}")
    p_clean = power(clean)
    p_noise = power(noise)
    if p_clean == 0.0:
        raise SignalError("clean signal has zero power")
    if p_noise == 0.0:
        raise SignalError("noise signal has zero power")
    alpha = np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    scaled = alpha * noise
    return clean + scaled, scaled


def measure_snr_db(clean: np.ndarray, noise: np.ndarray) -> float:
    return float(10.0 * np.log10(power(clean) / power(noise)))
