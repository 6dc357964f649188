"""Spectral gain functions driven by the estimated a priori SNR.

Two estimators: the square-root Wiener filter, sqrt(xi / (1 + xi)), and
the MMSE log-spectral amplitude gain,
    G = (xi / (1 + xi)) * exp(E1(v) / 2),   v = xi * gamma / (1 + xi),
with E1 the exponential integral. The a posteriori SNR is closed as
gamma = xi + 1 (which collapses v to xi). E1 is evaluated in-repo with a
power series below 1 and a continued fraction above, to better than 1e-10
absolute; tests pin it against adaptive quadrature.
"""

import enum

import numpy as np

from .dsp import SpectrogramFrames

EULER_GAMMA = 0.5772156649015328606
GAIN_MAX = 1.5
_V_TINY = np.finfo(np.float64).tiny  # keeps exp(E1/2) finite at xi -> 0
_SERIES_TERMS = 48
_CF_ITERS = 120
_CF_FPMIN = 1e-300


class GainKind(enum.Enum):
    SRWF = "srwf"
    MMSE_LSA = "mmse-lsa"


def exp_e1(v):
    """Exponential integral E1 over a non-negative array.

    Power series for v < 1, modified Lentz continued fraction for v >= 1;
    both run a fixed iteration count so evaluation is deterministic.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("E1 argument must be non-negative")
    scalar = v.ndim == 0
    v = np.atleast_1d(v)
    out = np.empty_like(v)

    small = v < 1.0
    if np.any(small):
        x = np.maximum(v[small], _V_TINY)
        total = -EULER_GAMMA - np.log(x)
        term = np.ones_like(x)  # becomes (-x)^n / n!
        for n in range(1, _SERIES_TERMS + 1):
            term *= -x / n
            total -= term / n
        out[small] = total

    big = ~small
    if np.any(big):
        x = v[big]
        b = x + 1.0
        c = np.full_like(x, 1.0 / _CF_FPMIN)
        d = 1.0 / b
        h = d.copy()
        for i in range(1, _CF_ITERS + 1):
            a = -float(i * i)
            b = b + 2.0
            d = 1.0 / (a * d + b)
            c = b + a / c
            h = h * (c * d)
        out[big] = h * np.exp(-x)

    return out[0] if scalar else out


def wiener(xi):
    xi = np.asarray(xi, dtype=np.float64)
    return xi / (1.0 + xi)


def srwf(xi):
    """Square-root Wiener filter gain, in [0, 1)."""
    xi = np.asarray(xi, dtype=np.float64)
    if np.any(xi < 0):
        raise ValueError("a priori SNR must be non-negative")
    return np.sqrt(xi / (1.0 + xi))


def mmse_lsa(xi, gamma):
    """MMSE log-spectral amplitude gain."""
    xi = np.asarray(xi, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(xi < 0):
        raise ValueError("a priori SNR must be non-negative")
    if np.any(gamma <= 0):
        raise ValueError("a posteriori SNR must be positive")
    v = np.maximum(xi * gamma / (1.0 + xi), _V_TINY)
    g = wiener(xi) * np.exp(0.5 * exp_e1(v))
    if not np.all(np.isfinite(g)):
        raise ArithmeticError("non-finite MMSE-LSA gain")
    return g


def apply_gain(frames: SpectrogramFrames, xi_hat: np.ndarray,
               kind: GainKind) -> SpectrogramFrames:
    """Suppress the magnitude spectrum by the chosen gain; phase untouched.

    For MMSE-LSA the a posteriori SNR is taken as xi_hat + 1. Gains are
    clamped to [0, GAIN_MAX] to bound amplification under estimator
    mismatch."""
    xi_hat = np.asarray(xi_hat, dtype=np.float64)
    if xi_hat.shape != frames.magnitude.shape:
        raise ValueError(f"shape mismatch: gains {xi_hat.shape} vs "
                         f"magnitude {frames.magnitude.shape}")
    if kind is GainKind.SRWF:
        g = srwf(xi_hat)
    elif kind is GainKind.MMSE_LSA:
        g = mmse_lsa(xi_hat, xi_hat + 1.0)
    else:
        raise ValueError(f"unknown gain kind {kind!r}")
    g = np.clip(g, 0.0, GAIN_MAX)
    return SpectrogramFrames(magnitude=frames.magnitude * g, phase=frames.phase,
                             frame_len=frames.frame_len, hop=frames.hop)
