"""Instantaneous a priori SNR, its dB-domain statistics, and the invertible
(0, 1) target mapping used with the sigmoidal output layer.

The per-bin, per-frame SNR is (clean magnitude / noise magnitude)^2. Its
dB value is clamped to [-40, 45] (covering the -10..20 dB training range
with margin) and mapped through a per-bin Gaussian CDF,
target = Phi((xi_dB - mu_k) / sigma_k), so targets are strictly inside
(0, 1) and cross-entropy stays finite. unmap inverts the chain exactly.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .util import atomic_write_text

XI_DB_MIN = -40.0
XI_DB_MAX = 45.0
NOISE_FLOOR = 1e-12
SIGMA_FLOOR = 1e-3
TARGET_EPS = 1e-7
MIN_STATS_FRAMES = 1000


class StatsError(ValueError):
    """Statistics are missing, malformed, or built from too little data."""


@dataclass(frozen=True)
class XiStatistics:
    """Per-bin mean/std of the clamped dB-domain a priori SNR."""
    mu: np.ndarray      # (257,)
    sigma: np.ndarray   # (257,), all > 0
    sample_count: int
    floored_bins: int = 0

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise StatsError("mu and sigma must be equal-length vectors")
        if np.any(self.sigma <= 0):
            raise StatsError("sigma must be strictly positive")


def instantaneous_xi(clean_mag: np.ndarray, noise_mag: np.ndarray) -> np.ndarray:
    """(clean/noise)^2 per bin, with the noise magnitude floored so a silent
    bin yields a large finite value instead of a division by zero."""
    clean_mag = np.asarray(clean_mag, dtype=np.float64)
    noise_mag = np.asarray(noise_mag, dtype=np.float64)
    if clean_mag.shape != noise_mag.shape:
        raise ValueError(f"shape mismatch: {clean_mag.shape} vs {noise_mag.shape}")
    ratio = clean_mag / np.maximum(noise_mag, NOISE_FLOOR)
    return ratio * ratio


def xi_to_db(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=np.float64)
    db = 10.0 * np.log10(np.maximum(xi, 1e-30))
    return np.clip(db, XI_DB_MIN, XI_DB_MAX)


def map_target(xi_db: np.ndarray, stats: XiStatistics) -> np.ndarray:
    """Per-bin Gaussian-CDF normalisation into (0, 1) exclusive."""
    z = (xi_db - stats.mu) / stats.sigma
    return np.clip(ndtr(z), TARGET_EPS, 1.0 - TARGET_EPS)


def unmap(estimate: np.ndarray, stats: XiStatistics) -> np.ndarray:
    """Inverse of map_target back to a linear-scale SNR."""
    e = np.clip(np.asarray(estimate, dtype=np.float64), TARGET_EPS, 1.0 - TARGET_EPS)
    xi_db = stats.mu + stats.sigma * ndtri(e)
    return 10.0 ** (xi_db / 10.0)


def compute_stats(xi_db: np.ndarray) -> XiStatistics:
    """Per-bin sample mean and population std of clamped dB-domain SNR.

    Zero-variance bins are floored at SIGMA_FLOOR and counted."""
    xi_db = np.asarray(xi_db, dtype=np.float64)
    if xi_db.ndim != 2:
        raise StatsError("expected a (frames, bins) array")
    if xi_db.shape[0] < MIN_STATS_FRAMES:
        raise StatsError(f"need at least {MIN_STATS_FRAMES} frames, got {xi_db.shape[0]}")
    mu = xi_db.mean(axis=0)
    sigma = xi_db.std(axis=0)
    floored = int(np.sum(sigma < SIGMA_FLOOR))
    sigma = np.maximum(sigma, SIGMA_FLOOR)
    return XiStatistics(mu=mu, sigma=sigma, sample_count=xi_db.shape[0],
                        floored_bins=floored)


# ---------------------------------------------------------------------------
# plain-text stats file: header line, then one "k mu sigma" line per bin

def stats_to_text(stats: XiStatistics) -> str:
    lines = [f"# snr_db_stats sample_count={stats.sample_count} "
             f"clamp_db=[{XI_DB_MIN:g},{XI_DB_MAX:g}]"]
    for k in range(stats.mu.shape[0]):
        lines.append(f"{k} {float(stats.mu[k])!r} {float(stats.sigma[k])!r}")
    return "\n".join(lines) + "\n"


def save_stats(path, stats: XiStatistics) -> None:
    atomic_write_text(path, stats_to_text(stats))


def load_stats(path) -> XiStatistics:
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise StatsError(f"{path}: missing stats header")
    header = lines[0]
    try:
        sample_count = int(header.split("sample_count=")[1].split()[0])
    except (IndexError, ValueError):
        raise StatsError(f"{path}: bad header {header!r}") from None
    mu, sigma = [], []
    for i, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != 3 or int(parts[0]) != i:
            raise StatsError(f"{path}: bad stats line {ln!r}")
        mu.append(float(parts[1]))
        sigma.append(float(parts[2]))
    return XiStatistics(mu=np.array(mu), sigma=np.array(sigma),
                        sample_count=sample_count)
