"""Corpus ingestion and the stochastic mini-batch mixture generator.

Every random draw comes from a substream derived with child_seed from
(root seed, role, epoch, index), so batch content is a pure function of
the manifest and the seed: resumed or reordered runs reproduce the same
examples bit for bit.

Each training example mixes one clean recording with a random section of
a random noise recording at a random integer SNR from -10 to 20 dB, then
pairs the noisy magnitude spectrogram with the mapped SNR target computed
from the known clean and scaled-noise spectra.
"""

import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import dsp, wavio, ximap
from .util import child_seed

SNR_MIN_DB = -10
SNR_MAX_DB = 20
SNR_LEVELS = tuple(range(SNR_MIN_DB, SNR_MAX_DB + 1))
MAX_CLEAN_SAMPLES = 10 * dsp.SAMPLE_RATE  # longer recordings are cropped
NOISE_PICK_RETRIES = 10
DEFAULT_VAL_FRACTION = 0.05


class DataError(RuntimeError):
    """Corpus contents cannot satisfy the requested draw."""


class ManifestError(ValueError):
    """Manifest file is missing sections or lists no usable files."""


@dataclass
class CorpusManifest:
    clean_files: list
    noise_files: list
    val_fraction: float = DEFAULT_VAL_FRACTION
    seed: int = 0

    def __post_init__(self):
        if not self.clean_files:
            raise ManifestError("manifest lists no clean files")
        if not self.noise_files:
            raise ManifestError("manifest lists no noise files")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ManifestError("validation fraction must be in [0, 1)")


def parse_manifest(path, val_fraction: float = DEFAULT_VAL_FRACTION,
                   seed: int = 0) -> CorpusManifest:
    """Read a plain-text manifest with [clean] and [noise] path sections."""
    sections = {"clean": [], "noise": []}
    current = None
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip().lower()
                if name not in sections:
                    raise ManifestError(f"{path}: unknown section [{name}]")
                current = name
                continue
            if current is None:
                raise ManifestError(f"{path}: path before any section header")
            p = line if os.path.isabs(line) else os.path.join(base, line)
            sections[current].append(p)
    return CorpusManifest(clean_files=sections["clean"],
                          noise_files=sections["noise"],
                          val_fraction=val_fraction, seed=seed)


def validation_split(manifest: CorpusManifest):
    """Deterministic disjoint exhaustive split of the clean list."""
    n = len(manifest.clean_files)
    n_val = int(round(manifest.val_fraction * n))
    n_val = min(max(n_val, 0), n - 1)
    rng = np.random.Generator(np.random.PCG64(child_seed(manifest.seed, "split")))
    order = rng.permutation(n)
    val_idx = set(order[:n_val].tolist())
    train = [f for i, f in enumerate(manifest.clean_files) if i not in val_idx]
    val = [f for i, f in enumerate(manifest.clean_files) if i in val_idx]
    return train, val


@dataclass(frozen=True, eq=False)
class TrainingExample:
    noisy_mag: np.ndarray  # (T, 257)
    target: np.ndarray     # (T, 257) in (0, 1)
    snr_db: int
    provenance: dict


@lru_cache(maxsize=256)
def _read_cached(path) -> np.ndarray:
    arr = wavio.read_wav(path)
    arr.setflags(write=False)  # cached array is shared; callers must copy to mutate
    return arr


def _load_clean(path, rng) -> np.ndarray:
    clean = _read_cached(os.fspath(path))
    if clean.shape[0] > MAX_CLEAN_SAMPLES:
        start = int(rng.integers(0, clean.shape[0] - MAX_CLEAN_SAMPLES + 1))
        clean = clean[start:start + MAX_CLEAN_SAMPLES]
    if clean.shape[0] < dsp.FRAME_LEN:
        raise DataError(f"{path}: clean recording shorter than one frame")
    return clean


def _pick_noise(noise_files, n_samples, rng):
    """Uniform noise file whose length covers the clean section; bounded
    retries before giving up."""
    for _ in range(NOISE_PICK_RETRIES):
        path = noise_files[int(rng.integers(0, len(noise_files)))]
        noise = _read_cached(os.fspath(path))
        if noise.shape[0] >= n_samples:
            offset = int(rng.integers(0, noise.shape[0] - n_samples + 1))
            return path, noise[offset:offset + n_samples], offset
    raise DataError(f"no noise recording of at least {n_samples} samples "
                    f"found in {NOISE_PICK_RETRIES} draws")


def make_example(clean_path, noise_files, stats: ximap.XiStatistics,
                 rng) -> TrainingExample:
    clean = _load_clean(clean_path, rng)
    noise_path, section, offset = _pick_noise(noise_files, clean.shape[0], rng)
    snr_db = int(rng.integers(SNR_MIN_DB, SNR_MAX_DB + 1))
    noisy, scaled = dsp.mix_at_snr(clean, section, snr_db)
    noisy_mag = dsp.analyze(noisy).magnitude
    xi = ximap.instantaneous_xi(dsp.analyze(clean).magnitude,
                                dsp.analyze(scaled).magnitude)
    target = ximap.map_target(ximap.xi_to_db(xi), stats)
    return TrainingExample(
        noisy_mag=noisy_mag, target=target, snr_db=snr_db,
        provenance={"clean": str(clean_path), "noise": str(noise_path),
                    "offset": offset})


def make_minibatch(manifest: CorpusManifest, stats: ximap.XiStatistics,
                   batch_size: int = 10, rng=None):
    """Uniformly sampled batch (clean file, noise section, SNR level)."""
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(manifest.seed))
    batch = []
    for _ in range(batch_size):
        path = manifest.clean_files[int(rng.integers(0, len(manifest.clean_files)))]
        batch.append(make_example(path, manifest.noise_files, stats, rng))
    return batch


class DataPipeline:
    """Deterministic batch source over a fixed train/noise file split."""

    def __init__(self, train_files, noise_files, stats, batch_size=10, seed=0):
        if not train_files or not noise_files:
            raise ManifestError("pipeline needs non-empty train and noise lists")
        self.train_files = list(train_files)
        self.noise_files = list(noise_files)
        self.stats = stats
        self.batch_size = batch_size
        self.seed = seed

    def epoch_batches(self, epoch: int):
        """One pass over the train list in an epoch-specific order, chunked
        into mini-batches (final partial batch included). Example content
        depends only on (seed, epoch, position)."""
        order_rng = np.random.Generator(
            np.random.PCG64(child_seed(self.seed, "order", epoch)))
        order = order_rng.permutation(len(self.train_files))
        for start in range(0, len(order), self.batch_size):
            chunk = order[start:start + self.batch_size]
            batch = []
            for j, file_idx in enumerate(chunk):
                ex_rng = np.random.Generator(
                    np.random.PCG64(child_seed(self.seed, "example", epoch, start + j)))
                batch.append(make_example(self.train_files[int(file_idx)],
                                          self.noise_files, self.stats, ex_rng))
            yield batch

    def validation_examples(self, val_files, val_seed: int):
        """One example per validation file, stable across epochs."""
        out = []
        for i, path in enumerate(val_files):
            rng = np.random.Generator(
                np.random.PCG64(child_seed(val_seed, "validation", i)))
            out.append(make_example(path, self.noise_files, self.stats, rng))
        return out


def collect_xi_stats(manifest: CorpusManifest, min_frames: int = ximap.MIN_STATS_FRAMES,
                     seed: int = 0) -> ximap.XiStatistics:
    """Run the mixing protocol until min_frames of paired spectra are seen,
    then reduce to per-bin dB-domain statistics."""
    rows = []
    total = 0
    draw = 0
    while total < min_frames:
        rng = np.random.Generator(np.random.PCG64(child_seed(seed, "stats", draw)))
        path = manifest.clean_files[int(rng.integers(0, len(manifest.clean_files)))]
        clean = _load_clean(path, rng)
        _, section, _ = _pick_noise(manifest.noise_files, clean.shape[0], rng)
        snr_db = int(rng.integers(SNR_MIN_DB, SNR_MAX_DB + 1))
        _, scaled = dsp.mix_at_snr(clean, section, snr_db)
        xi = ximap.instantaneous_xi(dsp.analyze(clean).magnitude,
                                    dsp.analyze(scaled).magnitude)
        xi_db = ximap.xi_to_db(xi)
        rows.append(xi_db)
        total += xi_db.shape[0]
        draw += 1
    return ximap.compute_stats(np.concatenate(rows, axis=0))
