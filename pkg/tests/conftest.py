"""Shared fixtures: a synthetic 16 kHz toy corpus and its statistics.

No recorded audio ships with the repository, so speech-like clips are
synthesised (pitch-modulated pulse trains through a pair of resonators)
and noises cover white and brown spectra. Everything is seeded, so the
corpus and the derived statistics are identical across test runs.
"""

import numpy as np
import pytest

from rdlnet import data, dsp, wavio
from rdlnet.networks import NetworkConfig, build_network


def synth_speech(seed: int, n_samples: int = 12000) -> np.ndarray:
    """Voiced pseudo-speech: glottal-like pulse train, two formant
    resonators, and a slow amplitude envelope."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / dsp.SAMPLE_RATE
    f0 = rng.uniform(90, 220)
    vibrato = 1.0 + 0.05 * np.sin(2 * np.pi * rng.uniform(2, 5) * t)
    phase = np.cumsum(f0 * vibrato) / dsp.SAMPLE_RATE
    sig = np.sin(2 * np.pi * phase) ** 9
    for _ in range(2):
        fc = rng.uniform(300, 2800)
        bw = rng.uniform(80, 300)
        r = np.exp(-np.pi * bw / dsp.SAMPLE_RATE)
        theta = 2 * np.pi * fc / dsp.SAMPLE_RATE
        a1, a2 = -2 * r * np.cos(theta), r * r
        y = np.zeros(n_samples)
        y[0], y[1] = sig[0], sig[1] - a1 * y[0]
        for i in range(2, n_samples):
            y[i] = sig[i] - a1 * y[i - 1] - a2 * y[i - 2]
        sig = y
    env = 0.3 + 0.7 * np.clip(
        np.sin(2 * np.pi * rng.uniform(1, 3) * t + rng.uniform(0, 6)), 0, None)
    sig = sig * env
    return 0.3 * sig / np.max(np.abs(sig))


def synth_noise(seed: int, n_samples: int = 60000) -> np.ndarray:
    rng = np.random.default_rng(seed)
    white = rng.normal(size=n_samples)
    if seed % 2 == 0:
        out = np.cumsum(white)
        out -= out.mean()
    else:
        out = white
    return 0.5 * out / np.max(np.abs(out))


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """12 clean + 4 noise files, a manifest, and precomputed statistics."""
    root = tmp_path_factory.mktemp("corpus")
    clean, noise = [], []
    for i in range(12):
        p = root / f"clean{i}.wav"
        wavio.write_wav(p, synth_speech(100 + i))
        clean.append(str(p))
    for i in range(4):
        p = root / f"noise{i}.wav"
        wavio.write_wav(p, synth_noise(200 + i))
        noise.append(str(p))
    manifest_path = root / "manifest.txt"
    lines = ["[clean]"] + [f"clean{i}.wav" for i in range(12)]
    lines += ["[noise]"] + [f"noise{i}.wav" for i in range(4)]
    manifest_path.write_text("\n".join(lines) + "\n")
    manifest = data.CorpusManifest(clean_files=clean, noise_files=noise,
                                   val_fraction=0.0, seed=0)
    stats = data.collect_xi_stats(manifest, min_frames=1500, seed=11)
    return {"root": root, "manifest_path": str(manifest_path),
            "clean": clean, "noise": noise, "stats": stats}


@pytest.fixture
def tiny_rdl():
    cfg = NetworkConfig(family="rdl", blocks=2, lattice_units=4, base_width=8)
    return build_network(cfg, seed=1)
