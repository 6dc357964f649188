"""Command-line surface tying the package into reproducible runs.

Subcommands: analyze (parameter/FLOP report), train, enhance, mix, stats.
Exit codes: 0 success, 2 usage or configuration error, 3 runtime data
error. Every run prints its fully resolved configuration, RDL_SEED sets
the default seed, and all file outputs are written atomically.
"""

import argparse
import glob as globmod
import os
import sys

import numpy as np

from . import __version__, data, dsp, gains, wavio, ximap
from .analysis import analyze_model
from .checkpoint import CheckpointError, load_checkpoint
from .lattice import LatticeSpec, build_block_graph
from .networks import FAMILIES, NetworkConfig, build_network
from .tensor import NonFiniteError
from .training import DEFAULT_LR, TrainingDiverged, run_training
from .util import atomic_write_text, child_seed

USAGE_ERROR = 2
DATA_ERROR = 3

_USAGE_EXCEPTIONS = (data.ManifestError, CheckpointError, wavio.WavFormatError,
                     ValueError, FileNotFoundError, NotADirectoryError)
_DATA_EXCEPTIONS = (data.DataError, dsp.SignalError, ximap.StatsError,
                    TrainingDiverged, NonFiniteError)


def _default_seed() -> int:
    env = os.environ.get("RDL_SEED")
    return int(env) if env else 0


def _print_config(args, keys):
    for k in keys:
        print(f"[config] {k}={getattr(args, k)}")


def _add_network_flags(p):
    p.add_argument("--family", choices=FAMILIES, default="rdl")
    p.add_argument("--blocks", type=int, default=3, help="block count B")
    p.add_argument("--lattice-units", type=int, default=16,
                   help="units per lattice block (square number >= 4)")
    p.add_argument("--base-width", type=int, default=64,
                   help="output size at the first lattice level")
    p.add_argument("--lr", dest="local_residual", action=argparse.BooleanOptionalAction,
                   default=True, help="local residual links")
    p.add_argument("--gd", dest="global_dense", action=argparse.BooleanOptionalAction,
                   default=True, help="global dense links")
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")


def _network_config(args) -> NetworkConfig:
    return NetworkConfig(family=args.family, blocks=args.blocks,
                         lattice_units=args.lattice_units,
                         base_width=args.base_width,
                         local_residual=args.local_residual,
                         global_dense=args.global_dense,
                         precision=args.precision)


def _filter_readable(paths, kind):
    """Drop unreadable/badly formatted files with a warning; keep the rest."""
    good, skipped = [], 0
    for p in paths:
        try:
            with open(p, "rb"):
                pass
            wavio.read_wav(p)
        except (OSError, wavio.WavFormatError) as exc:
            skipped += 1
            print(f"warning: skipping {kind} file {p}: {exc}", file=sys.stderr)
            continue
        good.append(p)
    if skipped:
        print(f"warning: skipped {skipped} unreadable {kind} file(s)", file=sys.stderr)
    return good


def _load_corpus(args):
    manifest = data.parse_manifest(args.manifest, val_fraction=args.val_fraction,
                                   seed=args.seed)
    clean = _filter_readable(manifest.clean_files, "clean")
    noise = _filter_readable(manifest.noise_files, "noise")
    return data.CorpusManifest(clean_files=clean, noise_files=noise,
                               val_fraction=args.val_fraction, seed=args.seed)


def _resolve_stats(args, manifest):
    if args.stats and os.path.exists(args.stats):
        return ximap.load_stats(args.stats)
    train_files, _ = data.validation_split(manifest)
    sample = data.CorpusManifest(clean_files=train_files,
                                 noise_files=manifest.noise_files,
                                 val_fraction=0.0, seed=args.seed)
    stats = data.collect_xi_stats(sample, min_frames=args.stats_frames,
                                  seed=child_seed(args.seed, "stats"))
    if args.stats:
        ximap.save_stats(args.stats, stats)
        print(f"wrote statistics to {args.stats}")
    return stats


# ---------------------------------------------------------------------------
# subcommands

def cmd_analyze(args) -> int:
    cfg = _network_config(args)
    model = build_network(cfg, seed=child_seed(args.seed, "init"))
    report = analyze_model(model)
    print(report.as_text())
    if args.out_prefix:
        atomic_write_text(args.out_prefix + ".txt", report.as_text() + "\n")
        atomic_write_text(args.out_prefix + ".csv", report.as_csv())
        print(f"wrote {args.out_prefix}.txt and {args.out_prefix}.csv")
    if args.dump_graph:
        if cfg.family != "rdl":
            raise ValueError("--dump-graph applies to the rdl family only")
        spec = LatticeSpec(n_units=cfg.lattice_units, base_width=cfg.base_width,
                           input_width=cfg.input_bins,
                           local_residual=cfg.local_residual)
        atomic_write_text(args.dump_graph, build_block_graph(spec).describe() + "\n")
        print(f"wrote {args.dump_graph}")
    return 0


def cmd_train(args) -> int:
    manifest = _load_corpus(args)
    cfg = _network_config(args)
    stats = _resolve_stats(args, manifest)
    train_files, val_files = data.validation_split(manifest)
    print(f"train files: {len(train_files)}  validation files: {len(val_files)}")
    pipeline = data.DataPipeline(train_files, manifest.noise_files, stats,
                                 batch_size=args.batch_size, seed=args.seed)
    val_examples = pipeline.validation_examples(
        val_files or train_files[:1], child_seed(args.seed, "validation"))

    def log_fn(epoch, terr, verr, wall):
        print(f"epoch {epoch}: train {terr:.4f}  val {verr:.4f}  ({wall:.1f}s)")

    run_training(args.out, cfg, pipeline, val_examples, epochs=args.epochs,
                 seed=args.seed, lr=args.learning_rate, resume=args.resume,
                 log_fn=log_fn)
    print(f"training complete; checkpoints and log in {args.out}")
    return 0


def _enhance_one(model, stats, kind, in_path, out_path, dump_dir):
    signal = wavio.read_wav(in_path)
    frames = dsp.analyze(signal)
    estimate = model.forward(frames.magnitude).data
    xi_hat = ximap.unmap(estimate, stats)
    enhanced = gains.apply_gain(frames, xi_hat, kind)
    wavio.write_wav(out_path, dsp.synthesize(enhanced))
    print(f"enhanced {in_path} -> {out_path}")
    if dump_dir:
        os.makedirs(dump_dir, exist_ok=True)
        stem = os.path.splitext(os.path.basename(in_path))[0]
        for tag, mag in (("noisy", frames.magnitude), ("enhanced", enhanced.magnitude)):
            rows = ["frame,bin,value"]
            t_idx, k_idx = np.indices(mag.shape)
            rows += [f"{t},{k},{float(v)!r}" for t, k, v in
                     zip(t_idx.ravel(), k_idx.ravel(), mag.ravel())]
            path = os.path.join(dump_dir, f"{stem}_{tag}.csv")
            atomic_write_text(path, "\n".join(rows) + "\n")
            print(f"wrote {path}")


def cmd_enhance(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    stats = ximap.load_stats(args.stats)
    if stats.mu.shape[0] != ck.model.config.input_bins:
        raise ValueError("statistics and checkpoint disagree on bin count")
    kind = gains.GainKind(args.gain)
    if args.glob:
        inputs = sorted(globmod.glob(args.glob))
        if not inputs:
            raise FileNotFoundError(f"--glob {args.glob!r} matched no files")
        os.makedirs(args.out, exist_ok=True)
        for p in inputs:
            out = os.path.join(args.out, os.path.basename(p))
            _enhance_one(ck.model, stats, kind, p, out, args.dump_spectra)
    else:
        if not args.input:
            raise ValueError("provide an input WAV or --glob")
        _enhance_one(ck.model, stats, kind, args.input, args.out, args.dump_spectra)
    return 0


def cmd_mix(args) -> int:
    clean = wavio.read_wav(args.clean)
    noise = wavio.read_wav(args.noise)
    if noise.shape[0] < clean.shape[0]:
        raise ValueError(f"noise ({noise.shape[0]} samples) shorter than "
                         f"clean ({clean.shape[0]} samples)")
    section = noise[:clean.shape[0]]
    try:
        noisy, scaled = dsp.mix_at_snr(clean, section, args.snr)
    except dsp.SignalError as exc:
        raise ValueError(str(exc)) from exc  # zero-power input is a usage error
    wavio.write_wav(args.out, noisy)
    if args.noise_out:
        wavio.write_wav(args.noise_out, scaled)
    alpha = float(np.sqrt(dsp.power(scaled) / dsp.power(section)))
    achieved = float(dsp.measure_snr_db(clean, scaled))
    print(f"alpha={alpha!r}")
    print(f"achieved_snr_db={achieved!r}")
    print(f"wrote {args.out}")
    return 0


def cmd_stats(args) -> int:
    manifest = _load_corpus(args)
    train_files, _ = data.validation_split(manifest)
    sample = data.CorpusManifest(clean_files=train_files,
                                 noise_files=manifest.noise_files,
                                 val_fraction=0.0, seed=args.seed)
    stats = data.collect_xi_stats(sample, min_frames=args.frames,
                                  seed=child_seed(args.seed, "stats"))
    ximap.save_stats(args.out, stats)
    print(f"sample_count={stats.sample_count} floored_bins={stats.floored_bins}")
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdlnet",
        description="Lattice-CNN speech enhancement: analysis, training, inference.")
    parser.add_argument("--version", action="version", version=f"rdlnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="parameter/FLOP/receptive-field report")
    _add_network_flags(p)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out-prefix", help="write report to PREFIX.txt and PREFIX.csv")
    p.add_argument("--dump-graph", help="write the block wiring description here")
    p.set_defaults(fn=cmd_analyze,
                   config_keys=("family", "blocks", "lattice_units", "base_width",
                                "local_residual", "global_dense", "precision", "seed"))

    p = sub.add_parser("train", help="train a model on a WAV corpus manifest")
    _add_network_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=DEFAULT_LR)
    p.add_argument("--val-fraction", type=float, default=data.DEFAULT_VAL_FRACTION)
    p.add_argument("--stats", help="statistics file (computed and written if missing)")
    p.add_argument("--stats-frames", type=int, default=ximap.MIN_STATS_FRAMES)
    p.add_argument("--resume", action="store_true",
                   help="continue from checkpoint-latest.rdln in --out")
    p.set_defaults(fn=cmd_train,
                   config_keys=("family", "blocks", "lattice_units", "base_width",
                                "local_residual", "global_dense", "precision",
                                "manifest", "out", "epochs", "seed", "batch_size",
                                "learning_rate", "val_fraction", "stats", "resume"))

    p = sub.add_parser("enhance", help="enhance noisy WAV files with a trained model")
    p.add_argument("input", nargs="?", help="input WAV (or use --glob)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True, help="output WAV (or directory with --glob)")
    p.add_argument("--gain", choices=[k.value for k in gains.GainKind],
                   default="mmse-lsa")
    p.add_argument("--glob", help="enhance every file matching this pattern")
    p.add_argument("--dump-spectra",
                   help="directory for plot-ready magnitude CSVs (frame,bin,value)")
    p.set_defaults(fn=cmd_enhance,
                   config_keys=("checkpoint", "stats", "out", "gain", "glob",
                                "dump_spectra"))

    p = sub.add_parser("mix", help="mix clean speech with noise at an exact SNR")
    p.add_argument("clean")
    p.add_argument("noise")
    p.add_argument("snr", type=float, help="target SNR in dB")
    p.add_argument("out")
    p.add_argument("--noise-out", help="also write the scaled noise")
    p.set_defaults(fn=cmd_mix, config_keys=("clean", "noise", "snr", "out", "noise_out"))

    p = sub.add_parser("stats", help="compute dB-domain SNR statistics for a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=ximap.MIN_STATS_FRAMES)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--val-fraction", type=float, default=data.DEFAULT_VAL_FRACTION)
    p.set_defaults(fn=cmd_stats,
                   config_keys=("manifest", "out", "frames", "seed", "val_fraction"))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _print_config(args, args.config_keys)
    try:
        return args.fn(args)
    except _DATA_EXCEPTIONS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except _USAGE_EXCEPTIONS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
