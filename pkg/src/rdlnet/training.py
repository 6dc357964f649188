"""Optimization loop: cross-entropy objective, Adam updates, validation
tracking, and resumable checkpoints.

The objective sums cross-entropy over the 257 bins and averages over
frames, so reported errors sit on the hundreds scale familiar from
validation curves of this pipeline. Gradients are averaged over the
mini-batch and clipped to a global norm of 5 before each Adam step.
One epoch is one pass over the training clean list; all randomness is
derived from (seed, epoch), which is what makes interrupted runs
resumable bit for bit.
"""

import os
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .data import DataPipeline
from .networks import NetworkConfig, NetworkModel, build_network
from .util import atomic_write_bytes, atomic_write_text, child_seed

GRAD_CLIP_NORM = 5.0
DEFAULT_LR = 1e-3

LATEST_NAME = "checkpoint-latest.rdln"
BEST_NAME = "checkpoint-best.rdln"
LOG_NAME = "training_log.csv"
LOG_HEADER = "epoch,train_error,validation_error,wall_seconds"


class TrainingDiverged(ArithmeticError):
    """Loss went non-finite; carries the provenance of the offending batch."""


def loss(output: T.Tensor, target: np.ndarray) -> T.Tensor:
    """Cross-entropy summed over bins, averaged over frames."""
    return T.binary_cross_entropy(output, target)


@dataclass
class TrainState:
    model: NetworkModel
    adam: T.Adam
    epoch: int          # completed epochs
    best_val: float
    seed: int

    @classmethod
    def new(cls, config: NetworkConfig, seed: int, lr: float = DEFAULT_LR):
        model = build_network(config, seed=child_seed(seed, "init"))
        return cls(model=model, adam=T.Adam(model.parameters(), lr=lr),
                   epoch=0, best_val=float("inf"), seed=seed)

    def save(self, path):
        save_checkpoint(path, self.model, adam=self.adam,
                        train_state={"epoch": self.epoch,
                                     "best_val": self.best_val,
                                     "seed": self.seed,
                                     "lr": self.adam.lr})

    @classmethod
    def load(cls, path):
        ck = load_checkpoint(path)
        ts = ck.train_state or {}
        adam = T.Adam(ck.model.parameters(), lr=ts.get("lr", DEFAULT_LR))
        if ck.adam_state is not None:
            adam.step_count = ck.adam_state.step_count
            adam.m = ck.adam_state.m
            adam.v = ck.adam_state.v
        return cls(model=ck.model, adam=adam,
                   epoch=int(ts.get("epoch", 0)),
                   best_val=float(ts.get("best_val", float("inf"))),
                   seed=int(ts.get("seed", 0)))


def train_step(state: TrainState, batch) -> float:
    """One Adam update on a mini-batch; returns the mean example loss."""
    model = state.model
    model.zero_grad()
    total = 0.0
    for ex in batch:
        with T.Tape() as tape:
            out = model.forward(ex.noisy_mag)
            l = loss(out, ex.target)
        try:
            tape.backward(l)
        except T.NonFiniteError as exc:
            raise TrainingDiverged(f"non-finite loss on {ex.provenance}") from exc
        val = float(l.data)
        if not np.isfinite(val):
            raise TrainingDiverged(f"non-finite loss on {ex.provenance}")
        total += val
    scale = 1.0 / len(batch)
    for p in model.parameters():
        p.grad *= scale
    T.clip_grad_norm(model.parameters(), GRAD_CLIP_NORM)
    state.adam.step()
    return total * scale


def train_epoch(state: TrainState, pipeline: DataPipeline) -> float:
    """One pass of mini-batches for the next epoch index; returns the mean
    training error over batches."""
    epoch = state.epoch + 1
    errs = []
    for batch in pipeline.epoch_batches(epoch):
        errs.append(train_step(state, batch))
    state.epoch = epoch
    return float(np.mean(errs))


def validate(model: NetworkModel, examples) -> float:
    """Mean example loss over a fixed validation set (no gradient work)."""
    vals = []
    for ex in examples:
        out = model.forward(ex.noisy_mag)
        vals.append(float(loss(out, ex.target).data))
    return float(np.mean(vals))


def _format_row(epoch, train_err, val_err, wall) -> str:
    return f"{epoch},{train_err!r},{val_err!r},{wall:.3f}"


def run_training(out_dir, config: NetworkConfig, pipeline: DataPipeline,
                 val_examples, epochs: int, seed: int,
                 lr: float = DEFAULT_LR, resume: bool = False,
                 log_fn=None):
    """Train for the requested number of epochs, writing per-epoch
    checkpoints, a best-model copy, and a CSV log under out_dir.

    With resume=True, picks up from checkpoint-latest.rdln and truncates
    the log to the completed epochs, so the final log matches an
    uninterrupted run row for row (wall seconds aside).
    """
    os.makedirs(out_dir, exist_ok=True)
    latest = os.path.join(out_dir, LATEST_NAME)
    best = os.path.join(out_dir, BEST_NAME)
    log_path = os.path.join(out_dir, LOG_NAME)

    rows = []
    if resume:
        if not os.path.exists(latest):
            raise FileNotFoundError(f"cannot resume: {latest} does not exist")
        state = TrainState.load(latest)
        if os.path.exists(log_path):
            with open(log_path, "r", encoding="utf-8") as f:
                existing = [ln.rstrip("\n") for ln in f][1:]
            rows = existing[:state.epoch]
    else:
        state = TrainState.new(config, seed, lr=lr)
        state.save(latest)

    while state.epoch < epochs:
        t0 = time.monotonic()
        train_err = train_epoch(state, pipeline)
        val_err = validate(state.model, val_examples)
        wall = time.monotonic() - t0
        improved = val_err < state.best_val
        if improved:
            state.best_val = val_err
        state.save(latest)
        if improved:
            with open(latest, "rb") as f:
                atomic_write_bytes(best, f.read())
        rows.append(_format_row(state.epoch, train_err, val_err, wall))
        atomic_write_text(log_path, "\n".join([LOG_HEADER] + rows) + "\n")
        if log_fn:
            log_fn(state.epoch, train_err, val_err, wall)
    return state
