"""Seeded per-sequence SGD over feature sequences, plus evaluation helpers.

Plain stochastic gradient descent, one update per sequence, gradient
clipping by global norm before each update. Everything is deterministic
given (dataset, config): the initializer and the epoch shuffles draw from
generators derived from the config seed.
"""

import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cells
from .corpus import EmotionLabel
from .errors import ConfigError, DivergenceError

N_CLASSES = len(EmotionLabel)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    use_bias: bool = False
    hidden_cells: int = 1
    epochs: int = 50
    seed: int = 0
    clip_norm: float = 5.0
    readout: str = "last"
    peepholes: bool = True

    def __post_init__(self):
        if not (self.learning_rate > 0.0) or self.learning_rate != self.learning_rate:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.hidden_cells < 1:
            raise ConfigError(f"hidden_cells must be at least 1, got {self.hidden_cells}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be nonnegative, got {self.epochs}")
        if not (self.clip_norm > 0.0):
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.readout not in cells.READOUTS:
            raise ConfigError(f"readout must be one of {cells.READOUTS}")


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    final_error: float = float("nan")
    seconds: float = 0.0
    grad_norm_means: list = field(default_factory=list)
    grad_norm_max: float = 0.0
    diverged: bool = False


def train(kind, train_set, config, validation_set=None):
    """SGD over `train_set`; returns (params, TrainReport).

    `train_set` is a list of (FeatureSequence, label) pairs. The report's
    final error is measured on `validation_set` when given, else on the
    training set. Non-finite loss raises DivergenceError naming the epoch.
    """
    if not train_set:
        raise ConfigError("training set is empty")
    first = train_set[0][0]
    d = np.asarray(getattr(first, "frames", first)).shape[1]
    params = cells.init_params(kind, d, config.hidden_cells, N_CLASSES,
                               use_bias=config.use_bias,
                               peepholes=config.peepholes, seed=config.seed)
    report = TrainReport()
    shuffle_rng = np.random.default_rng([config.seed, 0xA5])
    started = time.perf_counter()
    order = np.arange(len(train_set))
    # overflow on a diverging run is expected and caught by the finiteness
    # check; numpy's own warnings would only add noise
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            shuffle_rng.shuffle(order)
            loss_sum = 0.0
            norm_sum = 0.0
            for idx in order:
                features, label = train_set[idx]
                loss, grads = cells.bptt_backward(kind, params, features, label,
                                                  readout=config.readout)
                if not np.isfinite(loss):
                    raise DivergenceError(
                        f"non-finite training loss in epoch {epoch}", epoch)
                loss_sum += loss
                norm = grads.global_norm()
                norm_sum += norm
                report.grad_norm_max = max(report.grad_norm_max, norm)
                if norm > config.clip_norm:
                    grads.scale_(config.clip_norm / norm)
                for name, tensor in params.tensors():
                    tensor -= config.learning_rate * grads.tensors[name]
            report.epoch_losses.append(float(loss_sum) / len(train_set))
            report.grad_norm_means.append(float(norm_sum) / len(train_set))
    report.seconds = time.perf_counter() - started
    report.final_error = evaluate(kind, params,
                                  validation_set if validation_set is not None
                                  else train_set)
    return params, report


def evaluate(kind, params, dataset):
    """Fraction of sequences whose argmax class differs from the label.

    argmax breaks ties toward the lowest class index.
    """
    if not dataset:
        raise ConfigError("evaluation set is empty")
    wrong = 0
    for features, label in dataset:
        _, logits, _ = cells.unroll_forward(kind, params, features)
        if int(np.argmax(logits)) != label:
            wrong += 1
    return wrong / len(dataset)


def gradient_norm_probe(kind, params, features, label):
    """l2 norm of dloss/dstate at each timestep (vanishing/exploding probe)."""
    frames = np.asarray(getattr(features, "frames", features))
    if frames.shape[0] < 2:
        raise ValueError("probe needs at least 2 timesteps")
    norms = []
    cells.bptt_backward(kind, params, features, label, probe=norms)
    return norms


def benchmark(kind, dataset, config, repeats=5):
    """Median wall-clock seconds of `repeats` identical train runs.

    Returns (median_seconds, raw_times). Runs must not share the machine
    with other trainers if the numbers are to mean anything.
    """
    if repeats < 1:
        raise ConfigError(f"repeats must be at least 1, got {repeats}")
    times = []
    for _ in range(repeats):
        started = time.perf_counter()
        train(kind, dataset, config)
        times.append(time.perf_counter() - started)
    return statistics.median(times), times


def write_report(report, directory):
    """losses.csv (`epoch,mean_loss`) plus a key-value summary.txt."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = ["epoch,mean_loss"]
    for epoch, loss in enumerate(report.epoch_losses, start=1):
        lines.append(f"{epoch},{loss!r}")
    (directory / "losses.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    summary = (
        f"final_error = {report.final_error!r}\n"
        f"seconds = {report.seconds!r}\n"
        f"diverged = {report.diverged}\n"
        f"grad_norm_max = {report.grad_norm_max!r}\n"
    )
    (directory / "summary.txt").write_text(summary, encoding="utf-8")
