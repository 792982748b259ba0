"""Experiment harness: sweeps, noise-condition comparison, result tables.

An experiment is a grid of independent cells (noise kind x model x sweep
point). Each cell mixes, extracts features, trains, evaluates, and is
benchmarked; its row is written to its own directory so an interrupted run
resumes by skipping finished cells. Per-cell seeds are derived by hashing
(global seed, noise, model, sweep point), which makes cells order-insensitive
and safe to run on a worker pool. Benchmarks always run serially, after the
pooled phase, so timings never share the machine.
"""

import csv
import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .corpus import (
    NOISE_KINDS,
    build_manifest,
    load_noise,
    load_utterance,
    stratified_split,
)
from .dsp import SPEECH_RATE, MfccConfig, mfcc, resample_48k_to_16k, zscore
from .errors import ConfigError, CorpusError, DivergenceError, PairingError
from .mixer import SnrSpec, mix
from .trainer import TrainConfig, benchmark, evaluate, train
from . import cells as cells_mod

LEARNING_RATE_GRID = tuple(10.0 ** -i for i in range(10))
CELL_GRID = (1, 2, 4, 8, 16, 32)
SWEEP_AXES = ("none", "learning_rate", "cells")
NOISE_CHOICES = NOISE_KINDS + ("none",)

RESULTS_HEADER = ["noise", "model", "learning_rate", "use_bias", "cells",
                  "snr_db", "val_error", "median_seconds", "diverged", "seed"]

# Reference GRU-vs-LSTM runtime gap in percent, printed beside measured gaps.
REFERENCE_RUNTIME_GAP_PCT = 18.16

ENV_THREADS = "GATED_SER_THREADS"


@dataclass(frozen=True)
class ExperimentConfig:
    corpus_dir: str
    noise_dir: str | None = None
    output_dir: str = "runs"
    noise_kinds: tuple = ("none",)
    models: tuple = ("gru", "lstm")
    sweep: str = "none"
    mix_mode: str = "target_db"
    snr_db: float = 10.0
    seed: int = 7
    train_fraction: float = 0.75
    learning_rate: float = 1.0
    use_bias: bool = False
    cells: int = 1
    epochs: int = 50
    clip_norm: float = 5.0
    readout: str = "last"
    peepholes: bool = True
    zscore: bool = False
    benchmark_repeats: int = 5

    def __post_init__(self):
        if not self.models:
            raise ConfigError("need at least one model kind")
        for m in self.models:
            if m not in cells_mod.KINDS:
                raise ConfigError(f"unknown model kind {m!r}")
        for k in self.noise_kinds:
            if k not in NOISE_CHOICES:
                raise ConfigError(f"unknown noise kind {k!r}")
        if not self.noise_kinds:
            raise ConfigError("need at least one noise kind (use 'none' for clean)")
        if self.sweep not in SWEEP_AXES:
            raise ConfigError(f"sweep must be one of {SWEEP_AXES}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        if any(k != "none" for k in self.noise_kinds) and not self.noise_dir:
            raise ConfigError("noise kinds requested but no noise_dir given")
        if self.benchmark_repeats < 0:
            raise ConfigError("benchmark_repeats must be nonnegative")
        # constructing one validates the shared hyperparameters
        self.base_train_config()

    def base_train_config(self, **overrides):
        kwargs = dict(learning_rate=self.learning_rate, use_bias=self.use_bias,
                      hidden_cells=self.cells, epochs=self.epochs, seed=self.seed,
                      clip_norm=self.clip_norm, readout=self.readout,
                      peepholes=self.peepholes)
        kwargs.update(overrides)
        return TrainConfig(**kwargs)


@dataclass(frozen=True)
class ResultRow:
    noise: str
    model: str
    learning_rate: float
    use_bias: bool
    cells: int
    snr_db: float
    val_error: float
    median_seconds: float
    diverged: bool
    seed: int

    def __eq__(self, other):
        # NaN-valued fields (snr of clean rows, timing of diverged rows)
        # compare equal, so a row equals its own CSV round-trip
        if not isinstance(other, ResultRow):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if a != b and not (isinstance(a, float) and isinstance(b, float)
                               and math.isnan(a) and math.isnan(b)):
                return False
        return True


@dataclass
class ExperimentResult:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)


def derive_seed(*parts):
    """Stable 63-bit seed from the hash of the joined parts."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def worker_count(n_tasks):
    """Pool width: min(cpu, tasks), capped by the GATED_SER_THREADS env var."""
    if n_tasks < 1:
        return 1
    workers = min(os.cpu_count() or 1, n_tasks)
    cap = os.environ.get(ENV_THREADS)
    if cap is not None:
        try:
            cap = int(cap)
        except ValueError:
            raise ConfigError(f"{ENV_THREADS} must be an integer, got {cap!r}") from None
        if cap < 1:
            raise ConfigError(f"{ENV_THREADS} must be at least 1, got {cap}")
        workers = min(workers, cap)
    return max(1, workers)


# ---------------------------------------------------------------------------
# experiment cells

@dataclass(frozen=True)
class _Cell:
    noise: str
    model: str
    learning_rate: float
    use_bias: bool
    cells: int
    seed: int

    @property
    def key(self):
        return (self.noise, self.model, self.learning_rate, self.use_bias, self.cells)

    @property
    def dirname(self):
        return (f"{self.noise}_{self.model}_lr{self.learning_rate:g}"
                f"_bias{int(self.use_bias)}_p{self.cells}")


def _sweep_points(config):
    if config.sweep == "learning_rate":
        return [(lr, bias, config.cells)
                for lr in LEARNING_RATE_GRID for bias in (False, True)]
    if config.sweep == "cells":
        return [(config.learning_rate, bias, p)
                for p in CELL_GRID for bias in (False, True)]
    return [(config.learning_rate, config.use_bias, config.cells)]


def _experiment_cells(config):
    out = []
    for noise in config.noise_kinds:
        for model in config.models:
            for lr, bias, p in _sweep_points(config):
                seed = derive_seed(config.seed, noise, model, lr, bias, p)
                out.append(_Cell(noise=noise, model=model, learning_rate=lr,
                                 use_bias=bias, cells=p, seed=seed))
    return out


def _load_noise_16k(config, kind):
    path = Path(config.noise_dir) / f"{kind}.wav"
    if not path.exists():
        raise CorpusError(f"noise recording missing: {path}")
    rec = load_noise(path, kind)
    if rec.sample_rate == SPEECH_RATE:
        return rec
    if rec.sample_rate == 48000:
        return type(rec)(kind=kind, samples=resample_48k_to_16k(rec.samples),
                         sample_rate=SPEECH_RATE)
    raise CorpusError(f"{path}: expected 48 kHz or 16 kHz noise, "
                      f"got {rec.sample_rate} Hz")


def _featurize(config, cell, manifest, noise_rec):
    """(FeatureSequence, label) pairs for one manifest under one cell."""
    mfcc_config = MfccConfig()
    pairs = []
    for entry in manifest.entries:
        utt = load_utterance(entry)
        if utt.sample_rate != SPEECH_RATE:
            raise CorpusError(
                f"{entry.path}: expected {SPEECH_RATE} Hz speech, got {utt.sample_rate}")
        if noise_rec is None:
            samples = utt.samples
        else:
            spec = SnrSpec(mode=config.mix_mode,
                           target_db=config.snr_db if config.mix_mode == "target_db" else None,
                           segment_seed=derive_seed(cell.seed, utt.id))
            samples = mix(utt, noise_rec, spec).samples
        pairs.append((mfcc(samples, mfcc_config, utterance_id=utt.id),
                      int(entry.label)))
    return pairs


def _prepare_cell_data(config, cell, train_manifest, val_manifest, noise_cache):
    noise_rec = noise_cache.get(cell.noise)
    train_set = _featurize(config, cell, train_manifest, noise_rec)
    val_set = _featurize(config, cell, val_manifest, noise_rec)
    if config.zscore:
        n_train = len(train_set)
        combined = zscore([fs for fs, _ in train_set] + [fs for fs, _ in val_set])
        labels = [label for _, label in train_set + val_set]
        pairs = list(zip(combined, labels))
        train_set, val_set = pairs[:n_train], pairs[n_train:]
    return train_set, val_set


def _train_cell(config, cell, train_set, val_set):
    """Train and evaluate one cell; returns a row with timing left out."""
    snr = config.snr_db if (cell.noise != "none" and config.mix_mode == "target_db") \
        else float("nan")
    tc = config.base_train_config(learning_rate=cell.learning_rate,
                                  use_bias=cell.use_bias, hidden_cells=cell.cells,
                                  seed=cell.seed)
    try:
        params, report = train(cell.model, train_set, tc, validation_set=val_set)
        val_error = report.final_error
        diverged = False
    except DivergenceError:
        params = None
        val_error = float("nan")
        diverged = True
    return params, ResultRow(
        noise=cell.noise, model=cell.model, learning_rate=cell.learning_rate,
        use_bias=cell.use_bias, cells=cell.cells, snr_db=snr,
        val_error=val_error, median_seconds=float("nan"),
        diverged=diverged, seed=cell.seed,
    )


def run_experiment(config):
    """Run every cell of the configured grid; returns ExperimentResult.

    Fully resumable: a cell whose row file already exists under the output
    directory is skipped verbatim (timings included). Pending cells train on
    a worker pool; benchmarks run afterwards, serially.
    """
    out_dir = Path(config.output_dir)
    cells_dir = out_dir / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)

    train_manifest, val_manifest = stratified_split(
        build_manifest(config.corpus_dir), config.train_fraction, config.seed)
    noise_cache = {kind: _load_noise_16k(config, kind)
                   for kind in config.noise_kinds if kind != "none"}

    grid = _experiment_cells(config)
    finished = {}
    pending = []
    for cell in grid:
        row_path = cells_dir / cell.dirname / "result.csv"
        if row_path.exists():
            finished[cell.key] = read_results(row_path).rows[0]
        else:
            pending.append(cell)

    def run_one(cell):
        train_set, val_set = _prepare_cell_data(
            config, cell, train_manifest, val_manifest, noise_cache)
        params, row = _train_cell(config, cell, train_set, val_set)
        return cell, row, train_set, params

    outcomes = []
    workers = worker_count(len(pending))
    if workers > 1 and len(pending) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_one, pending))
    else:
        outcomes = [run_one(cell) for cell in pending]

    # timing phase: strictly serial, one trainer at a time on the machine
    for cell, row, train_set, params in outcomes:
        if not row.diverged and config.benchmark_repeats > 0:
            tc = config.base_train_config(
                learning_rate=cell.learning_rate, use_bias=cell.use_bias,
                hidden_cells=cell.cells, seed=cell.seed)
            median_s, _ = benchmark(cell.model, train_set, tc,
                                    repeats=config.benchmark_repeats)
            row = replace(row, median_seconds=median_s)
        cell_dir = cells_dir / cell.dirname
        cell_dir.mkdir(parents=True, exist_ok=True)
        write_results(ExperimentResult(rows=[row]), cell_dir / "result.csv")
        if params is not None:
            cells_mod.save_params(params, cell_dir / "params.txt")
        finished[cell.key] = row

    result = ExperimentResult(rows=[finished[c.key] for c in grid])
    write_results(result, out_dir / "results.csv")
    return result


def prepare_single_cell(config):
    """Featurized train/validation sets for a one-cell config.

    Used by the single-run CLI paths (train, bench). The config must name
    exactly one noise kind and one model.
    """
    if len(config.noise_kinds) != 1 or len(config.models) != 1 or config.sweep != "none":
        raise ConfigError("single-cell preparation needs one noise kind, one model, "
                          "and no sweep axis")
    train_manifest, val_manifest = stratified_split(
        build_manifest(config.corpus_dir), config.train_fraction, config.seed)
    noise_cache = {kind: _load_noise_16k(config, kind)
                   for kind in config.noise_kinds if kind != "none"}
    cell = _experiment_cells(config)[0]
    train_set, val_set = _prepare_cell_data(
        config, cell, train_manifest, val_manifest, noise_cache)
    return cell, train_set, val_set


def sweep_learning_rate(config):
    """Grid {1 .. 1e-9} x {bias on, off} per model per noise kind."""
    return run_experiment(replace(config, sweep="learning_rate"))


def sweep_cells(config):
    """Grid p in {1, 2, 4, 8, 16, 32} x {bias on, off} per model per noise."""
    return run_experiment(replace(config, sweep="cells"))


# ---------------------------------------------------------------------------
# runtime comparison

@dataclass(frozen=True)
class RuntimeComparison:
    per_noise: dict          # noise kind -> percent gap
    aggregate_pct: float     # arithmetic mean over noise kinds
    reference_pct: float = REFERENCE_RUNTIME_GAP_PCT


def compare_runtime(result):
    """Percent runtime gap 100*(lstm - gru)/lstm per noise and aggregated.

    Rows are paired on (noise, learning_rate, use_bias, cells); every pair
    must have both models with usable timings.
    """
    gru = {}
    lstm = {}
    for row in result.rows:
        if row.diverged or math.isnan(row.median_seconds):
            continue
        key = (row.noise, row.learning_rate, row.use_bias, row.cells)
        if row.model == "gru":
            gru[key] = row.median_seconds
        elif row.model == "lstm":
            lstm[key] = row.median_seconds
    if not gru or not lstm:
        raise PairingError("need timed rows for both gru and lstm")

    per_noise_gaps = {}
    for key, lstm_s in lstm.items():
        if key not in gru:
            raise PairingError(f"no gru row pairs with lstm at {key}")
        per_noise_gaps.setdefault(key[0], []).append(
            100.0 * (lstm_s - gru[key]) / lstm_s)
    unpaired = set(gru) - set(lstm)
    if unpaired:
        raise PairingError(f"no lstm row pairs with gru at {sorted(unpaired)[0]}")

    per_noise = {noise: sum(gaps) / len(gaps)
                 for noise, gaps in per_noise_gaps.items()}
    aggregate = sum(per_noise.values()) / len(per_noise)
    return RuntimeComparison(per_noise=per_noise, aggregate_pct=aggregate)


# ---------------------------------------------------------------------------
# result table I/O

def _format_field(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(result, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        for row in result.rows:
            writer.writerow([
                row.noise, row.model, _format_field(row.learning_rate),
                _format_field(row.use_bias), row.cells, _format_field(row.snr_db),
                _format_field(row.val_error), _format_field(row.median_seconds),
                _format_field(row.diverged), row.seed,
            ])


def read_results(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise ConfigError(f"{path}: unexpected results header {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            rows.append(ResultRow(
                noise=rec[0], model=rec[1], learning_rate=float(rec[2]),
                use_bias=rec[3] == "true", cells=int(rec[4]),
                snr_db=float(rec[5]), val_error=float(rec[6]),
                median_seconds=float(rec[7]), diverged=rec[8] == "true",
                seed=int(rec[9]),
            ))
    return ExperimentResult(rows=rows)


# ---------------------------------------------------------------------------
# plot-data emission (delimited text; figure rendering lives in figures.py)

def _write_plot_file(path, header_comment, rows):
    lines = [f"# {header_comment}"]
    for row in rows:
        lines.append(" ".join(_format_field(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_plot_data(result, output_dir):
    """Whitespace-delimited data files behind the standard figures.

    Always emits the two per-noise bar files (validation error, runtime);
    emits error-vs-rate and error-vs-cells files when the result actually
    varies along that axis. Returns the list of written paths.
    """
    if not result.rows:
        raise ValueError("cannot emit plot data for an empty result")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []

    rates = sorted({r.learning_rate for r in result.rows})
    if len(rates) > 1:
        path = output_dir / "error_vs_learning_rate.dat"
        rows = [(r.learning_rate, r.model, int(r.use_bias), r.noise, r.val_error)
                for r in result.rows]
        _write_plot_file(path, "learning_rate model use_bias noise val_error", rows)
        written.append(path)

    sizes = sorted({r.cells for r in result.rows})
    if len(sizes) > 1:
        path = output_dir / "error_vs_cells.dat"
        rows = [(r.cells, r.model, int(r.use_bias), r.noise, r.val_error)
                for r in result.rows]
        _write_plot_file(path, "cells model use_bias noise val_error", rows)
        written.append(path)

    path = output_dir / "error_by_noise.dat"
    rows = [(r.noise, r.model, r.val_error) for r in result.rows]
    _write_plot_file(path, "noise model val_error", rows)
    written.append(path)

    path = output_dir / "runtime_by_noise.dat"
    rows = [(r.noise, r.model, r.median_seconds) for r in result.rows]
    _write_plot_file(path, "noise model median_seconds", rows)
    written.append(path)
    return written


# ---------------------------------------------------------------------------
# config files: one `key = value` per line, # comments

_LIST_KEYS = {"noise_kinds", "models"}
_INT_KEYS = {"seed", "cells", "epochs", "benchmark_repeats"}
_FLOAT_KEYS = {"snr_db", "train_fraction", "learning_rate", "clip_norm"}
_BOOL_KEYS = {"use_bias", "peepholes", "zscore"}
_STR_KEYS = {"corpus_dir", "noise_dir", "output_dir", "sweep", "mix_mode", "readout"}
_ALL_KEYS = _LIST_KEYS | _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS


def _parse_bool(text, key):
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def parse_config_file(path):
    """Key-value experiment config; returns a dict of ExperimentConfig kwargs."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _LIST_KEYS:
                out[key] = tuple(tok.strip() for tok in value.split(",") if tok.strip())
            elif key in _INT_KEYS:
                out[key] = int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            elif key in _BOOL_KEYS:
                out[key] = _parse_bool(value, key)
            else:
                out[key] = value
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return out


def load_experiment_config(path=None, **overrides):
    kwargs = parse_config_file(path) if path else {}
    for key, value in overrides.items():
        if value is not None:
            kwargs[key] = value
    if "corpus_dir" not in kwargs:
        raise ConfigError("corpus_dir is required (config file or command line)")
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
