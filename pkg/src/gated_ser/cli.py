"""Command-line surface for the pipeline.

Exit codes: 0 success, 2 bad configuration or usage, 3 corpus problem,
4 partial failure (at least one experiment cell diverged; the rows are
still written with their diverged flag set).
"""

import math
from pathlib import Path

import click

from . import cells as cells_mod
from .corpus import (
    NOISE_KINDS,
    build_manifest,
    load_utterance,
    load_wav,
    write_manifest,
    write_wav,
)
from .dsp import SPEECH_RATE, MfccConfig, dump_features, mfcc, zscore
from .errors import (
    ConfigError,
    CorpusError,
    DivergenceError,
    GatedSerError,
    PairingError,
)
from .experiment import (
    compare_runtime,
    derive_seed,
    emit_plot_data,
    load_experiment_config,
    prepare_single_cell,
    read_results,
    run_experiment,
    sweep_cells,
    sweep_learning_rate,
)
from .mixer import SnrSpec, mix
from .trainer import train as run_train
from .trainer import write_report


@click.group()
def cli():
    """Noisy-speech emotion classification toolkit."""


def _mix_mode(raw):
    return "raw_add" if raw else "target_db"


def _partial_failure(result):
    return 4 if any(row.diverged for row in result.rows) else 0


# ---------------------------------------------------------------------------
# corpus commands

@cli.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("-o", "--out", default="manifest.csv", show_default=True,
              help="Manifest CSV to write.")
def manifest(corpus_dir, out):
    """Scan a corpus directory and write its manifest CSV."""
    m = build_manifest(corpus_dir)
    write_manifest(m, out)
    click.echo(f"wrote {out}: {len(m)} utterances")
    for label, count in m.class_counts().items():
        click.echo(f"  {label.name.lower():8s} {count}")


@cli.command(name="mix")
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--noise-dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--kind", required=True, type=click.Choice(NOISE_KINDS))
@click.option("--snr", "snr_db", type=float, default=10.0, show_default=True,
              help="Target SNR in dB.")
@click.option("--raw", is_flag=True, help="Add noise unscaled instead of hitting --snr.")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def mix_cmd(corpus_dir, noise_dir, kind, snr_db, raw, seed, out):
    """Mix every corpus utterance with one noise kind; write the WAVs."""
    from .experiment import _load_noise_16k  # shares the resampling rule

    config = load_experiment_config(None, corpus_dir=corpus_dir, noise_dir=noise_dir,
                                    noise_kinds=(kind,), mix_mode=_mix_mode(raw),
                                    snr_db=snr_db, seed=seed)
    noise_rec = _load_noise_16k(config, kind)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    m = build_manifest(corpus_dir)
    achieved = []
    for entry in m.entries:
        utt = load_utterance(entry)
        spec = SnrSpec(mode=config.mix_mode,
                       target_db=snr_db if config.mix_mode == "target_db" else None,
                       segment_seed=derive_seed(seed, kind, utt.id))
        mixed = mix(utt, noise_rec, spec)
        write_wav(out_dir / f"{utt.id}_{kind}.wav", mixed.samples, mixed.sample_rate)
        if math.isfinite(mixed.achieved_snr):
            achieved.append(mixed.achieved_snr)
    click.echo(f"wrote {len(m)} mixed files to {out_dir}")
    if achieved:
        click.echo(f"mean achieved SNR {sum(achieved) / len(achieved):.2f} dB")


@cli.command()
@click.option("--input", "input_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--zscore", "use_zscore", is_flag=True,
              help="Z-score all sequences with shared statistics.")
def features(input_dir, out, use_zscore):
    """Extract 13-coefficient MFCC files for every WAV in a directory."""
    paths = sorted(Path(input_dir).glob("*.wav"))
    if not paths:
        raise CorpusError(f"no WAV files in {input_dir}")
    config = MfccConfig()
    sequences = []
    for p in paths:
        samples, rate = load_wav(p)
        if rate != SPEECH_RATE:
            raise CorpusError(f"{p}: expected {SPEECH_RATE} Hz input, got {rate}")
        sequences.append(mfcc(samples, config, utterance_id=p.stem))
    if use_zscore:
        sequences = zscore(sequences)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fs in sequences:
        dump_features(fs, config, out_dir / f"{fs.utterance_id}.csv")
    click.echo(f"wrote {len(sequences)} feature files to {out_dir}")


# ---------------------------------------------------------------------------
# training commands

def _single_cell_options(include_model=True):
    decorators = [
        click.option("--corpus", "corpus_dir", required=True,
                     type=click.Path(exists=True, file_okay=False)),
        click.option("--noise-dir", type=click.Path(exists=True, file_okay=False)),
        click.option("--kind", type=click.Choice(NOISE_KINDS + ("none",)),
                     default="none", show_default=True),
        click.option("--snr", "snr_db", type=float, default=10.0, show_default=True),
        click.option("--raw", is_flag=True),
        click.option("--lr", "learning_rate", type=float, default=1.0, show_default=True),
        click.option("--bias/--no-bias", "use_bias", default=False, show_default=True),
        click.option("--cells", type=int, default=1, show_default=True),
        click.option("--epochs", type=int, default=50, show_default=True),
        click.option("--seed", type=int, default=7, show_default=True),
        click.option("--fraction", "train_fraction", type=float, default=0.75,
                     show_default=True),
        click.option("--readout", type=click.Choice(("last", "mean")), default="last",
                     show_default=True),
    ]
    if include_model:
        decorators.insert(5, click.option(
            "--model", type=click.Choice(cells_mod.KINDS), default="gru",
            show_default=True))

    def wrap(fn):
        for dec in reversed(decorators):
            fn = dec(fn)
        return fn

    return wrap


def _single_cell_config(out, **kwargs):
    raw = kwargs.pop("raw")
    kind = kwargs.pop("kind")
    model = kwargs.pop("model")
    return load_experiment_config(
        None, noise_kinds=(kind,), models=(model,), mix_mode=_mix_mode(raw),
        output_dir=out, **kwargs)


@cli.command(name="train")
@_single_cell_options()
@click.option("--out", default="train-run", show_default=True,
              type=click.Path(file_okay=False))
def train_cmd(out, **kwargs):
    """Train one model end-to-end and report its validation error."""
    config = _single_cell_config(out, **kwargs)
    cell, train_set, val_set = prepare_single_cell(config)
    tc = config.base_train_config(seed=cell.seed)
    out_dir = Path(out)
    try:
        params, report = run_train(cell.model, train_set, tc, validation_set=val_set)
    except DivergenceError as exc:
        click.echo(f"diverged: {exc}", err=True)
        return 4
    write_report(report, out_dir)
    cells_mod.save_params(params, out_dir / "params.txt")
    click.echo(f"validation error {report.final_error:.4f} "
               f"({len(train_set)} train / {len(val_set)} validation sequences)")
    click.echo(f"report in {out_dir}")
    return 0


@cli.command()
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--noise-dir", type=click.Path(exists=True, file_okay=False))
@click.option("--noise", "noise_kinds", default="none", show_default=True,
              help="Comma-separated noise kinds ('none' for clean).")
@click.option("--snr", "snr_db", type=float, default=10.0, show_default=True)
@click.option("--raw", is_flag=True)
@click.option("--lr", "learning_rate", type=float, default=1.0, show_default=True)
@click.option("--bias/--no-bias", "use_bias", default=False, show_default=True)
@click.option("--cells", type=int, default=1, show_default=True)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--fraction", "train_fraction", type=float, default=0.75,
              show_default=True)
@click.option("--repeats", type=int, default=5, show_default=True)
@click.option("--out", default="bench-run", show_default=True,
              type=click.Path(file_okay=False))
def bench(out, repeats, noise_kinds, raw, **kwargs):
    """Benchmark gru and lstm on the same data and compare their runtimes."""
    config = load_experiment_config(
        None, noise_kinds=tuple(t.strip() for t in noise_kinds.split(",")),
        models=("gru", "lstm"), mix_mode=_mix_mode(raw),
        output_dir=out, benchmark_repeats=repeats, **kwargs)
    result = run_experiment(config)
    click.echo(f"results in {Path(config.output_dir) / 'results.csv'}")
    try:
        comparison = compare_runtime(result)
    except PairingError:
        click.echo("no complete gru/lstm pairing to compare", err=True)
    else:
        for noise, gap in sorted(comparison.per_noise.items()):
            click.echo(f"  {noise:8s} gru is {gap:+.2f}% faster than lstm")
        click.echo(f"aggregate: {comparison.aggregate_pct:+.2f}% "
                   f"(reference {comparison.reference_pct:.2f}%)")
    return _partial_failure(result)


def _sweep_options(fn):
    decorators = [
        click.option("-c", "--config", "config_path",
                     type=click.Path(exists=True, dir_okay=False),
                     help="key = value experiment config file."),
        click.option("--corpus", "corpus_dir",
                     type=click.Path(exists=True, file_okay=False)),
        click.option("--noise-dir", type=click.Path(exists=True, file_okay=False)),
        click.option("--noise", "noise_kinds", help="Comma-separated noise kinds."),
        click.option("--models", help="Comma-separated model kinds."),
        click.option("--snr", "snr_db", type=float),
        click.option("--raw", is_flag=True, default=None),
        click.option("--epochs", type=int),
        click.option("--seed", type=int),
        click.option("--repeats", "benchmark_repeats", type=int),
        click.option("--out", "output_dir", type=click.Path(file_okay=False)),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _sweep_config(config_path, raw, noise_kinds, models, **kwargs):
    overrides = {k: v for k, v in kwargs.items() if v is not None}
    if raw is not None:
        overrides["mix_mode"] = _mix_mode(raw)
    if noise_kinds is not None:
        overrides["noise_kinds"] = tuple(t.strip() for t in noise_kinds.split(","))
    if models is not None:
        overrides["models"] = tuple(t.strip() for t in models.split(","))
    return load_experiment_config(config_path, **overrides)


@cli.command(name="sweep-lr")
@_sweep_options
def sweep_lr_cmd(config_path, raw, noise_kinds, models, **kwargs):
    """Sweep learning rates {1 .. 1e-9} with bias on and off."""
    config = _sweep_config(config_path, raw, noise_kinds, models, **kwargs)
    result = sweep_learning_rate(config)
    emit_plot_data(result, Path(config.output_dir) / "plots")
    click.echo(f"{len(result)} rows in {Path(config.output_dir) / 'results.csv'}")
    return _partial_failure(result)


@cli.command(name="sweep-cells")
@_sweep_options
def sweep_cells_cmd(config_path, raw, noise_kinds, models, **kwargs):
    """Sweep hidden sizes {1, 2, 4, 8, 16, 32} with bias on and off."""
    config = _sweep_config(config_path, raw, noise_kinds, models, **kwargs)
    result = sweep_cells(config)
    emit_plot_data(result, Path(config.output_dir) / "plots")
    click.echo(f"{len(result)} rows in {Path(config.output_dir) / 'results.csv'}")
    return _partial_failure(result)


# ---------------------------------------------------------------------------
# result commands

@cli.command()
@click.argument("results_csv", type=click.Path(exists=True, dir_okay=False))
def compare(results_csv):
    """Print the GRU-vs-LSTM runtime gap from a results CSV."""
    comparison = compare_runtime(read_results(results_csv))
    for noise, gap in sorted(comparison.per_noise.items()):
        click.echo(f"{noise:8s} gru is {gap:+.2f}% faster than lstm")
    click.echo(f"aggregate: {comparison.aggregate_pct:+.2f}% "
               f"(reference {comparison.reference_pct:.2f}%)")


@cli.command()
@click.argument("results_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default="report", show_default=True,
              type=click.Path(file_okay=False))
def report(results_csv, out):
    """Write plot-data files and rendered figures for a results CSV."""
    from . import figures  # matplotlib import deferred to the one command using it

    result = read_results(results_csv)
    written = emit_plot_data(result, out)
    written += figures.render_figures(result, out)
    for path in written:
        click.echo(f"wrote {path}")


def main(argv=None):
    """Entry point mapping error taxonomy onto exit codes."""
    try:
        rc = cli.main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.Abort:
        return 130
    except CorpusError as exc:
        click.echo(f"corpus error: {exc}", err=True)
        return 3
    except (ConfigError, PairingError) as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except GatedSerError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return int(rc) if isinstance(rc, int) else 0
