"""End-to-end acceptance gate.

Each test checks one advertised behavior of the toolkit and prints a single
PASS/FAIL line (run pytest with -s to see them on success). Gradient
correctness is checked against an independent extended-precision forward
implementation written here, not against the library's own forward pass:
float64 loss evaluations carry ~1e-11 absolute rounding noise, which at
eps=1e-5 swamps the difference quotient for coordinates whose true gradient
is below ~1e-6. The longdouble oracle removes that floor while leaving the
production code untouched.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from gated_ser import cells
from gated_ser.cells import (
    bptt_backward,
    gru_step,
    init_params,
    lstm_step,
    param_count,
    unroll_forward,
)
from gated_ser.corpus import NOISE_KINDS, NoiseRecording, Utterance, EmotionLabel
from gated_ser.experiment import (
    ExperimentConfig,
    run_experiment,
    sweep_cells,
    sweep_learning_rate,
)
from gated_ser.mixer import SnrSpec, mix, verify_snr
from gated_ser.dsp import (
    MfccConfig,
    filter_center_frequencies,
    frame_signal,
    hamming_window,
    mel_filterbank,
    mfcc,
    power_spectrum,
)
from gated_ser.trainer import TrainConfig, benchmark, train
from gated_ser.trainer import gradient_norm_probe

D, P, K = 3, 4, 7


def _report(num, name, ok, detail=""):
    line = f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# independent extended-precision forward pass (oracle for criterion 1)

def _ld(x):
    return np.asarray(x, dtype=np.longdouble)


def _sig_ld(x):
    return 1.0 / (1.0 + np.exp(-x))


def _loss_ld(kind, theta, features, label, use_bias):
    """Sequence loss recomputed from the cell equations in longdouble."""
    x_seq = _ld(features)
    p = theta["w_out"].shape[1]
    h = np.zeros(p, dtype=np.longdouble)
    if kind == "rnn":
        for x in x_seq:
            a = theta["w_in"] @ x + theta["w_rec"] @ h
            if use_bias:
                a = a + theta["b_hidden"]
            h = np.tanh(a)
    elif kind == "lstm":
        c = np.zeros(p, dtype=np.longdouble)
        for x in x_seq:
            a_i = theta["w_xi"] @ x + theta["w_hi"] @ h + theta["p_i"] * c
            a_f = theta["w_xf"] @ x + theta["w_hf"] @ h + theta["p_f"] * c
            a_g = theta["w_xc"] @ x + theta["w_hc"] @ h
            if use_bias:
                a_i, a_f, a_g = a_i + theta["b_i"], a_f + theta["b_f"], a_g + theta["b_c"]
            c = _sig_ld(a_f) * c + _sig_ld(a_i) * np.tanh(a_g)
            a_o = theta["w_xo"] @ x + theta["w_ho"] @ h + theta["p_o"] * c
            if use_bias:
                a_o = a_o + theta["b_o"]
            h = _sig_ld(a_o) * np.tanh(c)
    elif kind == "gru":
        for x in x_seq:
            a_z = theta["w_xz"] @ x + theta["w_hz"] @ h
            a_r = theta["w_xr"] @ x + theta["w_hr"] @ h
            if use_bias:
                a_z, a_r = a_z + theta["b_z"], a_r + theta["b_r"]
            z, r = _sig_ld(a_z), _sig_ld(a_r)
            a_g = theta["w_xh"] @ x + theta["w_hh"] @ (r * h)
            if use_bias:
                a_g = a_g + theta["b_h"]
            h = (1.0 - z) * h + z * np.tanh(a_g)
    else:
        raise ValueError(kind)
    logits = theta["w_out"] @ h
    if use_bias:
        logits = logits + theta["b_out"]
    shifted = logits - logits.max()
    return np.log(np.sum(np.exp(shifted))) - shifted[label]  # stays longdouble


def _fd_gradient_error(kind, seed, use_bias, eps=1e-5):
    rng = np.random.default_rng(seed + 2000)
    params = init_params(kind, D, P, K, use_bias=use_bias, peepholes=True, seed=seed)
    features = rng.standard_normal((5, D))
    label = int(rng.integers(0, K))
    _, grads = bptt_backward(kind, params, features, label)
    theta = {name: _ld(tensor) for name, tensor in params.tensors()}
    worst = 0.0
    for name in theta:
        grad = grads.tensors[name]
        flat = theta[name].reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + eps
            up = _loss_ld(kind, theta, features, label, use_bias)
            flat[j] = keep - eps
            down = _loss_ld(kind, theta, features, label, use_bias)
            flat[j] = keep
            numeric = float((up - down) / np.longdouble(2.0 * eps))
            analytic = float(grad.reshape(-1)[j])
            denom = max(abs(analytic), abs(numeric), 1e-12)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def test_criterion_01_gradient_correctness():
    import time

    started = time.perf_counter()
    worst = {}
    for kind in cells.KINDS:
        errors = [_fd_gradient_error(kind, seed, use_bias=seed % 2 == 1)
                  for seed in range(20)]
        worst[kind] = max(errors)
    elapsed = time.perf_counter() - started
    ok = all(err <= 1e-5 for err in worst.values()) and elapsed < 60.0
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    _report(1, "gradient correctness vs finite differences",
            ok, f"{detail}; {elapsed:.1f}s")


def test_criterion_02_cell_identities():
    checks = []

    gru = init_params("gru", D, P, K, use_bias=True, seed=0)
    for _, tensor in gru.tensors():
        tensor[:] = 0.0
    h_prev = np.array([0.3, -0.8, 1.2, 0.4])
    x = np.array([0.5, -0.1, 0.2])

    closed = gru_step(gru, h_prev, np.zeros(D))
    checks.append(np.max(np.abs(closed - 0.5 * h_prev)) <= 1e-12)

    gru.b_z[:] = -50.0
    checks.append(np.max(np.abs(gru_step(gru, h_prev, x) - h_prev)) <= 1e-12)

    gru.b_z[:] = 50.0
    gru.w_xh[:] = 1.0
    candidate = np.tanh(np.full(P, x.sum()))
    checks.append(np.max(np.abs(gru_step(gru, h_prev, x) - candidate)) <= 1e-12)

    lstm = init_params("lstm", D, P, K, use_bias=True, peepholes=True, seed=0)
    for _, tensor in lstm.tensors():
        tensor[:] = 0.0
    c_prev = np.array([0.7, -1.1, 0.2, 1.9])

    lstm.b_f[:] = 50.0
    lstm.b_i[:] = -50.0
    _, c = lstm_step(lstm, np.zeros(P), c_prev, x)
    checks.append(np.max(np.abs(c - c_prev)) <= 1e-12)

    lstm.b_f[:] = 0.0
    lstm.b_i[:] = 0.0
    h, c = lstm_step(lstm, np.zeros(P), c_prev, np.zeros(D))
    checks.append(np.max(np.abs(c - 0.5 * c_prev)) <= 1e-12)
    checks.append(np.max(np.abs(h - 0.5 * np.tanh(0.5 * c_prev))) <= 1e-12)

    _report(2, "gating endpoint and zero-parameter identities", all(checks),
            f"{sum(checks)}/{len(checks)} identities exact within 1e-12")


def test_criterion_03_parameter_ratio():
    rng = np.random.default_rng(123)
    ok = True
    for _ in range(10):
        d = int(rng.integers(1, 60))
        p = int(rng.integers(1, 60))
        gru = param_count("gru", d, p, use_bias=False, peepholes=False)
        lstm = param_count("lstm", d, p, use_bias=False, peepholes=False)
        ok = ok and gru * 4 == lstm * 3
    _report(3, "GRU/LSTM parameter count ratio 3/4", ok,
            f"e.g. d=3 p=4: {param_count('gru', 3, 4, use_bias=False, peepholes=False)}"
            f"/{param_count('lstm', 3, 4, use_bias=False, peepholes=False)}")


def _benchmark_set(n=100, T=10, seed=0):
    rng = np.random.default_rng(seed)
    data = []
    for i in range(n):
        label = i % K
        base = np.zeros(13)
        base[label] = 2.0
        base[7 + label % 6] = -1.5
        data.append((base + 0.3 * rng.standard_normal((T, 13)), label))
    return data


def test_criterion_04_runtime_direction():
    data = _benchmark_set()
    config = TrainConfig(learning_rate=0.1, hidden_cells=4, epochs=50, seed=0)
    gru_median, _ = benchmark("gru", data, config, repeats=5)
    lstm_median, _ = benchmark("lstm", data, config, repeats=5)
    gap = 100.0 * (lstm_median - gru_median) / lstm_median
    _report(4, "GRU at least 5% faster than LSTM", gap >= 5.0,
            f"measured {gap:.1f}%, reference 18.16%")


def test_criterion_05_snr_fidelity():
    rng = np.random.default_rng(31)
    worst = 0.0
    for target in (0.0, 10.0, 20.0):
        for trial in range(50):
            n = int(rng.integers(2000, 6000))
            clean = rng.uniform(-0.4, 0.4, n)
            noise = rng.uniform(-0.4, 0.4, n + int(rng.integers(0, 8000)))
            utt = Utterance(id="x", speaker="00", label=EmotionLabel.ANGER,
                            samples=clean, sample_rate=16000)
            rec = NoiseRecording(kind="traffic", samples=noise, sample_rate=16000)
            mixed = mix(utt, rec, SnrSpec(mode="target_db", target_db=target,
                                          segment_seed=trial))
            worst = max(worst, abs(verify_snr(mixed, clean, mixed.scaled_noise)
                                   - target))
    _report(5, "SNR within 0.1 dB of target over {0,10,20} dB x 50 mixes",
            worst <= 0.1, f"worst deviation {worst:.2e} dB")


def test_criterion_06_mfcc_properties():
    rng = np.random.default_rng(6)
    config = MfccConfig()
    checks = []

    samples = rng.uniform(-0.05, 0.05, 8000) + 0.02 * np.sin(
        2 * np.pi * 440.0 * np.arange(8000) / 16000.0)
    base = mfcc(samples, config)
    checks.append(base.frames.shape[1] == 13)

    worst_gain = 0.0
    for gain in (0.1, 0.316, 1.0, 3.16, 10.0):
        scaled = mfcc(samples * gain, config)
        worst_gain = max(worst_gain, float(np.max(np.abs(
            scaled.frames[:, 1:] - base.frames[:, 1:]))))
    checks.append(worst_gain <= 1e-9)

    t = np.arange(16000) / 16000.0
    tone = 0.5 * np.sin(2 * np.pi * 1000.0 * t)
    frames = frame_signal(tone, config)
    spectra = power_spectrum(frames * hamming_window(config.frame_samples),
                             config.n_fft)
    bank = mel_filterbank(config.n_mels, config.n_fft, config.sample_rate)
    energies = (spectra @ bank.T).mean(axis=0)
    centers = np.asarray(filter_center_frequencies(config.n_mels,
                                                   config.sample_rate))
    checks.append(int(np.argmax(energies))
                  == int(np.argmin(np.abs(centers - 1000.0))))

    _report(6, "13 MFCC columns, gain-invariant c1..c12, 1 kHz peak filter",
            all(checks), f"gain deviation {worst_gain:.2e}")


def _separable_set(n, T, seed):
    rng = np.random.default_rng(seed)
    data = []
    for i in range(n):
        label = i % K
        base = np.zeros(13)
        base[label] = 2.0
        base[7 + label % 6] = -1.5
        data.append((base + 0.3 * rng.standard_normal((T, 13)), label))
    return data


def test_criterion_07_learning_sanity():
    memo_config = TrainConfig(learning_rate=1.0, hidden_cells=4, epochs=200, seed=0)
    _, memo_report = train("gru", _separable_set(8, 10, seed=0), memo_config)
    memorized = memo_report.epoch_losses[-1] < 0.01

    # 42 synthetic class-separated sequences, stratified 2-per-class holdout
    data = _separable_set(42, 20, seed=1)
    by_class = {}
    for pair in data:
        by_class.setdefault(pair[1], []).append(pair)
    train_set, val_set = [], []
    for label, pairs in sorted(by_class.items()):
        train_set.extend(pairs[:-2])
        val_set.extend(pairs[-2:])
    config = TrainConfig(learning_rate=0.5, hidden_cells=8, epochs=100, seed=0)
    _, report = train("gru", train_set, config, validation_set=val_set)
    chance = 6.0 / 7.0
    beats_chance = report.final_error <= chance - 0.20

    _report(7, "memorization < 0.01 and validation well under chance",
            memorized and beats_chance,
            f"final loss {memo_report.epoch_losses[-1]:.1e}, "
            f"val error {report.final_error:.3f} vs chance {chance:.3f}")


def _strip_timing(csv_path):
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    drop = header.index("median_seconds")
    return "\n".join(",".join(tok for i, tok in enumerate(line.split(","))
                              if i != drop)
                     for line in lines)


def test_criterion_08_determinism(corpus_dir, noise_dir, tmp_path):
    base = ExperimentConfig(
        corpus_dir=str(corpus_dir), noise_dir=str(noise_dir),
        output_dir=str(tmp_path / "a"), noise_kinds=("none", "cafe"),
        models=("gru", "lstm"), epochs=2, cells=2, learning_rate=0.1,
        seed=7, benchmark_repeats=0,
    )
    run_experiment(base)
    run_experiment(replace(base, output_dir=str(tmp_path / "b")))
    text_a = _strip_timing(tmp_path / "a" / "results.csv")
    text_b = _strip_timing(tmp_path / "b" / "results.csv")
    _report(8, "same-seed harness runs byte-identical outside timing columns",
            text_a == text_b, f"{len(text_a.splitlines()) - 1} rows compared")


def test_criterion_09_sweep_shapes(corpus_dir, noise_dir, tmp_path):
    base = ExperimentConfig(
        corpus_dir=str(corpus_dir), noise_dir=str(noise_dir),
        output_dir=str(tmp_path / "lr"), noise_kinds=("none",),
        models=("gru",), epochs=1, cells=1, learning_rate=0.1,
        seed=7, benchmark_repeats=0,
    )
    lr_rows = sweep_learning_rate(base).rows
    cell_rows = sweep_cells(replace(base, output_dir=str(tmp_path / "cells"))).rows

    comparison = run_experiment(replace(
        base, output_dir=str(tmp_path / "noise"),
        noise_kinds=NOISE_KINDS + ("none",), models=("gru", "lstm")))

    ok = (len(lr_rows) == 20
          and len({(r.learning_rate, r.use_bias) for r in lr_rows}) == 20
          and len(cell_rows) == 12
          and len({(r.cells, r.use_bias) for r in cell_rows}) == 12
          and len(comparison.rows) == 18)
    _report(9, "sweep grids 20/12 rows, 9-noise comparison 18 rows", ok,
            f"lr {len(lr_rows)}, cells {len(cell_rows)}, "
            f"comparison {len(comparison.rows)}")


def test_criterion_10_vanishing_gradient_probe():
    params = init_params("rnn", D, P, K, seed=0)
    params.w_rec[:] = 0.1 * np.eye(P)
    rng = np.random.default_rng(0)
    frames = rng.standard_normal((50, D))
    norms = gradient_norm_probe("rnn", params, frames, label=3)
    first, last = norms[0], norms[-1]
    ok = last > 0.0 and first * 10.0 <= last
    ratio = last / first if first > 0 else math.inf
    _report(10, "gradient norm at t=1 at least 10x below t=T", ok,
            f"t=1: {first:.2e}, t=T: {last:.2e}, ratio {ratio:.1e}")
