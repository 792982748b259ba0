import numpy as np
import pytest

from gated_ser import cells
from gated_ser.errors import ConfigError, DivergenceError
from gated_ser.trainer import (
    N_CLASSES,
    TrainConfig,
    benchmark,
    evaluate,
    gradient_norm_probe,
    train,
    write_report,
)

D = 13


def _memorization_set(n=8, T=10, seed=0):
    """Tiny separable set: class k gets a distinctive constant input."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        label = i % N_CLASSES
        base = np.zeros(D)
        base[label] = 2.0
        base[7 + label % 6] = -1.5
        frames = base + 0.3 * rng.standard_normal((T, D))
        pairs.append((frames, label))
    return pairs


def _balanced_set(per_class=1, T=4, seed=1):
    rng = np.random.default_rng(seed)
    pairs = []
    for label in range(N_CLASSES):
        for _ in range(per_class):
            pairs.append((rng.standard_normal((T, D)), label))
    return pairs


class TestTrainConfig:
    def test_defaults_valid(self):
        config = TrainConfig()
        assert config.clip_norm == 5.0 and config.readout == "last"

    @pytest.mark.parametrize("kwargs", [
        {"learning_rate": 0.0},
        {"learning_rate": -1.0},
        {"learning_rate": float("nan")},
        {"hidden_cells": 0},
        {"epochs": -1},
        {"clip_norm": 0.0},
        {"readout": "max"},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_huge_learning_rate_allowed(self):
        # divergence is a runtime outcome, not a config error
        TrainConfig(learning_rate=1e308)


class TestTrain:
    def test_memorizes_small_set(self):
        config = TrainConfig(learning_rate=1.0, hidden_cells=4, epochs=200, seed=0)
        _, report = train("gru", _memorization_set(), config)
        assert report.epoch_losses[-1] < 0.01
        assert report.final_error == 0.0

    def test_zero_epochs_returns_initial_params(self):
        config = TrainConfig(epochs=0, hidden_cells=2, seed=5)
        params, report = train("rnn", _balanced_set(), config)
        fresh = cells.init_params("rnn", D, 2, N_CLASSES, seed=5)
        for (name_a, ta), (name_b, tb) in zip(params.tensors(), fresh.tensors()):
            assert np.array_equal(ta, tb)
        assert report.epoch_losses == []
        assert np.isfinite(report.final_error)

    def test_divergence_raises_with_epoch(self):
        config = TrainConfig(learning_rate=1e308, hidden_cells=4, epochs=50, seed=0)
        with pytest.raises(DivergenceError) as exc_info:
            train("gru", _memorization_set(), config)
        assert isinstance(exc_info.value.epoch, int)
        assert 1 <= exc_info.value.epoch <= 50

    def test_bit_exact_determinism(self):
        config = TrainConfig(learning_rate=0.1, hidden_cells=3, epochs=5, seed=9)
        data = _memorization_set()
        params_a, report_a = train("lstm", data, config)
        params_b, report_b = train("lstm", data, config)
        for (_, ta), (_, tb) in zip(params_a.tensors(), params_b.tensors()):
            assert np.array_equal(ta, tb)
        assert report_a.epoch_losses == report_b.epoch_losses

    def test_seed_changes_trajectory(self):
        data = _memorization_set()
        losses = []
        for seed in (0, 1):
            config = TrainConfig(learning_rate=0.1, hidden_cells=3,
                                 epochs=3, seed=seed)
            _, report = train("gru", data, config)
            losses.append(tuple(report.epoch_losses))
        assert losses[0] != losses[1]

    def test_validation_set_used_for_final_error(self):
        config = TrainConfig(learning_rate=0.5, hidden_cells=4, epochs=60, seed=0)
        train_data = _memorization_set(seed=0)
        # same generator family, so the trained net also separates these
        val_data = _memorization_set(seed=99)
        _, report = train("gru", train_data, config, validation_set=val_data)
        assert 0.0 <= report.final_error <= 1.0

    def test_eventually_monotone_losses(self):
        config = TrainConfig(learning_rate=0.5, hidden_cells=4, epochs=80, seed=0)
        _, report = train("gru", _memorization_set(), config)
        losses = report.epoch_losses
        for i in range(5, len(losses)):
            assert losses[i] <= losses[i - 5] + 1e-12

    def test_gradient_norms_recorded(self):
        config = TrainConfig(learning_rate=0.1, hidden_cells=2, epochs=4, seed=0)
        _, report = train("rnn", _memorization_set(), config)
        assert len(report.grad_norm_means) == 4
        assert report.grad_norm_max >= max(report.grad_norm_means)

    def test_empty_training_set(self):
        with pytest.raises(ConfigError):
            train("rnn", [], TrainConfig())


class TestEvaluate:
    def test_zero_params_balanced_set(self):
        # all logits equal, argmax picks class 0, so only class 0 is right
        params = cells.init_params("rnn", D, 2, N_CLASSES, seed=0)
        for _, tensor in params.tensors():
            tensor[:] = 0.0
        error = evaluate("rnn", params, _balanced_set(per_class=2))
        assert error == 6.0 / 7.0

    def test_single_element_is_zero_or_one(self):
        params = cells.init_params("gru", D, 2, N_CLASSES, seed=3)
        data = [_balanced_set()[0]]
        assert evaluate("gru", params, data) in (0.0, 1.0)

    def test_empty_set_rejected(self):
        params = cells.init_params("rnn", D, 2, N_CLASSES, seed=0)
        with pytest.raises(ConfigError):
            evaluate("rnn", params, [])


class TestProbe:
    def test_length_matches_timesteps(self):
        params = cells.init_params("gru", D, 4, N_CLASSES, seed=0)
        frames = np.random.default_rng(0).standard_normal((9, D))
        norms = gradient_norm_probe("gru", params, frames, 2)
        assert len(norms) == 9
        assert all(n >= 0.0 for n in norms)

    def test_zero_recurrence_localizes_gradient(self):
        # with no recurrent path and a last-state readout, only the final
        # timestep's state carries loss gradient
        params = cells.init_params("rnn", D, 4, N_CLASSES, seed=1)
        params.w_rec[:] = 0.0
        frames = np.random.default_rng(1).standard_normal((6, D))
        norms = gradient_norm_probe("rnn", params, frames, 0)
        assert norms[-1] > 0.0
        np.testing.assert_allclose(norms[:-1], 0.0, atol=1e-300)

    def test_needs_two_timesteps(self):
        params = cells.init_params("rnn", D, 2, N_CLASSES, seed=0)
        with pytest.raises(ValueError):
            gradient_norm_probe("rnn", params, np.zeros((1, D)), 0)


class TestBenchmark:
    def test_single_repeat(self):
        config = TrainConfig(learning_rate=0.1, hidden_cells=2, epochs=2, seed=0)
        median, times = benchmark("rnn", _memorization_set(), config, repeats=1)
        assert len(times) == 1
        assert median == times[0]

    def test_median_of_five(self):
        config = TrainConfig(learning_rate=0.1, hidden_cells=2, epochs=1, seed=0)
        median, times = benchmark("rnn", _memorization_set(), config, repeats=5)
        assert len(times) == 5
        assert median == sorted(times)[2]

    def test_zero_repeats_rejected(self):
        with pytest.raises(ConfigError):
            benchmark("rnn", _memorization_set(), TrainConfig(), repeats=0)


class TestWriteReport:
    def test_files_and_contents(self, tmp_path):
        config = TrainConfig(learning_rate=0.1, hidden_cells=2, epochs=3, seed=0)
        _, report = train("rnn", _memorization_set(), config)
        write_report(report, tmp_path / "run")
        losses = (tmp_path / "run" / "losses.csv").read_text().splitlines()
        assert losses[0] == "epoch,mean_loss"
        assert len(losses) == 4
        epoch, loss = losses[1].split(",")
        assert epoch == "1"
        assert float(loss) == report.epoch_losses[0]
        summary = (tmp_path / "run" / "summary.txt").read_text()
        assert f"final_error = {report.final_error!r}" in summary
        assert "diverged = False" in summary
