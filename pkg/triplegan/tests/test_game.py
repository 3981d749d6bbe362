"""Tests for triplegan/game: schedules, losses, regularizers, training runs and the gradient suite."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from triplegan.autodiff.random import RngStream, RngStreams
from triplegan.autodiff.tensor import grad
from triplegan.cli.checkpoint import read_checkpoint
from triplegan.core.errors import ContractError
from triplegan.core.settings import parse_config
from triplegan.data.splits import make_benchmark
from triplegan.evaluation.metrics import MetricsRow
from triplegan.game.gradient_suite import run_gradient_suite, worst_error
from triplegan.game.hyperparams import GameHyperparams, Schedule
from triplegan.game.losses import (
    adversarial_classifier_term,
    classifier_loss,
    discriminator_loss,
    generator_loss,
    log_one_minus_d,
)
from triplegan.game.regularizers import unlabeled_regularizer
from triplegan.game.state import TrainState
from triplegan.game.training import pseudo_pair_augment, run_training, train_step


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def _make_batch(model, n=2, seed=0):
    rng = RngStream(seed, "batch")
    x_d = rng.uniform((n, 2)) * 2 - 1
    y_d = rng.integers(0, 3, n)
    x_c = rng.uniform((n, 2)) * 2 - 1
    y_c = rng.integers(0, 3, n)
    y_g = rng.integers(0, 3, n)
    z_g = rng.normal((n, model.generator.latent_dim))
    return x_d, y_d, x_c, y_c, y_g, z_g


def _make_hyper(**kwargs):
    defaults = {
        "alpha": 0.5,
        "alpha_p": Schedule(kind="constant", max_value=0.3),
        "alpha_u": Schedule(kind="constant", max_value=1.0),
        "regularizer": "mean_teacher",
    }
    return GameHyperparams(**{**defaults, **kwargs})


def _nonzero_prefixes(loss, model):
    grads = grad(loss, model.parameters().values())
    return {param.name.split(".", 1)[0] for param, g in grads.items() if np.any(g)}


def _metrics_rows(path):
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    return lines[0], [MetricsRow.from_csv(line) for line in lines[1:]]


# ---------------------------------------------------------------------------
# Schedules and hyperparameters
# ---------------------------------------------------------------------------


def test_sigmoid_rampup_schedule():
    schedule = Schedule(kind="sigmoid_rampup", max_value=2.0, rampup=10, start=5)
    assert schedule.value(4) == 0.0
    assert schedule.value(5) == pytest.approx(2.0 * math.exp(-5.0))
    assert schedule.value(15) == pytest.approx(2.0)
    assert schedule.value(1000) == pytest.approx(2.0)
    assert schedule.value(8) < schedule.value(12)


def test_constant_schedule_and_negative_iteration():
    schedule = Schedule(kind="constant", max_value=0.7)
    assert schedule.value(0) == 0.7
    with pytest.raises(ValueError, match=">= 0"):
        schedule.value(-1)


def test_hyperparams_reject_alpha_outside_open_interval():
    with pytest.raises(ValidationError, match=r"α ∈ \(0,1\)"):
        GameHyperparams(alpha=1.0)


def test_unlabelled_weight_is_zero_without_pool_or_regularizer():
    assert _make_hyper(regime="low_data").alpha_u_at(100) == 0.0
    assert _make_hyper(regularizer="none").alpha_u_at(100) == 0.0
    assert _make_hyper().alpha_u_at(100) == 1.0


def test_label_source_resolution():
    assert _make_hyper().uses_teacher_labels
    assert not _make_hyper(regularizer="entropy").uses_teacher_labels
    assert _make_hyper(regularizer="entropy", label_source="teacher").uses_teacher_labels
    assert not _make_hyper(label_source="student").uses_teacher_labels


def test_hyperparams_from_config(tiny_config):
    hyper = GameHyperparams.from_config(tiny_config)
    assert hyper.pretrain_iters == 2
    assert hyper.alpha_p.start == 2
    assert hyper.alpha_p_at(1) == 0.0
    assert hyper.batch_d == 4


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def test_discriminator_loss_matches_direct_formula(model):
    x_d, y_d, x_c, y_c, y_g, z_g = _make_batch(model)
    x_g = model.generator.generate(y_g, z_g)
    loss = discriminator_loss(model, (x_d, y_d), (x_c, y_c), (x_g, y_g), 0.3)

    d = model.discriminator
    real = _sigmoid(d(x_d, y_d).data)
    fake_c = _sigmoid(d(x_c, y_c).data)
    fake_g = _sigmoid(d(x_g, y_g).data)
    expected = -(np.log(real).mean() + 0.3 * np.log(1 - fake_c).mean() + 0.7 * np.log(1 - fake_g).mean())
    assert abs(loss.item() - expected) < 1e-12


def test_discriminator_loss_trains_only_the_discriminator(model):
    x_d, y_d, x_c, y_c, y_g, z_g = _make_batch(model, n=4)
    x_g = model.generator.generate(y_g, z_g)
    loss = discriminator_loss(model, (x_d, y_d), (x_c, y_c), (x_g, y_g), 0.5)
    assert _nonzero_prefixes(loss, model) == {"d"}


def test_discriminator_loss_rejects_empty_batch(model):
    x_d, y_d, x_c, y_c, _, _ = _make_batch(model)
    with pytest.raises(ContractError, match="generated batch is empty"):
        discriminator_loss(model, (x_d, y_d), (x_c, y_c), (x_d[:0], y_d[:0]), 0.5)


def test_adversarial_term_integrates_labels_exactly(model):
    x = _make_batch(model, n=3)[2]
    logits = model.classifier.forward(x, "eval")
    term = adversarial_classifier_term(model, logits, x, 0.5).item()

    probs = model.classifier.probabilities(x)
    d_all = _sigmoid(model.discriminator.all_labels(x).data)
    expected = 0.5 * np.mean(np.sum(probs * np.log(1 - d_all), axis=1))
    assert abs(term - expected) < 1e-12


def test_adversarial_term_matches_sampled_labels(model):
    x = _make_batch(model, n=1)[2]
    exact = adversarial_classifier_term(model, model.classifier.forward(x, "eval"), x, 0.5).item()

    n = 100_000
    x_rep = np.repeat(x, n, axis=0)
    y = RngStream(1, "labels").categorical(model.classifier.probabilities(x_rep))
    values = 0.5 * log_one_minus_d(model.discriminator(x_rep, y).data)
    stderr = values.std() / math.sqrt(n)
    assert abs(values.mean() - exact) < 3 * stderr + 1e-12


def test_classifier_loss_trains_only_the_classifier(model):
    x_d, y_d, x_c, _, y_g, z_g = _make_batch(model, n=4)
    x_g = model.generator.generate(y_g, z_g)
    closs = classifier_loss(model, x_c, (x_d, y_d), (x_g, y_g), _make_hyper(), 0, RngStreams(0))
    assert _nonzero_prefixes(closs.total, model) == {"c"}
    assert closs.alpha_p == 0.3
    assert closs.alpha_u == 1.0
    assert closs.r_p > 0
    assert closs.r_u >= 0


def test_classifier_loss_leaves_out_zero_weight_terms(model):
    x_d, y_d, x_c, _, y_g, z_g = _make_batch(model)
    hyper = _make_hyper(alpha_p=Schedule(kind="constant", max_value=0.0), regularizer="none")
    closs = classifier_loss(model, x_c, (x_d, y_d), (x_d[:0], y_d[:0]), hyper, 0, RngStreams(0))
    assert closs.r_p == 0.0
    assert closs.r_u == 0.0
    assert closs.total.item() == pytest.approx(closs.adversarial + closs.r_c)


def test_classifier_loss_rejects_empty_labelled_batch(model):
    x_d, y_d, x_c, _, y_g, z_g = _make_batch(model)
    with pytest.raises(ContractError, match="labelled batch is empty"):
        classifier_loss(model, x_c, (x_d[:0], y_d[:0]), (x_c, y_g), _make_hyper(), 0, RngStreams(0))


@pytest.mark.parametrize("variant", ["minimax", "nonsaturating"])
def test_generator_loss_values(model, variant):
    _, _, _, _, y_g, z_g = _make_batch(model, n=4)
    loss = generator_loss(model, y_g, z_g, 0.25, variant)
    d = _sigmoid(model.discriminator(model.generator.generate(y_g, z_g), y_g).data)
    expected = 0.75 * np.log(1 - d).mean() if variant == "minimax" else -0.75 * np.log(d).mean()
    assert abs(loss.item() - expected) < 1e-12
    assert _nonzero_prefixes(loss, model) == {"g"}


def test_generator_loss_unknown_variant(model):
    _, _, _, _, y_g, z_g = _make_batch(model)
    with pytest.raises(ValueError, match="unknown generator loss"):
        generator_loss(model, y_g, z_g, 0.5, "wasserstein")


def test_log_one_minus_d_at_zero_logit():
    assert log_one_minus_d(np.array([0.0]))[0] == pytest.approx(-math.log(2.0))


# ---------------------------------------------------------------------------
# Unlabelled regularizers and pseudo-labelled positives
# ---------------------------------------------------------------------------


def test_entropy_regularizer_is_bounded(model):
    x = _make_batch(model, n=6)[2]
    value = unlabeled_regularizer("entropy", model.classifier, x, RngStreams(0)).item()
    assert 0.0 <= value <= math.log(3) + 1e-12


def test_consistency_regularizer_is_nonnegative(model):
    x = _make_batch(model, n=6)[2]
    assert unlabeled_regularizer("consistency", model.classifier, x, RngStreams(0)).item() >= 0.0


def test_mean_teacher_regularizer_needs_teacher(model):
    x = _make_batch(model)[2]
    with pytest.raises(ContractError, match="needs a teacher"):
        unlabeled_regularizer("mean_teacher", model.classifier, x, RngStreams(0))


def test_mean_teacher_target_is_not_differentiated(model):
    x = _make_batch(model, n=4)[2]
    loss = unlabeled_regularizer("mean_teacher", model.classifier, x, RngStreams(0), model.teacher)
    assert _nonzero_prefixes(loss, model) == {"c"}


def test_pseudo_pair_augment_sizes(model):
    x_u = RngStream(0, "x").uniform((10, 2))
    rng = RngStream(0, "pseudo")
    x, y = pseudo_pair_augment(model.classifier, x_u, 0.0, 8, rng)
    assert len(x) == 0 and len(y) == 0
    x, y = pseudo_pair_augment(model.classifier, x_u, 0.5, 8, rng)
    assert len(x) == 4
    assert np.all((y >= 0) & (y < 3))
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        pseudo_pair_augment(model.classifier, x_u, 1.5, 8, rng)


def test_pseudo_labels_follow_classifier_probabilities(model):
    n = 100_000
    x_u = np.tile(np.array([[0.3, -0.2]]), (n, 1))
    x, y = pseudo_pair_augment(model.classifier, x_u, 1.0, n, RngStream(0, "pseudo"))
    assert len(x) == n
    expected = model.classifier.probabilities(x_u[:1])[0]
    observed = np.bincount(y, minlength=3) / n
    assert np.max(np.abs(observed - expected)) < 0.01


def test_pseudo_rows_come_from_their_own_shuffle(tiny_config, benchmark):
    batch = TrainState.create(tiny_config, benchmark).data.next_batch()
    assert batch.x_p.shape == (tiny_config.game.batch_d, 2)
    assert not np.array_equal(batch.x_p, batch.x_c[: len(batch.x_p)])


def test_train_step_labels_the_pseudo_batch(tiny_config, benchmark, mocker):
    state = TrainState.create(tiny_config, benchmark)
    batch = state.data.next_batch()
    spy = mocker.patch("triplegan.game.training.pseudo_pair_augment", wraps=pseudo_pair_augment)
    train_step(state, batch)
    spy.assert_called_once()
    assert spy.call_args.args[1] is batch.x_p


# ---------------------------------------------------------------------------
# Training runs
# ---------------------------------------------------------------------------


def test_run_training_writes_outputs(tiny_config, tmp_path):
    seen = []
    result = run_training(tiny_config, on_row=seen.append)
    out = tmp_path / "run"
    assert result.iterations == 6
    assert result.out_dir == out
    for name in ("config.ini", "metrics.csv", "last.tgan", "checkpoint_000002.tgan", "checkpoint_000006.tgan"):
        assert (out / name).exists(), name

    header, rows = _metrics_rows(out / "metrics.csv")
    assert header == MetricsRow.csv_header()
    assert [row.iter for row in rows] == [2, 4, 6]
    assert [row.iter for row in seen] == [2, 4, 6]
    assert rows[0].loss_d == 0.0
    assert rows[-1].loss_d > 0.0
    assert all(row.time_ms == 0.0 for row in rows)


def test_echoed_config_reproduces_run(tiny_config, tmp_path):
    run_training(tiny_config)
    echoed = parse_config((tmp_path / "run" / "config.ini").read_text(encoding="utf-8"))
    assert echoed == tiny_config


def test_serial_runs_are_bitwise_identical(tiny_config, tmp_path):
    first = run_training(tiny_config, out_dir=tmp_path / "a")
    second = run_training(tiny_config, out_dir=tmp_path / "b")
    assert first.metrics.read_bytes() == second.metrics.read_bytes()


def test_resume_matches_uninterrupted_run(tiny_config, tmp_path):
    full = run_training(tiny_config, out_dir=tmp_path / "full")
    resumed = run_training(
        tiny_config, resume=tmp_path / "full" / "checkpoint_000004.tgan", out_dir=tmp_path / "resumed"
    )
    assert resumed.iterations == 6

    expected = read_checkpoint(full.checkpoint)
    actual = read_checkpoint(resumed.checkpoint)
    assert expected.keys() == actual.keys()
    for name, value in expected.items():
        assert np.array_equal(actual[name], value), name

    _, full_rows = _metrics_rows(full.metrics)
    _, resumed_rows = _metrics_rows(resumed.metrics)
    assert resumed_rows == full_rows[-1:]


def test_low_data_regime_runs_without_unlabelled_terms(tmp_path, tiny_ini):
    config = parse_config(
        tiny_ini,
        data={"regime": "low_data"},
        game={"regularizer": "none", "pseudo_fraction": 0.0},
        run={"out_dir": str(tmp_path / "low")},
    )
    result = run_training(config)
    _, rows = _metrics_rows(result.metrics)
    assert all(row.r_u == 0.0 and row.alpha_u_eff == 0.0 for row in rows)


def test_classifier_only_run_never_touches_the_game(tmp_path, tiny_ini):
    config = parse_config(tiny_ini, run={"out_dir": str(tmp_path / "c_only"), "pretrain_iters": 6})
    result = run_training(config)
    _, rows = _metrics_rows(result.metrics)
    assert all(row.loss_d == 0.0 and row.loss_g == 0.0 for row in rows)


def test_zero_learning_rates_leave_parameters_untouched(tmp_path, tiny_ini):
    config = parse_config(
        tiny_ini, optim={"c_lr": 0.0, "g_lr": 0.0, "d_lr": 0.0}, run={"out_dir": str(tmp_path / "frozen")}
    )
    state = TrainState.create(config, make_benchmark(config.data))
    before = {name: value.copy() for name, value in state.model.state_arrays().items()}
    train_step(state, state.data.next_batch())
    assert state.iteration == 1
    after = state.model.state_arrays()
    for name, value in before.items():
        assert np.array_equal(after[name], value), name


# ---------------------------------------------------------------------------
# Gradient suite
# ---------------------------------------------------------------------------


def test_gradient_suite_covers_every_loss(tiny_config):
    results = run_gradient_suite(tiny_config, seed=0)
    names = [r.name for r in results]
    assert names == [
        "discriminator_loss",
        "classifier_loss[entropy]",
        "classifier_loss[consistency]",
        "classifier_loss[mean_teacher]",
        "generator_loss[minimax]",
        "generator_loss[nonsaturating]",
    ]
    assert all(r.passed for r in results), results
    assert worst_error(results) < 1e-4
