"""Tests for triplegan/autodiff: tensors, fused ops, random streams, Adam and grad_check."""

import numpy as np
import pytest

from triplegan.autodiff.functional import (
    bce_logit,
    concat_cols,
    cross_entropy,
    dropout,
    gaussian_noise,
    log_softmax_rows,
    one_hot,
    pick,
    softmax_rows,
    take_rows,
)
from triplegan.autodiff.gradcheck import grad_check
from triplegan.autodiff.optim import AdamState, adam_step
from triplegan.autodiff.random import RngStream, RngStreams
from triplegan.autodiff.tensor import Graph, Parameter, Tensor, grad, matmul, reshape, tanh
from triplegan.core.errors import ContractError, DimensionError, LabelIndexError, NumericError


def _param(shape, seed=0, name="w"):
    return Parameter(RngStream(seed, name).normal(shape), name)


# ---------------------------------------------------------------------------
# Tensor primitives and backward
# ---------------------------------------------------------------------------


def test_matmul_matches_triple_loop():
    rng = RngStream(1, "matmul")
    a, b = rng.normal((3, 4)), rng.normal((4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    assert np.max(np.abs(matmul(Tensor(a), Tensor(b)).data - expected)) < 1e-12


def test_matmul_shape_mismatch_raises():
    with pytest.raises(DimensionError, match="do not agree"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_shared_node_gradients_accumulate():
    x = Parameter(np.array([1.5, -2.0]), "x")
    loss = (x * x + x).sum()
    assert np.allclose(grad(loss, [x])[x], 2 * x.data + 1)


def test_broadcast_add_gradient_sums_over_rows():
    x = Parameter(np.ones((4, 3)), "x")
    b = Parameter(np.zeros(3), "b")
    grads = grad((x + b).sum(), [x, b])
    assert np.array_equal(grads[b], np.full(3, 4.0))
    assert np.array_equal(grads[x], np.ones((4, 3)))


def test_untouched_parameter_gets_zero_gradient():
    used, unused = _param((2,), name="used"), _param((3,), name="unused")
    grads = grad(used.sum(), [used, unused])
    assert np.array_equal(grads[unused], np.zeros(3))


def test_backward_requires_scalar_loss():
    x = _param((2, 2))
    with pytest.raises(ContractError, match="scalar"):
        grad(x * 2.0)


def test_graph_orders_inputs_before_consumers():
    x = _param((2,))
    y = tanh(x)
    z = y.sum()
    graph = Graph(z)
    order = [id(n) for n in graph.nodes]
    assert order.index(id(x)) < order.index(id(y)) < order.index(id(z))
    assert len(graph) == 3


def test_reshape_rejects_size_change():
    with pytest.raises(DimensionError):
        reshape(Tensor(np.ones(6)), (4, 2))


def test_tensor_dtype_is_preserved_through_ops():
    x = Tensor(np.ones((2, 2)), dtype="f32")
    assert (x * 2.0 + 1.0).dtype == "f32"


# ---------------------------------------------------------------------------
# Fused row-wise ops and losses
# ---------------------------------------------------------------------------


def test_softmax_rows_stable_for_huge_logits():
    logits = Tensor(np.array([[1e4, 0.0, -1e4], [5.0, 5.0, 5.0]]))
    probs = softmax_rows(logits).data
    assert np.all(np.isfinite(probs))
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert np.allclose(probs[1], 1.0 / 3.0)
    assert np.all(np.isfinite(log_softmax_rows(logits).data))


def test_softmax_rejects_single_column_and_non_finite():
    with pytest.raises(DimensionError, match="K >= 2"):
        softmax_rows(Tensor(np.ones((3, 1))))
    with pytest.raises(NumericError):
        softmax_rows(Tensor(np.array([[np.nan, 0.0]])))


def test_cross_entropy_matches_direct_formula():
    rng = RngStream(2, "ce")
    logits, labels = rng.normal((5, 3)), np.array([0, 2, 1, 1, 0])
    expected = 0.0
    for row, y in zip(logits, labels, strict=True):
        expected -= row[y] - np.log(np.sum(np.exp(row)))
    assert abs(cross_entropy(Tensor(logits), labels).item() - expected / 5) < 1e-12


def test_bce_logit_finite_at_extremes():
    logits = Tensor(np.array([1e4, -1e4]))
    assert bce_logit(logits, np.array([1.0, 0.0])).item() == pytest.approx(0.0, abs=1e-12)
    assert bce_logit(logits, np.array([0.0, 1.0])).item() == pytest.approx(1e4)


def test_bce_logit_matches_naive_formula():
    v = np.array([-1.0, 0.3, 2.0])
    t = np.array([1.0, 0.0, 1.0])
    s = 1.0 / (1.0 + np.exp(-v))
    naive = -np.mean(t * np.log(s) + (1 - t) * np.log(1 - s))
    assert abs(bce_logit(Tensor(v), t).item() - naive) < 1e-12


def test_pick_rejects_out_of_range_labels():
    with pytest.raises(LabelIndexError, match=r"\[0, 3\)"):
        pick(Tensor(np.zeros((2, 3))), np.array([0, 3]))


def test_take_rows_scatters_gradient():
    table = Parameter(np.zeros((3, 2)), "E")
    loss = take_rows(table, np.array([1, 1, 2])).sum()
    assert np.array_equal(grad(loss, [table])[table], np.array([[0, 0], [2, 2], [1, 1]], dtype=float))


def test_one_hot_and_concat():
    h = concat_cols([one_hot(np.array([2, 0]), 3), Tensor(np.array([[5.0], [6.0]]))])
    assert np.array_equal(h.data, np.array([[0, 0, 1, 5], [1, 0, 0, 6]], dtype=float))


def test_stochastic_layers_are_identity_in_eval_mode():
    x = Tensor(np.ones((4, 3)))
    rng = RngStream(0, "noise")
    assert gaussian_noise(x, 0.5, rng, train=False) is x
    assert dropout(x, 0.5, rng, train=False) is x
    with pytest.raises(ValueError, match=r"\[0, 1\)"):
        dropout(x, 1.0, rng, train=True)


def test_dropout_is_inverted():
    x = Tensor(np.ones((2000, 5)))
    kept = dropout(x, 0.25, RngStream(0, "dropout"), train=True).data
    assert set(np.unique(kept)) <= {0.0, 1.0 / 0.75}
    assert kept.mean() == pytest.approx(1.0, abs=0.05)


def test_dropout_keeps_the_expected_fraction():
    x = Tensor(np.ones(1_000_000))
    kept = dropout(x, 0.5, RngStream(0, "dropout"), train=True).data
    assert abs(np.mean(kept != 0.0) - 0.5) < 0.002


# ---------------------------------------------------------------------------
# grad_check
# ---------------------------------------------------------------------------


def test_grad_check_passes_on_composite_loss():
    w0, w1 = _param((3, 4), name="w0"), _param((4, 3), name="w1")
    x = RngStream(3, "x").normal((5, 3))
    labels = np.array([0, 1, 2, 0, 1])

    def build():
        h = tanh(matmul(Tensor(x), w0))
        return cross_entropy(matmul(h, w1), labels) + bce_logit(matmul(h, w1).sum(axis=1), 1.0)

    assert grad_check(build, {"w0": w0, "w1": w1}) < 1e-4


def test_grad_check_rejects_f32_parameters():
    w = Parameter(np.ones(2), "w", dtype="f32")
    with pytest.raises(ContractError, match="f64"):
        grad_check(lambda: w.sum(), {"w": w})


def test_grad_check_rejects_nondeterministic_builder():
    w = _param((2,))
    rng = RngStream(0, "jitter")
    with pytest.raises(ContractError, match="deterministic"):
        grad_check(lambda: (w * Tensor(rng.normal(2))).sum(), {"w": w})


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


def test_streams_are_reproducible_and_independent():
    a, b = RngStream(7, "latent"), RngStream(7, "latent")
    assert np.array_equal(a.normal(5), b.normal(5))
    streams_1, streams_2 = RngStreams(7), RngStreams(7)
    streams_1.noise.normal(100)
    assert np.array_equal(streams_1.latent.normal(3), streams_2.latent.normal(3))
    assert not np.array_equal(RngStream(7, "noise").normal(3), RngStream(7, "latent").normal(3))


def test_stream_state_restore_replays_draws():
    stream = RngStream(3, "data")
    stream.uniform(10)
    saved = stream.state()
    first = stream.normal(4)
    fresh = RngStream.from_state(saved)
    assert np.array_equal(fresh.normal(4), first)


def test_restore_into_wrong_stream_fails():
    with pytest.raises(ContractError, match="cannot restore"):
        RngStream(1, "a").restore(RngStream(1, "b").state())


def test_categorical_respects_one_hot_rows():
    probs = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.array_equal(RngStream(0, "pseudo").categorical(probs), [1, 0, 2])


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def test_adam_first_step_moves_by_learning_rate():
    w = Parameter(np.array([1.0, -1.0]), "w")
    state = AdamState(lr=0.1, beta1=0.5, beta2=0.999, eps=1e-12)
    adam_step({"w": w}, {"w": np.array([2.0, -0.5])}, state)
    assert np.allclose(w.data, [0.9, -0.9])
    assert state.t == 1


def test_adam_missing_gradient_counts_as_zero():
    w = Parameter(np.array([3.0]), "w")
    adam_step({"w": w}, {}, AdamState(lr=0.1))
    assert w.data[0] == 3.0


def test_adam_rejects_gradient_shape_mismatch():
    w = Parameter(np.zeros(3), "w")
    with pytest.raises(DimensionError, match="gradient for w"):
        adam_step({"w": w}, {"w": np.zeros(2)}, AdamState())


def test_adam_moments_round_trip_through_arrays():
    w = Parameter(np.zeros(2), "w")
    state = AdamState(lr=0.01)
    adam_step({"w": w}, {"w": np.ones(2)}, state)
    restored = AdamState(lr=0.01)
    restored.load_arrays(state.arrays(), state.t)
    assert restored.t == 1
    assert np.array_equal(restored.m["w"], state.m["w"])
    assert np.array_equal(restored.v["w"], state.v["w"])


def test_adam_minimises_a_quadratic():
    w = Parameter(np.array([0.0]), "w")
    state = AdamState(lr=0.01)
    steps = 5000
    for step in range(steps):
        loss = ((w - 2.0) * (w - 2.0)).sum()
        adam_step({"w": w}, {"w": grad(loss, [w])[w]}, state, lr_scale=1.0 - step / steps)
    assert abs(w.data[0] - 2.0) < 1e-3
