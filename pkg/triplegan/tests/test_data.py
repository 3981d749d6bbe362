"""Tests for triplegan/data: synthetic datasets, semi-supervised splits and batching."""

from pathlib import Path

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from triplegan.autodiff.random import RngStream
from triplegan.core.errors import ConfigError, DataError, LabelIndexError
from triplegan.core.settings import load_config
from triplegan.data.batching import Batcher, Prefetcher, augment, class_prior_sample
from triplegan.data.splits import make_benchmark, split_semi
from triplegan.data.synthetic import make_mixture, make_moons, make_rings

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


# ---------------------------------------------------------------------------
# Synthetic datasets
# ---------------------------------------------------------------------------


def test_mixture_is_balanced_and_seeded():
    a = make_mixture(4, 25, seed=3)
    b = make_mixture(4, 25, seed=3)
    assert a.features.shape == (100, 2)
    assert np.array_equal(a.class_counts(), [25, 25, 25, 25])
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, make_mixture(4, 25, seed=4).features)


def test_splits_draw_from_independent_streams():
    train = make_mixture(3, 10, seed=0, split="train")
    test = make_mixture(3, 10, seed=0, split="test")
    assert not np.array_equal(train.features, test.features)


def test_zero_sigma_mixture_sits_on_class_means():
    data = make_mixture(5, 4, sigma=0.0)
    means = data.spec.class_means()
    assert np.allclose(data.features, means[data.labels])


def test_wide_mixture_is_rescaled():
    data = make_mixture(4, 3, radius=2.0, sigma=0.0)
    assert np.allclose(np.linalg.norm(data.features, axis=1), 1.0)


def test_mixture_log_density_matches_gaussian():
    data = make_mixture(3, 5, sigma=0.1, seed=2)
    spec = data.spec
    s = spec.sigma * spec.scale
    expected = [
        multivariate_normal(mean=spec.class_means()[y], cov=s * s * np.eye(2)).logpdf(x)
        for x, y in zip(data.features, data.labels, strict=True)
    ]
    assert np.allclose(spec.log_density(data.features, data.labels), expected, atol=1e-10)


def test_log_density_errors():
    data = make_mixture(3, 2, sigma=0.0)
    with pytest.raises(DataError, match="singular"):
        data.spec.log_density(data.features, data.labels)
    noisy = make_mixture(3, 2)
    with pytest.raises(LabelIndexError):
        noisy.spec.log_density(noisy.features[:1], np.array([3]))


def test_moons_and_rings():
    moons = make_moons(50, sigma=0.0)
    assert moons.n_classes == 2
    assert np.abs(moons.features).max() <= 1.0
    rings = make_rings(3, 40, sigma=0.0)
    radii = np.linalg.norm(rings.features, axis=1)
    assert np.allclose(radii, (rings.labels + 1) / 3)


def test_curve_datasets_have_finite_log_density():
    moons = make_moons(20, sigma=0.1)
    assert np.all(np.isfinite(moons.spec.log_density(moons.features, moons.labels)))


def test_single_class_is_rejected():
    with pytest.raises(DataError, match="K >= 2"):
        make_mixture(1, 10)


def test_dataset_csv_header():
    text = make_mixture(2, 1).to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "x0,x1,label"
    assert len(lines) == 3


# ---------------------------------------------------------------------------
# Semi-supervised split and benchmark
# ---------------------------------------------------------------------------


def test_split_semi_is_balanced_and_disjoint():
    data = make_mixture(4, 30, seed=1)
    split = split_semi(data, 3, seed=1)
    assert np.array_equal(np.bincount(data.labels[split.labeled], minlength=4), [3, 3, 3, 3])
    assert not set(split.labeled) & set(split.unlabeled)
    assert len(split.labeled) + len(split.unlabeled) == len(data)


def test_split_semi_low_data_has_no_unlabelled_pool():
    split = split_semi(make_mixture(4, 30), 4, seed=0, regime="low_data")
    assert len(split.labeled) == 16
    assert len(split.unlabeled) == 0


def test_split_semi_rejects_too_many_labels():
    with pytest.raises(DataError, match="exceeds the smallest class"):
        split_semi(make_mixture(2, 3), 4, seed=0)


def test_make_benchmark_sizes(tiny_config):
    benchmark = make_benchmark(tiny_config.data)
    assert len(benchmark.train) == 60
    assert len(benchmark.val) == 30
    assert len(benchmark.test) == 30
    assert len(benchmark.labeled) == 6
    assert len(benchmark.unlabeled) == 54


@pytest.mark.parametrize("name", ["default.ini", "low_data.ini"])
def test_shipped_benchmark_classes_overlap(name):
    cfg = load_config(CONFIG_DIR / name).data
    data = make_mixture(cfg.n_classes, 2500, cfg.radius, cfg.sigma, seed=5)
    scores = np.stack(
        [data.spec.log_density(data.features, np.full(len(data), c)) for c in range(cfg.n_classes)], axis=1
    )
    bayes_error = np.mean(np.argmax(scores, axis=1) != data.labels)
    assert 0.004 < bayes_error < 0.02


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def test_batcher_epoch_covers_every_index_once():
    batcher = Batcher(np.arange(10), 4, seed=0, cycle=False)
    batches = list(batcher)
    assert [len(b) for b in batches] == [4, 4, 2]
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))


def test_wrapping_batcher_keeps_batch_size():
    batcher = Batcher(np.arange(5), 4, seed=0, wrap=True)
    sizes = {len(next(batcher)) for _ in range(6)}
    assert sizes == {4}


def test_batcher_restore_replays_sequence():
    batcher = Batcher(np.arange(7), 3, seed=2, wrap=True)
    next(batcher)
    saved = batcher.state()
    expected = [next(batcher) for _ in range(4)]
    fresh = Batcher(np.arange(7), 3, seed=2, wrap=True)
    fresh.restore(saved)
    for batch in expected:
        assert np.array_equal(next(fresh), batch)


def test_batcher_rejects_bad_configuration():
    with pytest.raises(ConfigError, match="batch size"):
        Batcher(np.arange(3), 0, seed=0)
    with pytest.raises(ConfigError, match="empty index set"):
        Batcher(np.arange(0), 2, seed=0)


def test_class_prior_sample():
    rng = RngStream(0, "prior")
    labels = class_prior_sample(4, 1000, rng)
    assert labels.min() >= 0 and labels.max() < 4
    assert np.all(class_prior_sample(3, 50, rng, prior=np.array([0.0, 1.0, 0.0])) == 1)
    with pytest.raises(ValueError, match="probability vector"):
        class_prior_sample(3, 5, rng, prior=np.array([0.5, 0.6, 0.0]))


def test_uniform_class_prior_frequencies():
    labels = class_prior_sample(8, 100_000, RngStream(0, "prior"))
    frequencies = np.bincount(labels, minlength=8) / len(labels)
    assert np.max(np.abs(frequencies - 1 / 8)) < 0.01


def test_augment_policies():
    x = np.zeros((3, 2))
    rng = RngStream(0, "augment")
    assert augment(x, "none", 0.5, rng) is x
    assert augment(x, "jitter", 0.0, rng) is x
    assert np.any(augment(x, "jitter", 0.1, rng) != 0)
    with pytest.raises(ValueError):
        augment(x, "jitter", -1.0, rng)


# ---------------------------------------------------------------------------
# Prefetcher
# ---------------------------------------------------------------------------


def test_prefetcher_preserves_order_and_stops_at_limit():
    counter = iter(range(100))
    with Prefetcher(lambda: next(counter), depth=2, limit=5) as prefetcher:
        assert [prefetcher.get() for _ in range(5)] == [0, 1, 2, 3, 4]
        with pytest.raises(StopIteration):
            prefetcher.get()


def test_prefetcher_surfaces_worker_errors():
    def explode():
        raise RuntimeError("producer failed")

    with Prefetcher(explode, depth=1) as prefetcher:
        with pytest.raises(RuntimeError, match="producer failed"):
            prefetcher.get()
