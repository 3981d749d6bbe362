"""Shared pytest fixtures: a tiny configuration and the benchmark it generates."""

import pytest

from triplegan.autodiff.random import RngStream
from triplegan.core.settings import parse_config
from triplegan.data.splits import make_benchmark
from triplegan.models.triple_gan import build_model

TINY_INI = """
[data]
kind = mixture
n_classes = 3
n_per_class = 20
n_val_per_class = 10
n_test_per_class = 10
sigma = 0.05
labels_per_class = 2
seed = 0

[model]
classifier_widths = 8, 8
generator_widths = 8
trunk_widths = 8, 4
latent_dim = 2
input_noise = 0.05
dropout = 0.1

[game]
alpha_p_start = 2
alpha_p_rampup = 2
alpha_u_rampup = 2
ema_decay = 0.9
batch_d = 4
batch_c = 8
batch_g = 8

[run]
iters = 6
pretrain_iters = 2
checkpoint_interval = 2
metrics_interval = 2
serial = true
"""


@pytest.fixture(name="tiny_ini")
def tiny_ini_fixture():
    return TINY_INI


@pytest.fixture(name="tiny_config")
def tiny_config_fixture(tmp_path):
    """Tiny mean-teacher run writing into a temporary directory."""
    return parse_config(TINY_INI, run={"out_dir": str(tmp_path / "run")})


@pytest.fixture(name="tiny_config_path")
def tiny_config_path_fixture(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI, encoding="utf-8")
    return path


@pytest.fixture(name="benchmark")
def benchmark_fixture(tiny_config):
    return make_benchmark(tiny_config.data)


@pytest.fixture(name="model")
def model_fixture(tiny_config):
    return build_model(tiny_config, tiny_config.data.dim, tiny_config.data.n_classes, RngStream(0, "init"))
