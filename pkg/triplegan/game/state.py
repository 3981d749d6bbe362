"""Training state: model, optimisers, counters, RNG streams, data feed and metric accumulation."""

from __future__ import annotations

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict

from triplegan.autodiff.optim import AdamState
from triplegan.autodiff.random import RngStream, RngStreams
from triplegan.cli.checkpoint import bytes_entry, entry_bytes
from triplegan.core.errors import CheckpointError
from triplegan.core.settings import Config, parse_config
from triplegan.data.batching import Batcher, augment, class_prior_sample
from triplegan.data.splits import Benchmark, make_benchmark
from triplegan.game.hyperparams import GameHyperparams
from triplegan.models.generator import sample_latent
from triplegan.models.triple_gan import TripleGanModel, build_model

PRODUCER_STREAMS = ("prior", "latent", "augment")


class Batch(BaseModel):
    """One iteration's worth of data, plus the producer state right after drawing it."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x_d: np.ndarray
    y_d: np.ndarray
    x_c: np.ndarray
    x_p: np.ndarray
    y_g: np.ndarray
    z_g: np.ndarray
    source_state: dict[str, Any]


class TrainData:
    """Draws labelled, classifier-side and generator-side batches for every step.

    In the ``low_data`` regime the classifier-side batch comes from the labelled pool.
    Pseudo-labelled positives for D come from their own shuffle of the same pool,
    never from the rows the classifier sees in that step.
    Producer streams are independent of the model, so batches may be drawn ahead
    of time on another thread.
    """

    def __init__(self, benchmark: Benchmark, hyper: GameHyperparams, config: Config, seed: int) -> None:
        self.benchmark = benchmark
        self.hyper = hyper
        self.latent_dim = config.model.latent_dim
        self.augment_policy = config.data.augment
        self.augment_sigma = config.data.augment_sigma
        self.streams = {name: RngStream(seed, name) for name in PRODUCER_STREAMS}
        split = benchmark.split
        classifier_pool = split.unlabeled if hyper.uses_unlabeled and len(split.unlabeled) else split.labeled
        self.batchers = {
            "labeled": Batcher(split.labeled, hyper.batch_d, seed, name="labeled", wrap=True),
            "classifier": Batcher(classifier_pool, hyper.batch_c, seed, name="classifier", wrap=True),
            "pseudo": Batcher(classifier_pool, hyper.batch_d, seed, name="pseudo", wrap=True),
        }

    def _x(self, indices: np.ndarray) -> np.ndarray:
        x = self.benchmark.train.features[indices]
        return augment(x, self.augment_policy, self.augment_sigma, self.streams["augment"])

    def next_batch(self) -> Batch:
        d_idx = next(self.batchers["labeled"])
        c_idx = next(self.batchers["classifier"])
        p_idx = next(self.batchers["pseudo"])
        train = self.benchmark.train
        x_d = self._x(d_idx)
        x_c = self._x(c_idx)
        x_p = self._x(p_idx)
        y_g = class_prior_sample(train.n_classes, self.hyper.batch_g, self.streams["prior"])
        z_g = sample_latent(self.hyper.batch_g, self.latent_dim, self.streams["latent"])
        return Batch(
            x_d=x_d,
            y_d=train.labels[d_idx],
            x_c=x_c,
            x_p=x_p,
            y_g=y_g,
            z_g=z_g,
            source_state=self.state(),
        )

    def state(self) -> dict[str, Any]:
        return {
            "batchers": {name: b.state() for name, b in self.batchers.items()},
            "streams": {name: s.state() for name, s in self.streams.items()},
        }

    def restore(self, state: dict[str, Any]) -> None:
        for name, batcher in self.batchers.items():
            batcher.restore(state["batchers"][name])
        for name, stream in self.streams.items():
            stream.restore(state["streams"][name])


class StepLosses(BaseModel):
    model_config = ConfigDict(frozen=True)

    loss_d: float = 0.0
    loss_g: float = 0.0
    loss_c_adv: float = 0.0
    r_c: float = 0.0
    r_p: float = 0.0
    r_u: float = 0.0
    alpha_p_eff: float = 0.0
    alpha_u_eff: float = 0.0


class MetricsAccumulator:
    """Running mean of step losses over one metrics interval."""

    def __init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self._sums: dict[str, float] = dict.fromkeys(StepLosses.model_fields, 0.0)
        self.count = 0
        self.elapsed_ms = 0.0

    def add(self, losses: StepLosses, elapsed_ms: float = 0.0) -> None:
        for key, value in losses.model_dump().items():
            self._sums[key] += value
        self.count += 1
        self.elapsed_ms += elapsed_ms

    def mean(self) -> StepLosses:
        if self.count == 0:
            return StepLosses()
        return StepLosses(**{k: v / self.count for k, v in self._sums.items()})

    def mean_time_ms(self) -> float:
        return self.elapsed_ms / self.count if self.count else 0.0


class RunMeta(BaseModel):
    """JSON-serialisable bookkeeping stored alongside the tensors in a checkpoint."""

    iteration: int
    opt_steps: dict[str, int]
    streams: dict[str, Any]
    data: dict[str, Any]


class TrainState:
    def __init__(
        self,
        config: Config,
        model: TripleGanModel,
        hyper: GameHyperparams,
        streams: RngStreams,
        data: TrainData,
    ) -> None:
        self.config = config
        self.model = model
        self.hyper = hyper
        self.streams = streams
        self.data = data
        optim = config.optim
        self.optimizers = {
            "c": AdamState(optim.c_lr, optim.c_beta1, optim.c_beta2, optim.c_eps),
            "g": AdamState(optim.g_lr, optim.g_beta1, optim.g_beta2, optim.g_eps),
            "d": AdamState(optim.d_lr, optim.d_beta1, optim.d_beta2, optim.d_eps),
        }
        modules = {"c": model.classifier, "g": model.generator, "d": model.discriminator}
        for key, opt in self.optimizers.items():
            opt.init_moments(modules[key].parameters())
        self.iteration = 0
        self.data_state: dict[str, Any] = data.state()
        self.accumulator = MetricsAccumulator()

    @classmethod
    def create(cls, config: Config, benchmark: Benchmark) -> TrainState:
        seed = config.data.seed
        streams = RngStreams(seed)
        model = build_model(config, benchmark.train.dim, benchmark.train.n_classes, streams.init)
        hyper = GameHyperparams.from_config(config)
        return cls(config, model, hyper, streams, TrainData(benchmark, hyper, config, seed))

    @classmethod
    def from_entries(cls, entries: dict[str, np.ndarray]) -> TrainState:
        """Rebuild a run from checkpoint entries alone, using the embedded config text."""
        try:
            text = entry_bytes(entries["meta/config"]).decode("utf-8")
        except KeyError as exc:
            raise CheckpointError("checkpoint has no meta/config entry") from exc
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"embedded config is not UTF-8: {exc}") from exc
        config = parse_config(text)
        state = cls.create(config, make_benchmark(config.data))
        state.load_entries(entries)
        return state

    def to_entries(self) -> dict[str, np.ndarray]:
        entries: dict[str, np.ndarray] = {f"model/{k}": v for k, v in self.model.state_arrays().items()}
        for key, opt in self.optimizers.items():
            entries.update({f"adam/{key}/{name}": arr for name, arr in opt.arrays().items()})
        meta = RunMeta(
            iteration=self.iteration,
            opt_steps={k: o.t for k, o in self.optimizers.items()},
            streams=self.streams.state(),
            data=self.data_state,
        )
        entries["meta/iteration"] = np.array([float(self.iteration)])
        entries["meta/state"] = bytes_entry(meta.model_dump_json().encode("utf-8"))
        entries["meta/config"] = bytes_entry(self.config.to_ini().encode("utf-8"))
        return entries

    def load_entries(self, entries: dict[str, np.ndarray]) -> None:
        try:
            meta = RunMeta.model_validate_json(entry_bytes(entries["meta/state"]))
        except KeyError as exc:
            raise CheckpointError("checkpoint has no meta/state entry") from exc
        arrays = {k.removeprefix("model/"): v for k, v in entries.items() if k.startswith("model/")}
        self.model.load_state_arrays(arrays)
        for key, opt in self.optimizers.items():
            prefix = f"adam/{key}/"
            opt.load_arrays(
                {k.removeprefix(prefix): v for k, v in entries.items() if k.startswith(prefix)},
                meta.opt_steps[key],
            )
        self.iteration = meta.iteration
        try:
            self.streams.restore(meta.streams)
            self.data.restore(meta.data)
        except KeyError as exc:
            raise CheckpointError(f"checkpoint has no state for {exc.args[0]!r}") from exc
        self.data_state = meta.data
