"""Index batchers, class-prior draws, input jitter and the background prefetcher."""

from __future__ import annotations

import logging
import queue
import threading
from collections.abc import Callable, Iterator
from typing import Any, Generic, Literal, TypeVar

import numpy as np

from triplegan.autodiff.random import RngStream
from triplegan.core.errors import ConfigError

logger = logging.getLogger(__name__)

T = TypeVar("T")
AugmentPolicy = Literal["none", "jitter"]


class Batcher:
    """Shuffled index batches, reshuffled every epoch from ``(seed, name, epoch)``.

    By default an epoch ends with a short batch when ``m`` does not divide the
    index count. With ``wrap=True`` every batch has exactly ``m`` indices and
    continues into the next epoch's permutation.
    """

    def __init__(
        self,
        indices: np.ndarray,
        m: int,
        seed: int,
        cycle: bool = True,
        name: str = "batcher",
        wrap: bool = False,
    ) -> None:
        if m < 1:
            raise ConfigError(f"batch size must be >= 1, got {m}")
        self.indices = np.asarray(indices, dtype=np.int64)
        if cycle and self.indices.size == 0:
            raise ConfigError(f"batcher {name!r} cycles over an empty index set")
        self.m = m
        self.seed = seed
        self.cycle = cycle
        self.name = name
        self.wrap = wrap
        self.epoch = 0
        self.pos = 0
        self._perm_epoch = -1
        self._perm = self.indices

    def _permutation(self) -> np.ndarray:
        if self._perm_epoch != self.epoch:
            rng = RngStream(self.seed, f"{self.name}/epoch{self.epoch}")
            self._perm = self.indices[rng.permutation(self.indices.size)]
            self._perm_epoch = self.epoch
        return self._perm

    def __iter__(self) -> Iterator[np.ndarray]:
        return self

    def __next__(self) -> np.ndarray:
        n = self.indices.size
        if n == 0 or (not self.cycle and self.epoch > 0):
            raise StopIteration
        parts: list[np.ndarray] = []
        need = self.m
        while need > 0:
            perm = self._permutation()
            take = perm[self.pos : self.pos + need]
            parts.append(take)
            need -= take.size
            self.pos += take.size
            if self.pos >= n:
                self.epoch += 1
                self.pos = 0
                if not self.wrap or not self.cycle:
                    break
        return np.concatenate(parts)

    def state(self) -> dict[str, int]:
        return {"epoch": self.epoch, "pos": self.pos}

    def restore(self, state: dict[str, int]) -> None:
        self.epoch = int(state["epoch"])
        self.pos = int(state["pos"])


def class_prior_sample(
    n_classes: int, n: int, rng: RngStream, prior: np.ndarray | None = None
) -> np.ndarray:
    """Class ids drawn i.i.d. from ``prior`` (uniform when omitted)."""
    if n_classes < 2:
        raise ValueError(f"class prior needs K >= 2, got {n_classes}")
    if prior is None:
        return rng.integers(0, n_classes, n)
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (n_classes,) or np.any(prior < 0) or not np.isclose(prior.sum(), 1.0):
        raise ValueError(f"prior must be a probability vector of length {n_classes}")
    return rng.categorical(np.broadcast_to(prior, (n, n_classes)))


def augment(x: np.ndarray, policy: AugmentPolicy, sigma: float, rng: RngStream) -> np.ndarray:
    """Isotropic Gaussian jitter; ``none`` and ``sigma == 0`` return ``x`` untouched."""
    if sigma < 0:
        raise ValueError(f"jitter sigma must be >= 0, got {sigma}")
    if policy == "none" or sigma == 0:
        return x
    return x + sigma * rng.normal(x.shape)


class Prefetcher(Generic[T]):
    """Runs ``produce`` on a daemon thread, handing results over a bounded queue."""

    _DONE = object()

    def __init__(self, produce: Callable[[], T], depth: int = 4, limit: int | None = None) -> None:
        self._produce = produce
        self._queue: queue.Queue[Any] = queue.Queue(maxsize=depth)
        self._limit = limit
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="triplegan-prefetch", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        produced = 0
        try:
            while not self._stop.is_set() and (self._limit is None or produced < self._limit):
                item = self._produce()
                while not self._stop.is_set():
                    try:
                        self._queue.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                produced += 1
        except BaseException as exc:  # surfaced on the consumer side
            logger.exception("prefetch worker failed")
            self._finish(exc)
            return
        self._finish(self._DONE)

    def _finish(self, item: object) -> None:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return
            except queue.Full:
                continue

    def get(self) -> T:
        item = self._queue.get()
        if item is self._DONE:
            raise StopIteration
        if isinstance(item, BaseException):
            raise item
        return item

    def close(self) -> None:
        self._stop.set()
        while True:
            try:
                self._queue.get_nowait()
            except queue.Empty:
                break
        self._thread.join(timeout=5.0)

    def __enter__(self) -> Prefetcher[T]:
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()
