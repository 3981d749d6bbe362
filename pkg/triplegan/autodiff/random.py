"""Counter-based random streams.

Every consumer (initialisation, data shuffling, input noise, dropout, latent
draws...) owns its own Philox stream derived from ``(seed, stream name)``, so
adding draws to one consumer never shifts the sequence another one sees.
"""

from __future__ import annotations

import zlib
from collections.abc import Iterator
from typing import Any

import numpy as np

from triplegan.core.errors import ContractError

STREAM_NAMES = ("init", "data", "noise", "dropout", "latent", "prior", "pseudo", "augment")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return [int(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    return value


def _from_jsonable(value: Any, template: Any) -> Any:
    if isinstance(template, dict):
        return {k: _from_jsonable(value[k], template[k]) for k in template}
    if isinstance(template, np.ndarray):
        return np.asarray(value, dtype=template.dtype)
    return value


class RngStream:
    """A named Philox stream; identical (seed, name, call sequence) gives identical draws."""

    def __init__(self, seed: int, name: str = "default") -> None:
        self.seed = int(seed)
        self.name = name
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(zlib.crc32(name.encode()),))
        self._bit_generator = np.random.Philox(sequence)
        self._generator = np.random.Generator(self._bit_generator)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, name={self.name!r})"

    def normal(self, shape: tuple[int, ...] | int) -> np.ndarray:
        return self._generator.standard_normal(shape)

    def uniform(self, shape: tuple[int, ...] | int) -> np.ndarray:
        return self._generator.random(shape)

    def integers(self, low: int, high: int, size: int | tuple[int, ...]) -> np.ndarray:
        return self._generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def categorical(self, probs: np.ndarray) -> np.ndarray:
        """One class id per row of ``probs`` by inverse-CDF sampling."""
        probs = np.atleast_2d(probs)
        cdf = np.cumsum(probs, axis=1)
        u = self.uniform(probs.shape[0])[:, None] * cdf[:, -1:]
        return np.minimum((cdf <= u).sum(axis=1), probs.shape[1] - 1)

    def spawn(self, name: str) -> RngStream:
        return RngStream(self.seed, f"{self.name}/{name}")

    def state(self) -> dict[str, Any]:
        return {"seed": self.seed, "name": self.name, "bit_generator": _jsonable(self._bit_generator.state)}

    @classmethod
    def from_state(cls, state: dict[str, Any]) -> RngStream:
        stream = cls(state["seed"], state["name"])
        stream.restore(state)
        return stream

    def restore(self, state: dict[str, Any]) -> None:
        if state["seed"] != self.seed or state["name"] != self.name:
            raise ContractError(
                f"cannot restore stream {state['name']!r}/{state['seed']} into {self.name!r}/{self.seed}"
            )
        template = self._bit_generator.state
        self._bit_generator.state = _from_jsonable(state["bit_generator"], template)


class RngStreams:
    """The fixed set of named streams a training run draws from."""

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self._streams = {name: RngStream(self.seed, name) for name in STREAM_NAMES}

    def __getattr__(self, name: str) -> RngStream:
        streams = self.__dict__.get("_streams", {})
        if name in streams:
            return streams[name]
        raise AttributeError(name)

    def __iter__(self) -> Iterator[RngStream]:
        return iter(self._streams.values())

    def state(self) -> dict[str, Any]:
        return {name: stream.state() for name, stream in self._streams.items()}

    def restore(self, state: dict[str, Any]) -> None:
        for name, stream in self._streams.items():
            stream.restore(state[name])
