"""Mean teacher: an exponential moving average of the classifier weights."""

from __future__ import annotations

from triplegan.core.errors import DimensionError
from triplegan.models.classifier import Classifier


class Teacher:
    def __init__(self, student: Classifier, decay: float = 0.99) -> None:
        if not 0.0 <= decay < 1.0:
            raise ValueError(f"EMA decay must lie in [0, 1), got {decay}")
        self.decay = decay
        self.classifier = student.copy(prefix="t")

    def ema_update(self, student: Classifier, decay: float | None = None) -> None:
        """teacher ← δ·teacher + (1 − δ)·student, parameter by parameter."""
        delta = self.decay if decay is None else decay
        if not 0.0 <= delta < 1.0:
            raise ValueError(f"EMA decay must lie in [0, 1), got {delta}")
        mine = self.classifier.local_parameters()
        theirs = student.local_parameters()
        if mine.keys() != theirs.keys():
            raise DimensionError("teacher and student have different parameter sets")
        for key, param in mine.items():
            source = theirs[key].data
            if source.shape != param.shape:
                raise DimensionError(f"{key}: teacher shape {param.shape} != student shape {source.shape}")
            if delta == 0.0:
                param.data[...] = source
            else:
                param.data += (1.0 - delta) * (source - param.data)
