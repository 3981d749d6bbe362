"""CSV dumps: datasets, class-conditioned samples and latent interpolation paths."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from triplegan.autodiff.random import RngStream
from triplegan.data.splits import Benchmark
from triplegan.data.synthetic import Dataset, DatasetSpec
from triplegan.evaluation.generation import Sampler, class_samples, latent_interpolation
from triplegan.models.generator import sample_latent

logger = logging.getLogger(__name__)


def write_csv(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def export_benchmark(benchmark: Benchmark, out_dir: Path) -> list[Path]:
    """train/val/test CSVs plus ``labeled.csv`` with the semi-supervised subset."""
    return [
        write_csv(out_dir / "train.csv", benchmark.train.to_csv()),
        write_csv(out_dir / "labeled.csv", benchmark.labeled.to_csv()),
        write_csv(out_dir / "val.csv", benchmark.val.to_csv()),
        write_csv(out_dir / "test.csv", benchmark.test.to_csv()),
    ]


def generated_dataset(generator: Sampler, spec: DatasetSpec, n_per_class: int, rng: RngStream) -> Dataset:
    features = np.concatenate(
        [class_samples(generator, label, n_per_class, rng) for label in range(generator.n_classes)]
    )
    labels = np.repeat(np.arange(generator.n_classes), n_per_class)
    return Dataset(features=features, labels=labels, split="generated", spec=spec)


def interpolation_csv(generator: Sampler, steps: int, rng: RngStream) -> str:
    """One latent path per class between two random codes: ``label,step,t,x0..``."""
    rows: list[str] = []
    dim: int | None = None
    for label in range(generator.n_classes):
        z0, z1 = sample_latent(2, generator.latent_dim, rng)
        path = latent_interpolation(generator, label, z0, z1, steps)
        dim = path.shape[1]
        for step, (t, x) in enumerate(zip(np.linspace(0.0, 1.0, steps), path, strict=True)):
            rows.append(",".join([str(label), str(step), repr(float(t)), *(repr(float(v)) for v in x)]))
    header = ",".join(["label", "step", "t", *(f"x{i}" for i in range(dim or 0))])
    return "\n".join([header, *rows]) + "\n"
