from __future__ import annotations

import csv
import logging
import typing as t
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from mediq.datastore import Normal, gen_synthetic
from mediq.perturb import NoiseFamily, NoiseSpec, PerturbationPolicy, estimate_moments, perturb_table

if t.TYPE_CHECKING:
    from pathlib import Path

    from mediq.config import StatsConfig

log = logging.getLogger(__name__)

STATS_FILE = "stats.csv"
STATS_HEADER = ("n", "family", "parameter", "mean_error", "variance_error")

COLUMN = "age"


@dataclass(frozen=True)
class ErrorRow:
    n: int
    family: NoiseFamily
    parameter: float
    mean_error: float
    variance_error: float

    def to_csv(self) -> tuple[str, ...]:
        return (
            str(self.n),
            self.family.value,
            repr(self.parameter),
            repr(self.mean_error),
            repr(self.variance_error),
        )


@dataclass(frozen=True)
class _Cell:
    n: int
    spec: NoiseSpec
    seeds: t.Sequence[np.random.SeedSequence]


def measure_once(
    n: int,
    spec: NoiseSpec,
    seed: np.random.SeedSequence,
    mean: float,
    std: float,
) -> tuple[float, float]:
    """
    Absolute mean and variance errors of one perturbed synthetic column.

    Errors are measured against the sample statistics of the original column.
    """

    data_seq, noise_seq = seed.spawn(2)
    table = gen_synthetic(n, int(data_seq.generate_state(1)[0]), {COLUMN: Normal(mean, std)})
    original = table.numeric(COLUMN)

    perturbed = perturb_table(table, PerturbationPolicy(noise={COLUMN: spec}), np.random.default_rng(noise_seq))
    estimate = estimate_moments(perturbed.numeric(COLUMN).tolist(), spec)

    true_variance = float(np.var(original, ddof=1)) if n > 1 else 0.0
    return abs(estimate.est_mean - float(np.mean(original))), abs(estimate.est_variance - true_variance)


def _measure_cell(cell: _Cell, mean: float, std: float) -> ErrorRow:
    errors = np.array([measure_once(cell.n, cell.spec, seed, mean, std) for seed in cell.seeds])
    mean_error, variance_error = errors.mean(axis=0)
    row = ErrorRow(cell.n, cell.spec.family, cell.spec.parameter, float(mean_error), float(variance_error))
    log.debug("stats cell %s", row)
    return row


def stats_experiment(config: StatsConfig) -> t.Sequence[ErrorRow]:
    """
    Average the absolute moment errors over `config.repetitions` runs for every (size, noise) cell.

    Every cell owns seeds spawned from `config.seed`, so the rows don't depend on `config.workers`.
    """

    specs = [model.to_spec() for model in config.noise]
    pairs = [(n, spec) for n in config.sizes for spec in specs]
    cell_seqs = np.random.SeedSequence(config.seed).spawn(len(pairs))
    cells = [_Cell(n, spec, seq.spawn(config.repetitions)) for (n, spec), seq in zip(pairs, cell_seqs)]

    log.info("stats experiment: %d cells x %d repetitions", len(cells), config.repetitions)

    if config.workers == 1:
        return [_measure_cell(cell, config.mean, config.std) for cell in cells]

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(lambda cell: _measure_cell(cell, config.mean, config.std), cells))


def write_stats(rows: t.Iterable[ErrorRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fd:
        writer = csv.writer(fd, lineterminator="\n")
        writer.writerow(STATS_HEADER)
        writer.writerows(row.to_csv() for row in rows)
