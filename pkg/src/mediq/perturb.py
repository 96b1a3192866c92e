from __future__ import annotations

import enum
import typing as t
from dataclasses import dataclass, field

import numpy as np

from mediq.abc import MediqError
from mediq.datastore import ColumnKind, Schema, Table


class PerturbError(MediqError):
    pass


class InvalidNoiseSpec(PerturbError):
    pass


class PolicySchemaMismatch(PerturbError):
    pass


class EmptyColumn(PerturbError):
    pass


class NoiseFamily(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class NoiseSpec:
    family: NoiseFamily
    alpha: t.Optional[float] = None
    sigma: t.Optional[float] = None

    def __post_init__(self) -> None:
        if self.family is NoiseFamily.UNIFORM:
            if self.alpha is None or self.sigma is not None:
                msg = "uniform noise takes alpha only"
                raise InvalidNoiseSpec(msg, self)
            if not self.alpha >= 0:
                msg = "alpha must be non-negative"
                raise InvalidNoiseSpec(msg, self)

        else:
            if self.sigma is None or self.alpha is not None:
                msg = "gaussian noise takes sigma only"
                raise InvalidNoiseSpec(msg, self)
            if not self.sigma >= 0:
                msg = "sigma must be non-negative"
                raise InvalidNoiseSpec(msg, self)

    @classmethod
    def uniform(cls, alpha: float) -> NoiseSpec:
        return cls(NoiseFamily.UNIFORM, alpha=float(alpha))

    @classmethod
    def gaussian(cls, sigma: float) -> NoiseSpec:
        return cls(NoiseFamily.GAUSSIAN, sigma=float(sigma))

    @property
    def parameter(self) -> float:
        value = self.alpha if self.family is NoiseFamily.UNIFORM else self.sigma
        assert value is not None
        return value

    def to_json(self) -> dict[str, object]:
        key = "alpha" if self.family is NoiseFamily.UNIFORM else "sigma"
        return {"family": self.family.value, key: self.parameter}


@dataclass(frozen=True)
class PerturbationPolicy:
    """
    Column-wise perturbation rules.

    - noise -- numeric column name to its noise spec
    - suppressed -- direct identifier columns removed from the output
    - clamp -- optional `(low, high)` bounds applied after the noise is added (biases the mean, off by default)
    - round_integers -- round perturbed values to integers for display (off by default)
    """

    noise: t.Mapping[str, NoiseSpec] = field(default_factory=dict)
    suppressed: frozenset[str] = frozenset()
    clamp: t.Mapping[str, tuple[float, float]] = field(default_factory=dict)
    round_integers: bool = False

    def validate(self, schema: Schema) -> None:
        overlap = set(self.noise) & self.suppressed
        if overlap:
            msg = "column can't be both perturbed and suppressed"
            raise PolicySchemaMismatch(msg, sorted(overlap))

        for name in (*self.noise, *self.suppressed, *self.clamp):
            if name not in schema:
                msg = "policy refers to a missing column"
                raise PolicySchemaMismatch(msg, name)

        for name in (*self.noise, *self.clamp):
            if schema.column(name).kind is not ColumnKind.NUMERIC:
                msg = "only numeric columns can be perturbed"
                raise PolicySchemaMismatch(msg, name)

        for name, (low, high) in self.clamp.items():
            if low > high:
                msg = "clamp bounds must satisfy low <= high"
                raise PolicySchemaMismatch(msg, name)

    def restrict(self, schema: Schema) -> PerturbationPolicy:
        """Keep only the rules for columns present in the schema (e.g. after a query projection)."""

        return PerturbationPolicy(
            noise={name: spec for name, spec in self.noise.items() if name in schema},
            suppressed=frozenset(name for name in self.suppressed if name in schema),
            clamp={name: bounds for name, bounds in self.clamp.items() if name in schema},
            round_integers=self.round_integers,
        )


def default_policy(alpha: float = 5.0) -> PerturbationPolicy:
    """Hospital schema default: noisy `age`, suppressed `personid`, everything else untouched."""

    return PerturbationPolicy(noise={"age": NoiseSpec.uniform(alpha)}, suppressed=frozenset({"personid"}))


@dataclass(frozen=True)
class MomentEstimate:
    est_mean: float
    est_variance: float
    sample_count: int


def noise_variance(spec: NoiseSpec) -> float:
    if spec.family is NoiseFamily.UNIFORM:
        return spec.parameter**2 / 3.0

    return spec.parameter**2


def draw_noise(spec: NoiseSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    if spec.parameter == 0.0:
        return np.zeros(size, dtype=np.float64)

    if spec.family is NoiseFamily.UNIFORM:
        return rng.uniform(-spec.parameter, spec.parameter, size=size)

    return rng.normal(0.0, spec.parameter, size=size)


def sample_noise(spec: NoiseSpec, rng: np.random.Generator) -> float:
    return float(draw_noise(spec, rng, 1)[0])


def perturb_table(table: Table, policy: PerturbationPolicy, rng: np.random.Generator) -> Table:
    policy.validate(table.schema)

    result = table
    # schema order keeps the draw sequence independent of the policy mapping order
    for name in table.schema.names:
        spec = policy.noise.get(name)
        if spec is None:
            continue

        values = table.numeric(name) + draw_noise(spec, rng, len(table))

        bounds = policy.clamp.get(name)
        if bounds is not None:
            values = np.clip(values, *bounds)

        if policy.round_integers:
            values = np.rint(values)

        result = result.replace_column(name, [float(v) for v in values])

    return result.drop(policy.suppressed)


def estimate_moments(values: t.Sequence[float], spec: NoiseSpec) -> MomentEstimate:
    """
    Estimate the original column moments from perturbed values.

    The mean is unbiased as the noise is mean-zero; the variance subtracts the known noise variance and is clamped at
    zero. A single value yields a zero variance estimate.
    """

    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        msg = "can't estimate moments of an empty column"
        raise EmptyColumn(msg)

    est_mean = float(np.mean(data))
    if data.size < 2:
        return MomentEstimate(est_mean, 0.0, int(data.size))

    est_variance = max(0.0, float(np.var(data, ddof=1)) - noise_variance(spec))

    return MomentEstimate(est_mean, est_variance, int(data.size))
