from __future__ import annotations

import json
import typing as t
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from typing_extensions import Self

from mediq.abc import MediqError
from mediq.datastore import (
    HOSPITAL_DISTRIBUTIONS,
    HOSPITAL_SCHEMA,
    ColumnDistribution,
    Normal,
    Operator,
    Query,
    Table,
    gen_synthetic,
    load_csv,
)
from mediq.perturb import NoiseFamily, NoiseSpec, PerturbationPolicy
from mediq.roles.client import DEFAULT_M, DEFAULT_PHASE_TIMEOUT
from mediq.roles.mediator import DEFAULT_ACK_DEADLINE
from mediq.transport.simnet import DEFAULT_LATENCY, DEFAULT_STEP_CAP

T = t.TypeVar("T", bound=BaseModel)


class ConfigError(MediqError):
    pass


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NoiseSpecModel(_Model):
    family: NoiseFamily
    alpha: t.Optional[float] = Field(default=None, ge=0.0)
    sigma: t.Optional[float] = Field(default=None, ge=0.0)

    @model_validator(mode="after")
    def check_parameter(self) -> Self:
        if self.family is NoiseFamily.UNIFORM and (self.alpha is None or self.sigma is not None):
            msg = "uniform noise takes alpha only"
            raise ValueError(msg)

        if self.family is NoiseFamily.GAUSSIAN and (self.sigma is None or self.alpha is not None):
            msg = "gaussian noise takes sigma only"
            raise ValueError(msg)

        return self

    def to_spec(self) -> NoiseSpec:
        return NoiseSpec(self.family, alpha=self.alpha, sigma=self.sigma)


class PolicyModel(_Model):
    perturb: dict[str, NoiseSpecModel] = Field(
        default_factory=lambda: {"age": NoiseSpecModel(family=NoiseFamily.UNIFORM, alpha=5.0)},
    )
    suppress: list[str] = Field(default_factory=lambda: ["personid"])
    clamp: dict[str, tuple[float, float]] = Field(default_factory=dict)
    round_integers: bool = False

    def to_policy(self) -> PerturbationPolicy:
        policy = PerturbationPolicy(
            noise={name: spec.to_spec() for name, spec in self.perturb.items()},
            suppressed=frozenset(self.suppress),
            clamp=dict(self.clamp),
            round_integers=self.round_integers,
        )
        policy.validate(HOSPITAL_SCHEMA)
        return policy


class QueryModel(_Model):
    column: str
    op: Operator = Operator.ANY
    value: t.Optional[t.Union[float, str]] = None
    low: t.Optional[float] = None
    high: t.Optional[float] = None
    projection: t.Optional[list[str]] = None

    def to_query(self) -> Query:
        query = Query(
            column=self.column,
            operator=self.op,
            value=self.value,
            low=self.low,
            high=self.high,
            projection=tuple(self.projection) if self.projection is not None else None,
        )
        query.validate(HOSPITAL_SCHEMA)
        return query


class SyntheticModel(_Model):
    rows: int = Field(ge=0)
    seed: int = Field(ge=0)
    age_mean: t.Optional[float] = None
    age_std: float = Field(default=10.0, ge=0.0)

    def distributions(self) -> t.Mapping[str, ColumnDistribution]:
        if self.age_mean is None:
            return HOSPITAL_DISTRIBUTIONS
        return {**HOSPITAL_DISTRIBUTIONS, "age": Normal(self.age_mean, self.age_std, integer=True)}

    def generate(self) -> Table:
        return gen_synthetic(self.rows, self.seed, self.distributions())


class ProviderModel(_Model):
    identity: str = Field(min_length=1)
    csv: t.Optional[Path] = None
    synthetic: t.Optional[SyntheticModel] = None

    @model_validator(mode="after")
    def check_source(self) -> Self:
        if (self.csv is None) == (self.synthetic is None):
            msg = "provider needs exactly one of csv or synthetic"
            raise ValueError(msg)
        return self

    def load(self) -> Table:
        if self.synthetic is not None:
            return self.synthetic.generate()

        assert self.csv is not None
        return load_csv(self.csv)


class TimeoutsModel(_Model):
    ack_deadline: float = Field(default=DEFAULT_ACK_DEADLINE, gt=0.0)
    key_sets: float = Field(default=DEFAULT_PHASE_TIMEOUT, gt=0.0)
    bundles: float = Field(default=DEFAULT_PHASE_TIMEOUT, gt=0.0)
    latency: float = Field(default=DEFAULT_LATENCY, gt=0.0)


class RunConfig(_Model):
    providers: list[ProviderModel] = Field(min_length=1)
    query: QueryModel
    seed: int = Field(ge=0)
    m: int = Field(default=DEFAULT_M, ge=2)
    policy: PolicyModel = Field(default_factory=PolicyModel)
    timeouts: TimeoutsModel = Field(default_factory=TimeoutsModel)
    step_cap: int = Field(default=DEFAULT_STEP_CAP, ge=1)
    out: Path = Path("out")

    @model_validator(mode="after")
    def check_identities(self) -> Self:
        identities = [provider.identity for provider in self.providers]
        if len(set(identities)) != len(identities):
            msg = "provider identities must be unique"
            raise ValueError(msg)
        return self

    @model_validator(mode="after")
    def check_released_columns(self) -> Self:
        projection = self.query.projection if self.query.projection is not None else HOSPITAL_SCHEMA.names
        if not set(projection) - set(self.policy.suppress):
            msg = "query projection holds only suppressed columns"
            raise ValueError(msg)
        return self

    def resolve(self, base: Path) -> RunConfig:
        providers = [
            provider.model_copy(update={"csv": base / provider.csv})
            if provider.csv is not None and not provider.csv.is_absolute()
            else provider
            for provider in self.providers
        ]
        return self.model_copy(update={"providers": providers})


class StatsConfig(_Model):
    sizes: list[int] = Field(default_factory=lambda: [100, 1_000, 10_000], min_length=1)
    noise: list[NoiseSpecModel] = Field(
        default_factory=lambda: [
            NoiseSpecModel(family=NoiseFamily.UNIFORM, alpha=0.0),
            NoiseSpecModel(family=NoiseFamily.UNIFORM, alpha=10.0),
            NoiseSpecModel(family=NoiseFamily.GAUSSIAN, sigma=5.0),
        ],
        min_length=1,
    )
    repetitions: int = Field(default=10, ge=1)
    mean: float = 50.0
    std: float = Field(default=10.0, ge=0.0)
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    out: Path = Path("out")

    @model_validator(mode="after")
    def check_sizes(self) -> Self:
        if any(size < 1 for size in self.sizes):
            msg = "sample sizes must be positive"
            raise ValueError(msg)
        return self


def _load(model: type[T], path: t.Optional[Path], overrides: t.Optional[t.Mapping[str, object]]) -> T:
    data: dict[str, object] = {}

    if path is not None:
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            msg = "can't read config file"
            raise ConfigError(msg, str(path)) from err

        if not isinstance(raw, dict):
            msg = "config must be a JSON object"
            raise ConfigError(msg, str(path))

        data.update(raw)

    data.update({key: value for key, value in (overrides or {}).items() if value is not None})

    try:
        return model.model_validate(data)
    except ValidationError as err:
        msg = "invalid config"
        raise ConfigError(msg, str(err)) from err


def load_run_config(path: Path, overrides: t.Optional[t.Mapping[str, object]] = None) -> RunConfig:
    config = _load(RunConfig, path, overrides)

    try:
        config.query.to_query()
        config.policy.to_policy()
    except MediqError as err:
        msg = "config doesn't fit the hospital schema"
        raise ConfigError(msg, str(err)) from err

    return config.resolve(path.parent)


def load_stats_config(
    path: t.Optional[Path],
    overrides: t.Optional[t.Mapping[str, object]] = None,
) -> StatsConfig:
    return _load(StatsConfig, path, overrides)

