import typing as t
from pathlib import Path

import numpy as np
import pytest

from mediq.config import RunConfig, load_run_config
from mediq.datastore import HOSPITAL_SCHEMA, Table, load_csv
from mediq.roles.party import RoleSubscriber
from tests.stub.subscriber import SubscriberStub

ROOT_DIR = Path(__file__).parent.parent
DATA_DIR = ROOT_DIR / "data"
CONFIG_DIR = ROOT_DIR / "configs"


@pytest.fixture
def hospital_a() -> Table:
    return load_csv(DATA_DIR / "hospital_a.csv", HOSPITAL_SCHEMA)


@pytest.fixture
def hospital_b() -> Table:
    return load_csv(DATA_DIR / "hospital_b.csv", HOSPITAL_SCHEMA)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def golden_config(tmp_path: Path) -> RunConfig:
    return load_run_config(CONFIG_DIR / "golden.json", {"out": tmp_path / "golden"})


@pytest.fixture
def subscriber() -> SubscriberStub[object, object, t.Sequence[object]]:
    return SubscriberStub()


@pytest.fixture
def role_subscribers(subscriber: SubscriberStub[object, object, t.Sequence[object]]) -> t.Sequence[RoleSubscriber]:
    return [subscriber]
