import typing as t
from pathlib import Path

import pytest

from mediq.config import RunConfig, load_run_config
from mediq.datastore import Table
from mediq.runner import RunReport, run_end_to_end
from tests.conftest import CONFIG_DIR


@pytest.fixture
def golden_tables(golden_config: RunConfig) -> t.Mapping[str, Table]:
    return {provider.identity: provider.load() for provider in golden_config.providers}


@pytest.fixture
def golden_report(golden_config: RunConfig, golden_tables: t.Mapping[str, Table]) -> RunReport:
    return run_end_to_end(golden_config, golden_tables)


@pytest.fixture
def config_factory(tmp_path: Path) -> t.Callable[..., RunConfig]:
    """Golden config with top level keys replaced, writing into a fresh directory per call."""

    counter = iter(range(1_000))

    def create(**overrides: object) -> RunConfig:
        return load_run_config(CONFIG_DIR / "golden.json", {"out": tmp_path / f"run-{next(counter)}", **overrides})

    return create
