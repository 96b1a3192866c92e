import typing as t
from collections import Counter
from dataclasses import replace

import pytest

from mediq.audit import STEP_ORDERING, audit, sensitive_cells
from mediq.config import RunConfig
from mediq.datastore import Table, load_csv, match_query
from mediq.exception import NoProviders, PartialProviderFailure
from mediq.roles.client import ClientAwaitingBundles, ClientAwaitingKeySets, ClientFailed
from mediq.roles.party import RoleSubscriber
from mediq.runner import RESULT_FILE, TRANSCRIPT_FILE, RunReport, create_session, run_end_to_end, simulate
from mediq.transport.envelope import MessageType, Role
from mediq.transport.transcript import Direction, Transcript
from tests.stub.party import AckingMuteParty, WithholdingParty
from tests.stub.subscriber import SubscriberStub

FIRST_OCCURRENCE_ORDER = [
    (Direction.INBOUND, MessageType.QUERY),
    (Direction.OUTBOUND, MessageType.QUERY),
    (Direction.INBOUND, MessageType.ACK),
    (Direction.OUTBOUND, MessageType.COUNT),
    (Direction.INBOUND, MessageType.KEY_SET),
    (Direction.OUTBOUND, MessageType.KEY_SET),
    (Direction.INBOUND, MessageType.BLINDED_RESPONSE),
    (Direction.OUTBOUND, MessageType.BLINDED_RESPONSE),
    (Direction.INBOUND, MessageType.BUNDLE),
    (Direction.OUTBOUND, MessageType.BUNDLE),
]

ZERO_NOISE_POLICY = {"perturb": {"age": {"family": "uniform", "alpha": 0.0}}, "suppress": ["personid"]}


def _first_occurrence(transcript: Transcript) -> list[tuple[Direction, MessageType]]:
    seen: list[tuple[Direction, MessageType]] = []
    for record in transcript:
        key = (record.direction, record.envelope.msg_type)
        if key not in seen:
            seen.append(key)
    return seen


def test_golden_run(golden_report: RunReport, golden_tables: t.Mapping[str, Table]) -> None:
    assert golden_report.ok
    assert golden_report.n == 3
    assert golden_report.result is not None
    assert len(golden_report.result) == 10 + 10 + 25
    assert "personid" not in golden_report.result.schema.names

    assert golden_report.counts == {
        MessageType.QUERY.value: 4,
        MessageType.ACK.value: 3,
        MessageType.COUNT.value: 4,
        MessageType.KEY_SET.value: 6,
        MessageType.BLINDED_RESPONSE.value: 6,
        MessageType.BUNDLE.value: 6,
    }

    verdict = audit(
        golden_report.transcript,
        sensitive=sensitive_cells(golden_tables.values()),
        identities=list(golden_tables),
    )
    assert verdict.passed, verdict.to_json()


def test_golden_message_order(golden_report: RunReport) -> None:
    assert _first_occurrence(golden_report.transcript) == FIRST_OCCURRENCE_ORDER
    assert audit(golden_report.transcript)[STEP_ORDERING].passed


def test_golden_files(golden_report: RunReport, golden_config: RunConfig) -> None:
    assert golden_report.result_path == golden_config.out / RESULT_FILE
    assert golden_report.transcript_path == golden_config.out / TRANSCRIPT_FILE

    assert golden_report.result is not None
    assert load_csv(golden_config.out / RESULT_FILE, golden_report.result.schema) == golden_report.result
    assert Transcript.load(golden_config.out / TRANSCRIPT_FILE).records == golden_report.transcript.records


def test_client_sees_only_aliases(golden_report: RunReport, golden_tables: t.Mapping[str, Table]) -> None:
    client_bound = [
        record.envelope
        for record in golden_report.transcript
        if record.direction is Direction.OUTBOUND and record.envelope.recipient.role is Role.CLIENT
    ]

    assert client_bound
    assert not {env.sender.token for env in client_bound} & set(golden_tables)


def test_run_is_deterministic(config_factory: t.Callable[..., RunConfig]) -> None:
    first, second = config_factory(), config_factory()

    run_end_to_end(first)
    run_end_to_end(second)

    for name in (RESULT_FILE, TRANSCRIPT_FILE):
        assert (first.out / name).read_bytes() == (second.out / name).read_bytes()


def test_seed_changes_the_run(config_factory: t.Callable[..., RunConfig]) -> None:
    first = run_end_to_end(config_factory(seed=1), write=False)
    second = run_end_to_end(config_factory(seed=2), write=False)

    assert first.session_id != second.session_id
    assert first.transcript.dumps() != second.transcript.dumps()


def test_zero_noise_returns_matched_rows(config_factory: t.Callable[..., RunConfig]) -> None:
    config = config_factory(
        policy=ZERO_NOISE_POLICY,
        query={"column": "age", "op": "range", "low": 30, "high": 60},
    )
    tables = {provider.identity: provider.load() for provider in config.providers}

    report = run_end_to_end(config, tables, write=False)

    query = config.query.to_query()
    expected = [row for table in tables.values() for row in match_query(table, query).drop({"personid"}).rows]
    assert report.result is not None
    assert Counter(report.result.rows) == Counter(expected)


def test_projection(config_factory: t.Callable[..., RunConfig]) -> None:
    config = config_factory(query={"column": "diseasename", "op": "any", "projection": ["diseasename", "age"]})

    report = run_end_to_end(config, write=False)

    assert report.result is not None
    assert report.result.schema.names == ("diseasename", "age")
    assert len(report.result) == 45


def test_no_providers(config_factory: t.Callable[..., RunConfig]) -> None:
    config = config_factory(query={"column": "diseasename", "op": "eq", "value": "Dragon pox"})

    report = run_end_to_end(config)

    assert report.n == 0
    assert report.failure is None
    assert not report.ok
    assert report.result is not None
    assert len(report.result) == 0
    assert report.counts == {MessageType.QUERY.value: 4, MessageType.COUNT.value: 1}
    with pytest.raises(NoProviders):
        report.raise_for_failure()


def test_only_matching_providers_answer(
    config_factory: t.Callable[..., RunConfig],
    golden_tables: t.Mapping[str, Table],
) -> None:
    config = config_factory(query={"column": "diseasename", "op": "eq", "value": "Swine flu"})
    tables = {"hospital_a": golden_tables["hospital_a"], "hospital_b": golden_tables["hospital_b"]}

    report = run_end_to_end(config, tables, write=False)

    matching = sum(len(match_query(table, config.query.to_query())) > 0 for table in tables.values())
    assert report.n == matching
    assert report.result is not None
    assert {row[2] for row in report.result.rows} == {"Swine flu"}


def test_partial_provider_failure(golden_config: RunConfig, golden_tables: t.Mapping[str, Table]) -> None:
    session = create_session(golden_config, golden_tables)
    mute = AckingMuteParty(session.providers[1].address)
    providers: list[t.Any] = [session.providers[0], mute, session.providers[2]]
    session = replace(session, providers=providers)

    simulate(golden_config, session)

    assert isinstance(session.client.failure, PartialProviderFailure)
    assert session.client.result is None
    assert isinstance(session.client.state, ClientFailed)
    assert session.client.state.failed_in == ClientAwaitingKeySets.phase


def test_bundle_phase_timeout(golden_config: RunConfig, golden_tables: t.Mapping[str, Table]) -> None:
    session = create_session(golden_config, golden_tables)
    silent = WithholdingParty(session.providers[2], MessageType.BUNDLE)
    providers: list[t.Any] = [session.providers[0], session.providers[1], silent]
    session = replace(session, providers=providers)

    result = simulate(golden_config, session)

    assert isinstance(session.client.failure, PartialProviderFailure)
    assert session.client.result is None
    assert isinstance(session.client.state, ClientFailed)
    assert session.client.state.failed_in == ClientAwaitingBundles.phase
    bundles = [record for record in result.transcript if record.envelope.msg_type is MessageType.BUNDLE]
    assert len(bundles) == 4


def test_subscribers_see_every_role(golden_config: RunConfig, golden_tables: t.Mapping[str, Table]) -> None:
    stub: SubscriberStub[object, object, t.Sequence[object]] = SubscriberStub()
    subscribers: t.Sequence[RoleSubscriber] = [stub]
    session = create_session(golden_config, golden_tables, subscribers)

    simulate(golden_config, session)

    finals = [state for state, name in stub.events if name == "final"]
    assert sum(type(state).__name__ == "ClientDone" for state in finals) == 1
    assert sum(type(state).__name__ == "ProviderDone" for state in finals) == 3
    assert not stub.errors
