import typing as t

import numpy as np
import pytest

from mediq.datastore import Operator, Query, QueryError, Table
from mediq.exception import ProtocolOrderError
from mediq.keyprotocol import TamperedResponse, blind, generate_client_keypair, select_index
from mediq.perturb import PerturbationPolicy, default_policy
from mediq.roles.events import Receive, Send
from mediq.roles.messages import (
    AbortPayload,
    CountPayload,
    QueryPayload,
    decode_bundle,
    decode_key_set,
    encode_blinded,
)
from mediq.roles.party import RoleSubscriber, create_provider_party
from mediq.roles.provider import (
    ProviderAcked,
    ProviderAwaitingQuery,
    ProviderDone,
    ProviderEnv,
    ProviderFailed,
    ProviderKeysSent,
    ProviderState,
    step_provider,
)
from mediq.transport.envelope import MEDIATOR, Address, Envelope, MessageType, Role, SchemaError

SESSION = "5e55"
ALIAS = "a7f3c0de11223344"
CLIENT = Address(Role.CLIENT, SESSION)
HOSPITAL_A = Address(Role.PROVIDER, "hospital_a")


def _receive(msg_type: MessageType, payload: bytes, sender: Address = CLIENT, seq: int = 0) -> Receive:
    return Receive(Envelope(SESSION, sender, HOSPITAL_A, msg_type, seq, payload))


def _query(value: str, m: int = 4) -> Receive:
    return _receive(MessageType.QUERY, QueryPayload(Query("diseasename", Operator.EQ, value), m).encode())


def _count(n: int = 1, alias: t.Optional[str] = ALIAS) -> Receive:
    return _receive(MessageType.COUNT, CountPayload(n, alias).encode(), sender=MEDIATOR)


@pytest.fixture
def policy() -> PerturbationPolicy:
    return default_policy(alpha=5.0)


def _run(
    state: ProviderState,
    events: t.Sequence[Receive],
    store: Table,
    policy: PerturbationPolicy,
    rng: np.random.Generator,
) -> tuple[ProviderState, t.Sequence[object]]:
    outgoing: t.Sequence[object] = ()
    for event in events:
        state, outgoing = step_provider(state, event, store, policy, rng)
    return state, outgoing


def test_matching_query_acks(hospital_a: Table, policy: PerturbationPolicy, rng: np.random.Generator) -> None:
    state, outgoing = step_provider(ProviderAwaitingQuery(), _query("Swine flu"), hospital_a, policy, rng)

    assert isinstance(state, ProviderAcked)
    assert [row[1] for row in state.matched.rows] == ["p1"]
    assert state.m == 4
    assert outgoing == [Send(SESSION, MEDIATOR, MessageType.ACK, b"{}")]


def test_no_match_stays_silent(hospital_a: Table, policy: PerturbationPolicy, rng: np.random.Generator) -> None:
    state, outgoing = step_provider(ProviderAwaitingQuery(), _query("Malaria"), hospital_a, policy, rng)

    assert state == ProviderAwaitingQuery()
    assert outgoing == ()


def test_count_sends_key_set(hospital_a: Table, policy: PerturbationPolicy, rng: np.random.Generator) -> None:
    state, outgoing = _run(ProviderAwaitingQuery(), [_query("Swine flu"), _count(3)], hospital_a, policy, rng)

    assert isinstance(state, ProviderKeysSent)
    assert state.n == 3
    (send,) = outgoing
    assert isinstance(send, Send)
    assert send.msg_type is MessageType.KEY_SET
    keyset = decode_key_set(send.payload)
    assert keyset.alias == ALIAS
    assert keyset.m == 4


def test_count_without_alias_rejected(hospital_a: Table, policy: PerturbationPolicy, rng: np.random.Generator) -> None:
    with pytest.raises(SchemaError):
        _run(ProviderAwaitingQuery(), [_query("Swine flu"), _count(alias=None)], hospital_a, policy, rng)


def test_blinded_response_sends_bundle(
    hospital_a: Table,
    policy: PerturbationPolicy,
    rng: np.random.Generator,
) -> None:
    state, _ = _run(ProviderAwaitingQuery(), [_query("Swine flu"), _count()], hospital_a, policy, rng)
    assert isinstance(state, ProviderKeysSent)

    keypair = generate_client_keypair(rng)
    blinded = blind(state.keyset, select_index(state.keyset, rng), keypair.public, rng)

    state, outgoing = step_provider(
        state,
        _receive(MessageType.BLINDED_RESPONSE, encode_blinded(blinded)),
        hospital_a,
        policy,
        rng,
    )

    assert state == ProviderDone(SESSION)
    (send,) = outgoing
    assert isinstance(send, Send)
    assert send.msg_type is MessageType.BUNDLE
    bundle = decode_bundle(send.payload)
    assert bundle.alias == ALIAS
    assert len(bundle.payloads) == 4


def test_tampered_blinded_response(hospital_a: Table, policy: PerturbationPolicy, rng: np.random.Generator) -> None:
    state, _ = _run(ProviderAwaitingQuery(), [_query("Swine flu"), _count()], hospital_a, policy, rng)
    assert isinstance(state, ProviderKeysSent)
    keypair = generate_client_keypair(rng)
    blinded = blind(state.keyset, select_index(state.keyset, rng), keypair.public, rng)
    payload = bytearray(encode_blinded(blinded))
    # flip a byte inside the first base64 slot
    position = payload.index(b'"slots":["') + 12
    payload[position] = ord("A") if payload[position] != ord("A") else ord("B")

    with pytest.raises(TamperedResponse):
        step_provider(state, _receive(MessageType.BLINDED_RESPONSE, bytes(payload)), hospital_a, policy, rng)


def test_abort_finishes(hospital_a: Table, policy: PerturbationPolicy, rng: np.random.Generator) -> None:
    state, outgoing = _run(
        ProviderAwaitingQuery(),
        [_query("Swine flu"), _receive(MessageType.ABORT, AbortPayload("client gave up").encode())],
        hospital_a,
        policy,
        rng,
    )

    assert state == ProviderDone(SESSION, aborted=True)
    assert outgoing == ()


def test_out_of_order_message(hospital_a: Table, policy: PerturbationPolicy, rng: np.random.Generator) -> None:
    with pytest.raises(ProtocolOrderError):
        step_provider(ProviderAwaitingQuery(), _count(), hospital_a, policy, rng)


def test_party_failure_sends_abort(
    hospital_a: Table,
    policy: PerturbationPolicy,
    role_subscribers: t.Sequence[RoleSubscriber],
) -> None:
    env = ProviderEnv(hospital_a, policy)
    party = create_provider_party(HOSPITAL_A, env, np.random.default_rng(0), role_subscribers)
    party.handle(_query("Swine flu"), 0.0)
    party.handle(_count(), 0.1)

    empty = b'{"alias":"' + ALIAS.encode() + b'","slots":[]}'
    outgoing = party.handle(_receive(MessageType.BLINDED_RESPONSE, empty), 0.2)

    assert isinstance(party.state, ProviderFailed)
    assert party.state.failed_in == ProviderKeysSent.phase
    assert party.machine.is_finished
    (abort,) = outgoing
    assert isinstance(abort, Envelope)
    assert abort.msg_type is MessageType.ABORT
    assert abort.recipient == MEDIATOR
    assert AbortPayload.decode(abort.payload).reason == "MalformedCandidate"
    assert party.handle(_query("Swine flu"), 0.3) == ()


def test_suppressed_only_projection_rejected(
    hospital_a: Table,
    policy: PerturbationPolicy,
    rng: np.random.Generator,
) -> None:
    query = Query("diseasename", Operator.ANY, projection=("personid",))
    event = _receive(MessageType.QUERY, QueryPayload(query, 4).encode())

    with pytest.raises(QueryError):
        step_provider(ProviderAwaitingQuery(), event, hospital_a, policy, rng)
