from __future__ import annotations

import abc
import typing as t
from dataclasses import dataclass, field

from typing_extensions import override

from mediq.abc import State
from mediq.datastore import QueryError, Table, dump_csv, match_query
from mediq.exception import ProtocolOrderError, SessionFinishedError
from mediq.executor import step
from mediq.keyprotocol import KeySet, generate_key_set, multi_encrypt, unwrap
from mediq.perturb import PerturbationPolicy, perturb_table
from mediq.roles.events import Receive, RoleEvent, RoleOutgoing, Send
from mediq.roles.messages import (
    AckPayload,
    CountPayload,
    QueryPayload,
    decode_blinded,
    encode_bundle,
    encode_key_set,
)
from mediq.transport.envelope import MEDIATOR, Envelope, MessageType, SchemaError

if t.TYPE_CHECKING:
    import numpy as np

    from mediq.abc import Context

ProviderOutcome = t.Sequence[RoleOutgoing]


@dataclass(frozen=True)
class ProviderEnv:
    store: Table
    policy: PerturbationPolicy = field(default_factory=PerturbationPolicy)


class ProviderState(State[RoleEvent, ProviderOutcome, ProviderEnv], metaclass=abc.ABCMeta):
    phase: t.ClassVar[str]

    @override
    def __str__(self) -> str:
        return self.phase

    @override
    def handle(self, income: RoleEvent, context: Context[ProviderState, ProviderEnv]) -> ProviderOutcome:
        if not isinstance(income, Receive):
            raise ProtocolOrderError(self.phase, message=f"unexpected {type(income).__name__}")

        if income.envelope.msg_type is MessageType.ABORT:
            context.set_state(ProviderDone(income.envelope.session_id, aborted=True), final=True)
            return ()

        return self.handle_message(income.envelope, context)

    @abc.abstractmethod
    def handle_message(self, envelope: Envelope, context: Context[ProviderState, ProviderEnv]) -> ProviderOutcome:
        raise NotImplementedError

    def _expect(self, envelope: Envelope, msg_type: MessageType, session_id: t.Optional[str] = None) -> None:
        if envelope.msg_type is not msg_type:
            raise ProtocolOrderError(self.phase, msg_type.value, f"unexpected {envelope.msg_type.value}")

        if session_id is not None and envelope.session_id != session_id:
            raise ProtocolOrderError(self.phase, session_id, f"message for session {envelope.session_id}")


@dataclass(frozen=True)
class ProviderAwaitingQuery(ProviderState):
    phase: t.ClassVar[str] = "AwaitingQuery"

    @override
    def handle_message(self, envelope: Envelope, context: Context[ProviderState, ProviderEnv]) -> ProviderOutcome:
        self._expect(envelope, MessageType.QUERY)
        request = QueryPayload.decode(envelope.payload)

        matched = match_query(context.env.store, request.query)
        if not matched.rows:
            return ()

        if not matched.schema.drop(context.env.policy.suppressed).columns:
            msg = "query releases only suppressed columns"
            raise QueryError(msg, request.query)

        context.set_state(ProviderAcked(envelope.session_id, matched, request.m))

        return [Send(envelope.session_id, MEDIATOR, MessageType.ACK, AckPayload().encode())]


@dataclass(frozen=True)
class ProviderAcked(ProviderState):
    phase: t.ClassVar[str] = "Acked"

    session_id: str
    matched: Table
    m: int

    @override
    def handle_message(self, envelope: Envelope, context: Context[ProviderState, ProviderEnv]) -> ProviderOutcome:
        self._expect(envelope, MessageType.COUNT, self.session_id)
        count = CountPayload.decode(envelope.payload)
        if count.alias is None:
            msg = "provider count needs the session alias"
            raise SchemaError(msg)

        keyset = generate_key_set(self.m, count.alias, context.rng)
        context.set_state(ProviderKeysSent(self.session_id, self.matched, keyset, count.n))

        return [Send(self.session_id, MEDIATOR, MessageType.KEY_SET, encode_key_set(keyset))]


@dataclass(frozen=True)
class ProviderKeysSent(ProviderState):
    phase: t.ClassVar[str] = "KeysSent"

    session_id: str
    matched: Table
    keyset: KeySet = field(repr=False)
    n: int

    @override
    def handle_message(self, envelope: Envelope, context: Context[ProviderState, ProviderEnv]) -> ProviderOutcome:
        self._expect(envelope, MessageType.BLINDED_RESPONSE, self.session_id)
        candidates = unwrap(self.keyset, decode_blinded(envelope.payload))

        perturbed = perturb_table(self.matched, context.env.policy.restrict(self.matched.schema), context.rng)
        bundle = multi_encrypt(dump_csv(perturbed).encode("utf-8"), candidates, context.rng, alias=self.keyset.alias)

        context.set_state(ProviderDone(self.session_id), final=True)

        return [Send(self.session_id, MEDIATOR, MessageType.BUNDLE, encode_bundle(bundle))]


@dataclass(frozen=True)
class ProviderDone(ProviderState):
    phase: t.ClassVar[str] = "Done"

    session_id: str
    aborted: bool = False

    @override
    def handle_message(self, envelope: Envelope, context: Context[ProviderState, ProviderEnv]) -> ProviderOutcome:
        raise SessionFinishedError(self.phase, envelope.msg_type.value)


@dataclass(frozen=True)
class ProviderFailed(ProviderState):
    phase: t.ClassVar[str] = "Failed"

    failed_in: str
    error: Exception = field(compare=False)

    @override
    def handle_message(self, envelope: Envelope, context: Context[ProviderState, ProviderEnv]) -> ProviderOutcome:
        raise SessionFinishedError(self.phase, envelope.msg_type.value)


def provider_fallback(state: ProviderState, err: Exception) -> ProviderState:
    return ProviderFailed(str(state), err)


def step_provider(
    state: ProviderState,
    event: RoleEvent,
    store: Table,
    policy: PerturbationPolicy,
    rng: np.random.Generator,
) -> tuple[ProviderState, ProviderOutcome]:
    next_state, outgoing = step(state, event, rng, ProviderEnv(store, policy))
    assert isinstance(next_state, ProviderState)

    return next_state, outgoing
