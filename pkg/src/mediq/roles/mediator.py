from __future__ import annotations

import typing as t
from dataclasses import dataclass, field, replace

from typing_extensions import override

from mediq.abc import State
from mediq.exception import ProtocolOrderError, UnknownProvider, UnknownSession
from mediq.executor import step
from mediq.roles.events import AckDeadline, Note, Receive, Register, RoleEvent, RoleOutgoing, Send, Timer
from mediq.roles.messages import CountPayload, QueryPayload, payload_alias
from mediq.transport.envelope import Address, Envelope, MessageType, Role

if t.TYPE_CHECKING:
    import numpy as np

    from mediq.abc import Context

DEFAULT_ACK_DEADLINE = 2.0
ALIAS_SIZE = 8

MediatorOutcome = t.Sequence[RoleOutgoing]


@dataclass(frozen=True)
class MediatorEnv:
    ack_deadline: float = DEFAULT_ACK_DEADLINE


@dataclass(frozen=True)
class SessionRecord:
    client: Address
    query: bytes
    acked: tuple[Address, ...] = ()
    counted: bool = False
    aliases: t.Mapping[str, Address] = field(default_factory=dict)
    answered: frozenset[str] = frozenset()

    @property
    def n(self) -> int:
        return len(self.aliases)

    @property
    def closed(self) -> bool:
        """Counted, and every aliased provider sent its bundle or aborted."""
        return self.counted and self.answered == frozenset(self.aliases)

    def alias_of(self, provider: Address) -> t.Optional[str]:
        for alias, owner in self.aliases.items():
            if owner == provider:
                return alias
        return None


@dataclass(frozen=True)
class MediatorState(State[RoleEvent, MediatorOutcome, MediatorEnv]):
    registry: frozenset[Address] = frozenset()
    sessions: t.Mapping[str, SessionRecord] = field(default_factory=dict)
    finished: frozenset[str] = frozenset()
    retired_aliases: frozenset[str] = frozenset()

    @override
    def __str__(self) -> str:
        return f"Relaying(providers={len(self.registry)}, sessions={len(self.sessions)})"

    def session(self, session_id: str) -> SessionRecord:
        record = self.sessions.get(session_id)
        if record is None:
            msg = "session already finished" if session_id in self.finished else "no open session"
            raise UnknownSession(msg, session_id)
        return record

    def with_session(self, session_id: str, record: SessionRecord) -> MediatorState:
        if not record.closed:
            return replace(self, sessions={**self.sessions, session_id: record})

        return self.evict(session_id, record)

    def evict(self, session_id: str, record: SessionRecord) -> MediatorState:
        # retired aliases are never drawn again
        return replace(
            self,
            sessions={key: value for key, value in self.sessions.items() if key != session_id},
            finished=self.finished | {session_id},
            retired_aliases=self.retired_aliases | frozenset(record.aliases),
        )

    def aliases_in_use(self) -> frozenset[str]:
        return self.retired_aliases.union(*(record.aliases for record in self.sessions.values()))

    @override
    def handle(self, income: RoleEvent, context: Context[MediatorState, MediatorEnv]) -> MediatorOutcome:
        if isinstance(income, Register):
            if income.provider.role is not Role.PROVIDER:
                msg = "only providers can be registered"
                raise UnknownProvider(msg, str(income.provider))

            context.set_state(replace(self, registry=self.registry | {income.provider}))
            return ()

        if isinstance(income, AckDeadline):
            return self.__count(income.session_id, context)

        if not isinstance(income, Receive):
            raise ProtocolOrderError(str(self), message=f"unexpected {type(income).__name__}")

        envelope = income.envelope
        if envelope.msg_type is MessageType.QUERY:
            return self.__open(envelope, context)

        if envelope.msg_type is MessageType.ACK:
            return self.__ack(envelope, context)

        if envelope.msg_type is MessageType.COUNT:
            raise ProtocolOrderError(str(self), message="mediator never receives counts")

        outgoing = relay(self, envelope)
        record = self.session(envelope.session_id)

        if envelope.sender.role is Role.PROVIDER and envelope.msg_type in {MessageType.BUNDLE, MessageType.ABORT}:
            alias = record.alias_of(envelope.sender)
            assert alias is not None
            answered = replace(record, answered=record.answered | {alias})
            context.set_state(self.with_session(envelope.session_id, answered))

        elif envelope.msg_type is MessageType.ABORT:
            context.set_state(self.evict(envelope.session_id, record))

        return outgoing

    def __open(self, envelope: Envelope, context: Context[MediatorState, MediatorEnv]) -> MediatorOutcome:
        if envelope.sender.role is not Role.CLIENT:
            raise ProtocolOrderError(str(self), Role.CLIENT.value, "query must come from a client")

        if envelope.session_id in self.sessions or envelope.session_id in self.finished:
            raise ProtocolOrderError(str(self), message=f"session {envelope.session_id} was already opened")

        # validates the payload before it gets broadcast
        QueryPayload.decode(envelope.payload)

        context.set_state(self.with_session(envelope.session_id, SessionRecord(envelope.sender, envelope.payload)))

        outgoing: list[RoleOutgoing] = [
            Send(envelope.session_id, provider, MessageType.QUERY, envelope.payload, sender=envelope.sender)
            for provider in sorted(self.registry)
        ]
        outgoing.append(Timer(context.env.ack_deadline, AckDeadline(envelope.session_id)))

        return outgoing

    def __ack(self, envelope: Envelope, context: Context[MediatorState, MediatorEnv]) -> MediatorOutcome:
        provider = envelope.sender
        if provider not in self.registry:
            msg = "ack from an unregistered party"
            raise UnknownProvider(msg, str(provider))

        if envelope.session_id in self.finished:
            return [Note(f"late ack from {provider.token} ignored, session finished")]

        record = self.session(envelope.session_id)
        if record.counted:
            return [Note(f"late ack from {provider.token} ignored, N already committed")]

        if provider in record.acked:
            return [Note(f"duplicate ack from {provider.token} ignored")]

        context.set_state(self.with_session(envelope.session_id, replace(record, acked=(*record.acked, provider))))

        return ()

    def __count(self, session_id: str, context: Context[MediatorState, MediatorEnv]) -> MediatorOutcome:
        if session_id in self.finished:
            return ()

        record = self.session(session_id)
        if record.counted:
            return ()

        taken = self.aliases_in_use()
        aliases: dict[str, Address] = {}
        for provider in sorted(record.acked):
            alias = context.rng.bytes(ALIAS_SIZE).hex()
            while alias in aliases or alias in taken:
                alias = context.rng.bytes(ALIAS_SIZE).hex()
            aliases[alias] = provider

        context.set_state(self.with_session(session_id, replace(record, counted=True, aliases=aliases)))

        n = len(aliases)
        outgoing: list[RoleOutgoing] = [Send(session_id, record.client, MessageType.COUNT, CountPayload(n).encode())]
        outgoing.extend(
            Send(session_id, provider, MessageType.COUNT, CountPayload(n, alias).encode())
            for alias, provider in aliases.items()
        )

        return outgoing


def relay(state: MediatorState, inbound: Envelope) -> t.Sequence[Send]:
    """
    Forward a key exchange message with an unchanged payload.

    Provider messages go to the session client under the provider alias; client messages go to the provider owning
    the alias in the payload (or to every counted provider for an abort) under the client session address.
    """

    record = state.session(inbound.session_id)
    sender = inbound.sender

    if sender.role is Role.PROVIDER:
        if inbound.msg_type not in {MessageType.KEY_SET, MessageType.BUNDLE, MessageType.ABORT}:
            raise ProtocolOrderError(str(state), message=f"providers don't send {inbound.msg_type.value}")

        alias = record.alias_of(sender)
        if alias is None:
            msg = "provider has no alias in the session"
            raise UnknownProvider(msg, str(sender))

        return [
            Send(inbound.session_id, record.client, inbound.msg_type, inbound.payload, Address(Role.PROVIDER, alias))
        ]

    if sender != record.client:
        raise ProtocolOrderError(str(state), str(record.client), "message from a party outside the session")

    if inbound.msg_type is MessageType.ABORT:
        return [
            Send(inbound.session_id, provider, inbound.msg_type, inbound.payload, record.client)
            for provider in record.aliases.values()
        ]

    if inbound.msg_type is not MessageType.BLINDED_RESPONSE:
        raise ProtocolOrderError(str(state), message=f"clients don't send {inbound.msg_type.value} after a query")

    target_alias = payload_alias(inbound.payload)
    provider = record.aliases.get(target_alias) if target_alias is not None else None
    if provider is None:
        msg = "blinded response for an unknown alias"
        raise UnknownProvider(msg, target_alias)

    return [Send(inbound.session_id, provider, inbound.msg_type, inbound.payload, record.client)]


def step_mediator(
    state: MediatorState,
    event: RoleEvent,
    rng: np.random.Generator,
    env: MediatorEnv,
) -> tuple[MediatorState, MediatorOutcome]:
    next_state, outgoing = step(state, event, rng, env)
    assert isinstance(next_state, MediatorState)

    return next_state, outgoing
