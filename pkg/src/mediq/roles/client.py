from __future__ import annotations

import abc
import typing as t
from dataclasses import dataclass, field, replace

from typing_extensions import override

from mediq.abc import State
from mediq.datastore import HOSPITAL_SCHEMA, Schema, Table, read_result_csv
from mediq.exception import (
    DecryptFailure,
    PartialProviderFailure,
    ProtocolError,
    ProtocolOrderError,
    SessionFinishedError,
)
from mediq.executor import step
from mediq.keyprotocol import (
    AliasMismatch,
    ClientKeypair,
    EncryptedBundle,
    KeySet,
    MultipleDecryptable,
    NoDecryptableEntry,
    Selection,
    blind,
    generate_client_keypair,
    open_bundle,
    select_index,
)
from mediq.roles.consolidate import consolidate
from mediq.roles.events import PhaseTimeout, Receive, RoleEvent, RoleOutgoing, Send, Start, Timer
from mediq.roles.messages import (
    AbortPayload,
    CountPayload,
    QueryPayload,
    decode_bundle,
    decode_key_set,
    encode_blinded,
)
from mediq.transport.envelope import MEDIATOR, Address, Envelope, MessageType, Role, SchemaError

if t.TYPE_CHECKING:
    import numpy as np

    from mediq.abc import Context

DEFAULT_M = 8
DEFAULT_PHASE_TIMEOUT = 5.0

ClientOutcome = t.Sequence[RoleOutgoing]


@dataclass(frozen=True)
class ClientEnv:
    session_id: str
    m: int = DEFAULT_M
    key_timeout: float = DEFAULT_PHASE_TIMEOUT
    bundle_timeout: float = DEFAULT_PHASE_TIMEOUT
    schema: Schema = HOSPITAL_SCHEMA

    @property
    def address(self) -> Address:
        return Address(Role.CLIENT, self.session_id)


class ClientState(State[RoleEvent, ClientOutcome, ClientEnv], metaclass=abc.ABCMeta):
    phase: t.ClassVar[str]

    @override
    def __str__(self) -> str:
        return self.phase

    @override
    def handle(self, income: RoleEvent, context: Context[ClientState, ClientEnv]) -> ClientOutcome:
        if isinstance(income, PhaseTimeout):
            if income.session_id != context.env.session_id or income.phase != self.phase:
                # the phase already completed
                return ()

            msg = "acknowledged providers didn't complete the phase in time"
            raise PartialProviderFailure(msg, income.phase)

        if isinstance(income, Receive) and income.envelope.msg_type is MessageType.ABORT:
            reason = AbortPayload.decode(income.envelope.payload).reason
            msg = "provider aborted the session"
            raise PartialProviderFailure(msg, income.envelope.sender.token, reason)

        return self.handle_event(income, context)

    @abc.abstractmethod
    def handle_event(self, income: RoleEvent, context: Context[ClientState, ClientEnv]) -> ClientOutcome:
        raise NotImplementedError

    def _expect(self, income: RoleEvent, msg_type: MessageType) -> Envelope:
        if not isinstance(income, Receive) or income.envelope.msg_type is not msg_type:
            raise ProtocolOrderError(self.phase, msg_type.value, f"unexpected {_describe(income)}")

        return income.envelope


def _describe(income: object) -> str:
    if isinstance(income, Receive):
        return income.envelope.msg_type.value
    return type(income).__name__


@dataclass(frozen=True)
class ClientIdle(ClientState):
    phase: t.ClassVar[str] = "Idle"

    @override
    def handle_event(self, income: RoleEvent, context: Context[ClientState, ClientEnv]) -> ClientOutcome:
        if not isinstance(income, Start):
            raise ProtocolOrderError(self.phase, Start.__name__, f"unexpected {_describe(income)}")

        env = context.env
        income.query.validate(env.schema)
        keypair = generate_client_keypair(context.rng)

        context.set_state(ClientAwaitingCount(keypair))

        return [Send(env.session_id, MEDIATOR, MessageType.QUERY, QueryPayload(income.query, env.m).encode())]


@dataclass(frozen=True)
class ClientAwaitingCount(ClientState):
    phase: t.ClassVar[str] = "AwaitingCount"

    keypair: ClientKeypair

    @override
    def handle_event(self, income: RoleEvent, context: Context[ClientState, ClientEnv]) -> ClientOutcome:
        count = CountPayload.decode(self._expect(income, MessageType.COUNT).payload)
        if count.n < 0:
            msg = "negative provider count"
            raise SchemaError(msg, count.n)

        if count.n == 0:
            context.set_state(ClientDone(0, consolidate([], context.rng)), final=True)
            return ()

        context.set_state(ClientAwaitingKeySets(self.keypair, count.n))

        return [Timer(context.env.key_timeout, PhaseTimeout(context.env.session_id, ClientAwaitingKeySets.phase))]


@dataclass(frozen=True)
class ClientAwaitingKeySets(ClientState):
    phase: t.ClassVar[str] = "AwaitingKeySets"

    keypair: ClientKeypair
    n: int
    keysets: t.Mapping[str, KeySet] = field(default_factory=dict)

    @override
    def handle_event(self, income: RoleEvent, context: Context[ClientState, ClientEnv]) -> ClientOutcome:
        envelope = self._expect(income, MessageType.KEY_SET)
        alias = envelope.sender.token
        keyset = decode_key_set(envelope.payload)

        if keyset.alias != alias:
            raise AliasMismatch(keyset.alias, alias)

        if alias in self.keysets:
            raise ProtocolOrderError(self.phase, message=f"second key set from {alias}")

        if keyset.m != context.env.m:
            msg = "key set size differs from the session key set size"
            raise ProtocolError(msg, alias, keyset.m, context.env.m)

        keysets = {**self.keysets, alias: keyset}
        if len(keysets) < self.n:
            context.set_state(replace(self, keysets=keysets))
            return ()

        env = context.env
        selections: dict[str, Selection] = {}
        outgoing: list[RoleOutgoing] = []

        for name in sorted(keysets):
            selection = select_index(keysets[name], context.rng)
            blinded = blind(keysets[name], selection, self.keypair.public, context.rng)
            selections[name] = selection
            outgoing.append(Send(env.session_id, MEDIATOR, MessageType.BLINDED_RESPONSE, encode_blinded(blinded)))

        context.set_state(ClientAwaitingBundles(self.keypair, self.n, selections))
        outgoing.append(Timer(env.bundle_timeout, PhaseTimeout(env.session_id, ClientAwaitingBundles.phase)))

        return outgoing


@dataclass(frozen=True)
class ClientAwaitingBundles(ClientState):
    phase: t.ClassVar[str] = "AwaitingBundles"

    keypair: ClientKeypair
    n: int
    selections: t.Mapping[str, Selection]
    bundles: t.Mapping[str, EncryptedBundle] = field(default_factory=dict)

    @override
    def handle_event(self, income: RoleEvent, context: Context[ClientState, ClientEnv]) -> ClientOutcome:
        envelope = self._expect(income, MessageType.BUNDLE)
        alias = envelope.sender.token
        bundle = decode_bundle(envelope.payload)

        if alias not in self.selections:
            raise ProtocolOrderError(self.phase, sorted(self.selections), f"bundle from unknown alias {alias}")

        if bundle.alias != alias:
            raise AliasMismatch(bundle.alias, alias)

        if alias in self.bundles:
            raise ProtocolOrderError(self.phase, message=f"second bundle from {alias}")

        bundles = {**self.bundles, alias: bundle}
        if len(bundles) < self.n:
            context.set_state(replace(self, bundles=bundles))
            return ()

        tables: list[Table] = []
        for name in sorted(bundles):
            try:
                payload = open_bundle(bundles[name], self.keypair)
            except (NoDecryptableEntry, MultipleDecryptable) as err:
                msg = "can't open the provider bundle"
                raise DecryptFailure(msg, name) from err

            tables.append(read_result_csv(payload, context.env.schema))

        context.set_state(ClientDone(self.n, consolidate(tables, context.rng)), final=True)

        return ()


@dataclass(frozen=True)
class ClientDone(ClientState):
    phase: t.ClassVar[str] = "Done"

    n: int
    result: Table

    @override
    def handle_event(self, income: RoleEvent, context: Context[ClientState, ClientEnv]) -> ClientOutcome:
        raise SessionFinishedError(self.phase, _describe(income))


@dataclass(frozen=True)
class ClientFailed(ClientState):
    phase: t.ClassVar[str] = "Failed"

    failed_in: str
    error: Exception = field(compare=False)

    @override
    def handle_event(self, income: RoleEvent, context: Context[ClientState, ClientEnv]) -> ClientOutcome:
        raise SessionFinishedError(self.phase, _describe(income))


def client_fallback(state: ClientState, err: Exception) -> ClientState:
    return ClientFailed(str(state), err)


def step_client(
    state: ClientState,
    event: RoleEvent,
    rng: np.random.Generator,
    env: ClientEnv,
) -> tuple[ClientState, ClientOutcome]:
    next_state, outgoing = step(state, event, rng, env)
    assert isinstance(next_state, ClientState)

    return next_state, outgoing
