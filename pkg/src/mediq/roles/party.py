from __future__ import annotations

import logging
import typing as t

from typing_extensions import override

from mediq.abc import MediqError, StateMachineSubscriber
from mediq.machine import RoleStateMachine, create_role_machine
from mediq.roles.client import (
    ClientAwaitingBundles,
    ClientAwaitingKeySets,
    ClientDone,
    ClientEnv,
    ClientFailed,
    ClientIdle,
    ClientState,
    client_fallback,
)
from mediq.roles.events import Note, Receive, Register, RoleEvent, RoleOutgoing, Send
from mediq.roles.mediator import MediatorEnv, MediatorState
from mediq.roles.messages import AbortPayload
from mediq.roles.provider import ProviderAwaitingQuery, ProviderEnv, ProviderFailed, ProviderState, provider_fallback
from mediq.subscriber.logging import LoggingSubscriber
from mediq.transport.envelope import MEDIATOR, Address, Envelope, MessageType

if t.TYPE_CHECKING:
    import numpy as np

    from mediq.datastore import Table
    from mediq.transport.simnet import Outgoing

log = logging.getLogger(__name__)

E = t.TypeVar("E")

RoleSubscriber = StateMachineSubscriber[object, RoleEvent, t.Sequence[RoleOutgoing]]


class RoleParty(t.Generic[E]):
    """Adapts a role machine to the network: assigns per-pair seq numbers and turns `Send` items into envelopes."""

    def __init__(self, address: Address, machine: RoleStateMachine[RoleEvent, RoleOutgoing, E]) -> None:
        self.__address = address
        self.__machine = machine
        self.__seq: dict[tuple[Address, Address], int] = {}

    @property
    def address(self) -> Address:
        return self.__address

    @property
    def machine(self) -> RoleStateMachine[RoleEvent, RoleOutgoing, E]:
        return self.__machine

    def handle(self, event: object, now: float) -> t.Sequence[Outgoing]:
        if self.__machine.is_finished:
            log.info("%s ignores %s at %.4f, role already finished", self.__address, _describe(event), now)
            return ()

        try:
            items = self.__machine.run(t.cast("RoleEvent", event))

        except MediqError as err:
            log.warning("%s failed on %s at %.4f: %s", self.__address, _describe(event), now, err)
            return self.materialise(self.on_failure(event, err))

        return self.materialise(items)

    def on_failure(self, event: object, err: MediqError) -> t.Sequence[RoleOutgoing]:
        return ()

    def materialise(self, items: t.Sequence[RoleOutgoing]) -> t.Sequence[Outgoing]:
        outgoing: list[Outgoing] = []

        for item in items:
            if isinstance(item, Send):
                outgoing.append(self.__envelope(item))
            else:
                outgoing.append(item)

        return outgoing

    def __envelope(self, item: Send) -> Envelope:
        sender = item.sender if item.sender is not None else self.__address
        pair = (sender, item.recipient)
        seq = self.__seq.get(pair, -1) + 1
        self.__seq[pair] = seq

        return Envelope(item.session_id, sender, item.recipient, item.msg_type, seq, item.payload)


def _describe(event: object) -> str:
    if isinstance(event, Receive):
        return f"{event.envelope.msg_type.value} from {event.envelope.sender}"
    return type(event).__name__


class ClientParty(RoleParty[ClientEnv]):
    @property
    def state(self) -> ClientState:
        state = self.machine.current_state
        assert isinstance(state, ClientState)
        return state

    @property
    def result(self) -> t.Optional[Table]:
        state = self.state
        return state.result if isinstance(state, ClientDone) else None

    @property
    def n(self) -> t.Optional[int]:
        state = self.state
        if isinstance(state, (ClientDone, ClientAwaitingKeySets, ClientAwaitingBundles)):
            return state.n
        return None

    @property
    def failure(self) -> t.Optional[Exception]:
        state = self.state
        return state.error if isinstance(state, ClientFailed) else None


class MediatorParty(RoleParty[MediatorEnv]):
    @property
    def state(self) -> MediatorState:
        state = self.machine.current_state
        assert isinstance(state, MediatorState)
        return state

    def register(self, provider: Address) -> None:
        """Add a provider to the registry; safe to call from several threads."""

        self.machine.run(Register(provider))

    @override
    def on_failure(self, event: object, err: MediqError) -> t.Sequence[RoleOutgoing]:
        return [Note(f"dropped: {type(err).__name__}")]


class ProviderParty(RoleParty[ProviderEnv]):
    @property
    def state(self) -> ProviderState:
        state = self.machine.current_state
        assert isinstance(state, ProviderState)
        return state

    @override
    def on_failure(self, event: object, err: MediqError) -> t.Sequence[RoleOutgoing]:
        if not isinstance(event, Receive) or not isinstance(self.state, ProviderFailed):
            return ()

        reason = type(err).__name__
        return [Send(event.envelope.session_id, MEDIATOR, MessageType.ABORT, AbortPayload(reason).encode())]


def create_client_party(
    env: ClientEnv,
    rng: np.random.Generator,
    subscribers: t.Sequence[RoleSubscriber] = (),
) -> ClientParty:
    machine = create_role_machine(
        ClientIdle(),
        rng,
        env,
        client_fallback,
        [LoggingSubscriber("client"), *subscribers],
    )
    return ClientParty(env.address, machine)


def create_mediator_party(
    env: MediatorEnv,
    rng: np.random.Generator,
    providers: t.Iterable[Address] = (),
    subscribers: t.Sequence[RoleSubscriber] = (),
) -> MediatorParty:
    # without a fallback a failed step only drops the message
    machine = create_role_machine(MediatorState(), rng, env, None, [LoggingSubscriber("mediator"), *subscribers])
    party = MediatorParty(MEDIATOR, machine)

    for provider in providers:
        party.register(provider)

    return party


def create_provider_party(
    identity: Address,
    env: ProviderEnv,
    rng: np.random.Generator,
    subscribers: t.Sequence[RoleSubscriber] = (),
) -> ProviderParty:
    machine = create_role_machine(
        ProviderAwaitingQuery(),
        rng,
        env,
        provider_fallback,
        [LoggingSubscriber(f"provider {identity.token}"), *subscribers],
    )
    return ProviderParty(identity, machine)

