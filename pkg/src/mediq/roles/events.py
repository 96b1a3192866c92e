from __future__ import annotations

import typing as t
from dataclasses import dataclass

from mediq.transport.envelope import Address, MessageType
from mediq.transport.simnet import Note, Receive, Timer

if t.TYPE_CHECKING:
    from mediq.datastore import Query


@dataclass(frozen=True)
class Start:
    """Client event: submit the query of the session."""

    query: Query


@dataclass(frozen=True)
class Register:
    """Mediator event: a provider joins the registry."""

    provider: Address


@dataclass(frozen=True)
class AckDeadline:
    """Mediator timer event: the ack window of the session is over, N gets committed."""

    session_id: str


@dataclass(frozen=True)
class PhaseTimeout:
    """Client timer event: the named phase didn't complete in time."""

    session_id: str
    phase: str


@dataclass(frozen=True)
class Send:
    """
    Outgoing message of a role step.

    The party runtime turns it into an `Envelope` with the next seq of the directed pair. `sender` replaces the party's
    own address; only the mediator uses it, to put an alias or the client session address on relayed messages.
    """

    session_id: str
    recipient: Address
    msg_type: MessageType
    payload: bytes
    sender: t.Optional[Address] = None


RoleEvent = t.Union[Receive, Start, Register, AckDeadline, PhaseTimeout]
RoleOutgoing = t.Union[Send, Timer, Note]

__all__ = [
    "AckDeadline",
    "Note",
    "PhaseTimeout",
    "Receive",
    "Register",
    "RoleEvent",
    "RoleOutgoing",
    "Send",
    "Start",
    "Timer",
]
