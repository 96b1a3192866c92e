from __future__ import annotations

import typing as t

from typing_extensions import override

from mediq.abc import MediqError

S = t.TypeVar("S")


class ProtocolError(MediqError, RuntimeError):
    """Raised when a protocol session can't proceed."""


class ProtocolOrderError(ProtocolError, t.Generic[S]):
    """Raised when a role receives an event that is not legal in its current phase."""

    def __init__(
        self,
        actual: S,
        expected: t.Optional[t.Union[S, t.Collection[S]]] = None,
        message: t.Optional[str] = None,
    ) -> None:
        super().__init__()

        self.actual = actual
        self.expected = expected
        self.message = message

    @override
    def __str__(self) -> str:
        return f"message={self.message}; actual={self.actual}; expected={self.expected}"


class SessionFinishedError(ProtocolError):
    """Raised when a role machine is run after its final phase was reached."""


class UnknownProvider(ProtocolError):
    """Raised when the mediator gets a message from a party it never registered."""


class UnknownSession(ProtocolError):
    """Raised when a message refers to a session the mediator never opened."""


class DecryptFailure(ProtocolError):
    """Raised by the client when a provider bundle can't be opened."""


class PartialProviderFailure(ProtocolError):
    """Raised when an acknowledged provider never delivers its key set or bundle."""


class NoProviders(ProtocolError):
    """Raised when no provider acknowledged the query (N = 0)."""


class StepCapExceeded(ProtocolError):
    """Raised when the simulated network hits its step cap with work still pending."""
