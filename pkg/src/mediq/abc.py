from __future__ import annotations

import abc
import typing as t

if t.TYPE_CHECKING:
    import numpy as np

S_contra = t.TypeVar("S_contra", contravariant=True)
S_co = t.TypeVar("S_co", covariant=True)
U_contra = t.TypeVar("U_contra", contravariant=True)
V_contra = t.TypeVar("V_contra", contravariant=True)
V_co = t.TypeVar("V_co", covariant=True)
E_co = t.TypeVar("E_co", covariant=True)


class MediqError(Exception):
    """Base exception for mediq package."""


class Context(t.Generic[S_contra, E_co], metaclass=abc.ABCMeta):
    """
    A context for role states to control the protocol step.

    Each step provides a `Context` instance to the `handle` method of a `State`. The context lets a state change the
    role phase, finish the role, and reach the owned seeded random source and the role environment (local store,
    perturbation policy, timeouts).
    """

    @property
    @abc.abstractmethod
    def rng(self) -> np.random.Generator:
        """The seeded random source owned by this role."""
        raise NotImplementedError

    @property
    @abc.abstractmethod
    def env(self) -> E_co:
        """Role environment, immutable for the whole session."""
        raise NotImplementedError

    @abc.abstractmethod
    def set_state(self, state: S_contra, *, final: bool = False) -> None:
        """
        Change the role to the given phase state.

        :param state: the next phase state
        :param final: if True, transition to the new state and then finish the role
        """
        raise NotImplementedError

    @abc.abstractmethod
    def abort(self) -> None:
        """Finish the role, no further events are handled after this call."""
        raise NotImplementedError


class State(t.Generic[U_contra, V_co, E_co], metaclass=abc.ABCMeta):
    """
    Role phase interface.

    A phase handles one event, may switch the phase via `Context.set_state` and returns the outgoing items.
    """

    @abc.abstractmethod
    def handle(self, income: U_contra, context: Context[State[U_contra, V_co, E_co], E_co]) -> V_co:
        raise NotImplementedError


class StateMachine(t.Generic[S_co], metaclass=abc.ABCMeta):
    @property
    @abc.abstractmethod
    def current_state(self) -> S_co:
        """Return current state."""
        raise NotImplementedError


class StateMachineSubscriber(t.Generic[S_contra, U_contra, V_contra], metaclass=abc.ABCMeta):
    @abc.abstractmethod
    def notify_initial(self, state: S_contra) -> None:
        raise NotImplementedError

    @abc.abstractmethod
    def notify_state_entered(self, state: S_contra, income: U_contra) -> None:
        raise NotImplementedError

    @abc.abstractmethod
    def notify_state_outcome(self, state: S_contra, income: U_contra, outcome: V_contra) -> None:
        raise NotImplementedError

    @abc.abstractmethod
    def notify_state_left(self, state: S_contra, income: U_contra) -> None:
        raise NotImplementedError

    @abc.abstractmethod
    def notify_state_failed(self, state: S_contra, error: Exception) -> None:
        raise NotImplementedError

    @abc.abstractmethod
    def notify_transition(self, source: S_contra, destination: S_contra) -> None:
        raise NotImplementedError

    @abc.abstractmethod
    def notify_final(self, state: S_contra) -> None:
        raise NotImplementedError
