from __future__ import annotations

import threading
import typing as t

from typing_extensions import override

from mediq.abc import State, StateMachine, StateMachineSubscriber
from mediq.executor import StateMachineExecutor
from mediq.subscriber.registry import StateMachineSubscriberRegistry

if t.TYPE_CHECKING:
    import numpy as np

U_contra = t.TypeVar("U_contra", contravariant=True)
V_co = t.TypeVar("V_co", covariant=True)
E = t.TypeVar("E")


class RoleStateMachine(StateMachine[State[U_contra, t.Sequence[V_co], E]], t.Generic[U_contra, V_co, E]):
    """Runs a role: handles one event at a time and returns the outgoing items of the step."""

    def __init__(
        self,
        executor: StateMachineExecutor[State[U_contra, t.Sequence[V_co], E], U_contra, t.Sequence[V_co], E],
        lock: t.Optional[t.ContextManager[object]] = None,
    ) -> None:
        self.__executor = executor
        self.__lock = lock if lock is not None else threading.Lock()

    @property
    @override
    def current_state(self) -> State[U_contra, t.Sequence[V_co], E]:
        return self.__executor.current_state

    @property
    def is_finished(self) -> bool:
        return self.__executor.is_aborted

    @property
    def lock(self) -> t.ContextManager[object]:
        return self.__lock

    def run(self, /, income: U_contra) -> t.Sequence[V_co]:
        with self.__lock, self.__executor.visit_state(income) as context:
            outcome = self.current_state.handle(income, context)
            self.__executor.handle_outcome(income, outcome)

            return outcome


def create_role_machine(
    initial: State[U_contra, t.Sequence[V_co], E],
    rng: np.random.Generator,
    env: E,
    fallback: t.Optional[
        t.Callable[
            [State[U_contra, t.Sequence[V_co], E], Exception],
            t.Optional[State[U_contra, t.Sequence[V_co], E]],
        ]
    ] = None,
    subscribers: t.Optional[
        t.Sequence[StateMachineSubscriber[State[U_contra, t.Sequence[V_co], E], U_contra, t.Sequence[V_co]]]
    ] = None,
) -> RoleStateMachine[U_contra, V_co, E]:
    return RoleStateMachine(
        StateMachineExecutor(
            initial,
            rng,
            env,
            fallback,
            StateMachineSubscriberRegistry(*subscribers) if subscribers else None,
        )
    )
