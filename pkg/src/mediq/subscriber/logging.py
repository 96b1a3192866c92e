import logging
import typing as t

from typing_extensions import override

from mediq.abc import StateMachineSubscriber


class LoggingSubscriber(StateMachineSubscriber[object, object, t.Sequence[object]]):
    """Logs role phase changes; the role name prefixes every record so interleaved parties stay readable."""

    def __init__(self, role: str, log: t.Optional[logging.Logger] = None) -> None:
        self.__role = role
        self.__log = log or logging.getLogger(__name__)

    @override
    def notify_initial(self, state: object) -> None:
        self.__log.debug("%s initial %s", self.__role, state)

    @override
    def notify_state_entered(self, state: object, income: object) -> None:
        self.__log.debug("%s entered %s on %s", self.__role, state, income)

    @override
    def notify_state_outcome(self, state: object, income: object, outcome: t.Sequence[object]) -> None:
        self.__log.debug("%s %s emitted %d items", self.__role, state, len(outcome))

    @override
    def notify_state_left(self, state: object, income: object) -> None:
        self.__log.debug("%s left %s", self.__role, state)

    @override
    def notify_state_failed(self, state: object, error: Exception) -> None:
        self.__log.warning("%s failed in %s", self.__role, state, exc_info=error)

    @override
    def notify_transition(self, source: object, destination: object) -> None:
        self.__log.info("%s transitioned from %s to %s", self.__role, source, destination)

    @override
    def notify_final(self, state: object) -> None:
        self.__log.info("%s final %s", self.__role, state)
