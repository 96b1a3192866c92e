"""Deterministic in-memory network: reliable delivery, FIFO per directed pair, jitter drawn from the seeded source."""

from __future__ import annotations

import heapq
import logging
import typing as t
from collections import deque
from dataclasses import dataclass

import numpy as np

from mediq.exception import StepCapExceeded
from mediq.transport.envelope import Address, Envelope, Role
from mediq.transport.transcript import Direction, Record, Transcript

log = logging.getLogger(__name__)

DEFAULT_STEP_CAP = 100_000
DEFAULT_LATENCY = 0.01


@dataclass(frozen=True)
class Receive:
    """Event: an envelope arrived."""

    envelope: Envelope


@dataclass(frozen=True)
class Timer:
    """Outgoing item: deliver `event` back to the emitting party after `delay` simulated seconds."""

    delay: float
    event: object


@dataclass(frozen=True)
class Note:
    """Outgoing item: annotate the transcript record of the envelope being handled."""

    text: str


Outgoing = t.Union[Envelope, Timer, Note]


class Party(t.Protocol):
    @property
    def address(self) -> Address: ...

    def handle(self, event: object, now: float) -> t.Sequence[Outgoing]: ...


@dataclass(frozen=True)
class SimnetResult:
    transcript: Transcript
    steps: int
    elapsed: float


class SimulatedNetwork:
    def __init__(
        self,
        parties: t.Sequence[Party],
        seed: int,
        *,
        latency: float = DEFAULT_LATENCY,
        step_cap: int = DEFAULT_STEP_CAP,
    ) -> None:
        self.__parties = {party.address: party for party in parties}
        self.__rng = np.random.default_rng(seed)
        self.__latency = latency
        self.__step_cap = step_cap

        self.__now = 0.0
        self.__steps = 0
        self.__order = 0
        self.__channels: dict[tuple[Address, Address], deque[tuple[float, Envelope]]] = {}
        self.__timers: list[tuple[float, int, Address, object]] = []
        self.__transcript = Transcript()

    @property
    def transcript(self) -> Transcript:
        return self.__transcript

    def run(self, initial: t.Sequence[tuple[Address, object]]) -> SimnetResult:
        for target, event in initial:
            self.__fire(target, event)

        while self.__has_pending():
            if self.__steps >= self.__step_cap:
                msg = "simulated network step cap reached with pending work"
                raise StepCapExceeded(msg, self.__step_cap)

            self.__advance()

        return SimnetResult(self.__transcript, self.__steps, self.__now)

    def __has_pending(self) -> bool:
        return bool(self.__timers) or any(self.__channels.values())

    def __advance(self) -> None:
        heads = sorted((queue[0][0], pair) for pair, queue in self.__channels.items() if queue)

        if self.__timers and (not heads or self.__timers[0][0] < heads[0][0]):
            at, _, target, event = heapq.heappop(self.__timers)
            self.__now = max(self.__now, at)
            self.__fire(target, event)
            return

        earliest = heads[0][0]
        ties = [pair for at, pair in heads if at == earliest]
        pair = ties[int(self.__rng.integers(0, len(ties)))] if len(ties) > 1 else ties[0]

        at, envelope = self.__channels[pair].popleft()
        self.__now = max(self.__now, at)
        self.__deliver(pair[0], envelope)

    def __fire(self, target: Address, event: object) -> None:
        self.__steps += 1
        party = self.__party(target)
        self.__dispatch(party, party.handle(event, self.__now))

    def __deliver(self, source: Address, envelope: Envelope) -> None:
        self.__steps += 1
        party = self.__party(envelope.recipient)
        log.debug("deliver %r at %.4f", envelope, self.__now)

        outgoing = party.handle(Receive(envelope), self.__now)

        notes = [item.text for item in outgoing if isinstance(item, Note)]
        if Role.MEDIATOR in (source.role, envelope.recipient.role):
            direction = Direction.INBOUND if envelope.recipient.role is Role.MEDIATOR else Direction.OUTBOUND
            self.__transcript.append(Record(direction, envelope, self.__now, "; ".join(notes) if notes else None))

        self.__dispatch(party, outgoing)

    def __dispatch(self, party: Party, outgoing: t.Sequence[Outgoing]) -> None:
        for item in outgoing:
            if isinstance(item, Envelope):
                self.__send(party.address, item)

            elif isinstance(item, Timer):
                self.__order += 1
                heapq.heappush(self.__timers, (self.__now + item.delay, self.__order, party.address, item.event))

    def __send(self, source: Address, envelope: Envelope) -> None:
        queue = self.__channels.setdefault((source, envelope.recipient), deque())
        jitter = self.__latency * float(self.__rng.uniform(0.5, 1.5))
        # FIFO per pair: never deliver before the previous message of the same pair
        at = max(self.__now + jitter, queue[-1][0] if queue else 0.0)
        queue.append((at, envelope))

    def __party(self, address: Address) -> Party:
        party = self.__parties.get(address)
        if party is None:
            msg = "no party listens on the address"
            raise LookupError(msg, str(address))
        return party


def simnet_run(
    parties: t.Sequence[Party],
    initial: t.Sequence[tuple[Address, object]],
    seed: int,
    *,
    latency: float = DEFAULT_LATENCY,
    step_cap: int = DEFAULT_STEP_CAP,
) -> Transcript:
    return SimulatedNetwork(parties, seed, latency=latency, step_cap=step_cap).run(initial).transcript
