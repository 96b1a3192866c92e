import typing as t

from mediq.transport.envelope import MEDIATOR, Address, Envelope, MessageType
from mediq.transport.simnet import Outgoing, Party, Receive, Timer


class PartyStub:
    """Sends `burst` envelopes to `peer` on any non-envelope event and records everything it handles."""

    def __init__(self, address: Address, peer: t.Optional[Address] = None, burst: int = 0) -> None:
        self.__address = address
        self.__peer = peer
        self.__burst = burst
        self.__seq = 0
        self.__handled = list[tuple[object, float]]()

    @property
    def address(self) -> Address:
        return self.__address

    @property
    def handled(self) -> t.Sequence[tuple[object, float]]:
        return self.__handled

    @property
    def received(self) -> t.Sequence[Envelope]:
        return [event.envelope for event, _ in self.__handled if isinstance(event, Receive)]

    def handle(self, event: object, now: float) -> t.Sequence[Outgoing]:
        self.__handled.append((event, now))

        if isinstance(event, Receive) or self.__peer is None:
            return ()

        if isinstance(event, Timer):
            return [event]

        outgoing: list[Outgoing] = []
        for _ in range(self.__burst):
            outgoing.append(Envelope("5e55", self.__address, self.__peer, MessageType.ACK, self.__seq, b"{}"))
            self.__seq += 1
        return outgoing


class MuteParty:
    """Accepts everything and never answers."""

    def __init__(self, address: Address) -> None:
        self.__address = address

    @property
    def address(self) -> Address:
        return self.__address

    def handle(self, event: object, now: float) -> t.Sequence[Outgoing]:
        return ()


class AckingMuteParty:
    """Acknowledges every query, then never sends its key set."""

    def __init__(self, address: Address) -> None:
        self.__address = address
        self.__seq = 0

    @property
    def address(self) -> Address:
        return self.__address

    def handle(self, event: object, now: float) -> t.Sequence[Outgoing]:
        if not isinstance(event, Receive) or event.envelope.msg_type is not MessageType.QUERY:
            return ()

        ack = Envelope(event.envelope.session_id, self.__address, MEDIATOR, MessageType.ACK, self.__seq, b"{}")
        self.__seq += 1
        return [ack]


class WithholdingParty:
    """Runs the wrapped party but never delivers its envelopes of `withheld` type."""

    def __init__(self, party: Party, withheld: MessageType) -> None:
        self.__party = party
        self.__withheld = withheld

    @property
    def address(self) -> Address:
        return self.__party.address

    def handle(self, event: object, now: float) -> t.Sequence[Outgoing]:
        return [
            item
            for item in self.__party.handle(event, now)
            if not isinstance(item, Envelope) or item.msg_type is not self.__withheld
        ]
