from __future__ import annotations

import enum
import json
import typing as t
from dataclasses import dataclass
from pathlib import Path

from mediq.abc import MediqError
from mediq.transport.envelope import Envelope, MessageType, canonical_json


class TranscriptError(MediqError):
    pass


class Direction(str, enum.Enum):
    """Direction of a hop relative to the mediator."""

    INBOUND = "inbound"
    OUTBOUND = "outbound"


@dataclass(frozen=True)
class Record:
    direction: Direction
    envelope: Envelope
    at: float
    note: t.Optional[str] = None

    def to_json(self) -> dict[str, object]:
        data: dict[str, object] = {
            "direction": self.direction.value,
            "at": self.at,
            "envelope": self.envelope.to_json(),
        }
        if self.note is not None:
            data["note"] = self.note
        return data

    @classmethod
    def from_json(cls, data: t.Mapping[str, object]) -> Record:
        note = data.get("note")
        at = data["at"]
        if not isinstance(at, (int, float)):
            msg = "record timestamp must be a number"
            raise TranscriptError(msg, at)

        return cls(
            direction=Direction(data["direction"]),
            envelope=Envelope.from_json(data["envelope"]),
            at=float(at),
            note=note if isinstance(note, str) else None,
        )


class Transcript:
    """Append-only, totally ordered log of envelopes; timestamps never decrease, seq grows per directed pair."""

    def __init__(self, records: t.Iterable[Record] = ()) -> None:
        self.__records: list[Record] = []
        self.__last_seq: dict[tuple[str, str, str], int] = {}

        for record in records:
            self.append(record)

    def __len__(self) -> int:
        return len(self.__records)

    def __iter__(self) -> t.Iterator[Record]:
        return iter(self.__records)

    @property
    def records(self) -> t.Sequence[Record]:
        return tuple(self.__records)

    def append(self, record: Record) -> None:
        if self.__records and record.at < self.__records[-1].at:
            msg = "transcript timestamps must not decrease"
            raise TranscriptError(msg, record.at, self.__records[-1].at)

        env = record.envelope
        pair = (env.session_id, str(env.sender), str(env.recipient))
        last = self.__last_seq.get(pair)
        if last is not None and env.seq <= last:
            msg = "envelope seq must strictly increase per directed pair"
            raise TranscriptError(msg, pair, env.seq, last)

        self.__last_seq[pair] = env.seq
        self.__records.append(record)

    def of_type(self, *msg_types: MessageType) -> t.Sequence[Record]:
        return [record for record in self.__records if record.envelope.msg_type in msg_types]

    def dumps(self) -> bytes:
        return b"".join(canonical_json(record.to_json()) + b"\n" for record in self.__records)

    def dump(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.dumps())

    @classmethod
    def loads(cls, data: bytes) -> Transcript:
        return cls(Record.from_json(json.loads(line)) for line in data.splitlines() if line.strip())

    @classmethod
    def load(cls, path: Path) -> Transcript:
        return cls.loads(path.read_bytes())
