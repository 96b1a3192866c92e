import typing as t
from pathlib import Path

import pytest

from mediq.transport.envelope import MEDIATOR, Address, Envelope, MessageType, Role
from mediq.transport.transcript import Direction, Record, Transcript, TranscriptError

CLIENT = Address(Role.CLIENT, "5e55")
PROVIDER = Address(Role.PROVIDER, "hospital_a")


def _record(seq: int, at: float, msg_type: MessageType = MessageType.QUERY, note: t.Optional[str] = None) -> Record:
    return Record(Direction.INBOUND, Envelope("5e55", CLIENT, MEDIATOR, msg_type, seq, b"{}"), at, note)


@pytest.fixture
def transcript() -> Transcript:
    return Transcript(
        [
            _record(0, 0.01),
            Record(Direction.OUTBOUND, Envelope("5e55", CLIENT, PROVIDER, MessageType.QUERY, 0, b"{}"), 0.02),
            Record(Direction.INBOUND, Envelope("5e55", PROVIDER, MEDIATOR, MessageType.ACK, 0, b"{}"), 0.03, "late"),
        ]
    )


def test_dump_load(transcript: Transcript, tmp_path: Path) -> None:
    path = tmp_path / "transcript.jsonl"
    transcript.dump(path)

    loaded = Transcript.load(path)

    assert loaded.records == transcript.records
    assert len(path.read_text(encoding="utf-8").splitlines()) == 3
    assert loaded.dumps() == transcript.dumps()


def test_of_type(transcript: Transcript) -> None:
    assert [record.envelope.sender for record in transcript.of_type(MessageType.ACK)] == [PROVIDER]
    assert len(transcript.of_type(MessageType.QUERY, MessageType.ACK)) == 3


def test_timestamps_never_decrease() -> None:
    transcript = Transcript([_record(0, 1.0)])

    with pytest.raises(TranscriptError):
        transcript.append(_record(1, 0.5))


@pytest.mark.parametrize("seq", [pytest.param(0, id="repeated"), pytest.param(-1, id="smaller")])
def test_seq_strictly_increases_per_pair(seq: int) -> None:
    transcript = Transcript([_record(0, 1.0)])

    with pytest.raises(TranscriptError):
        transcript.append(_record(seq, 2.0))


def test_seq_is_tracked_per_pair(transcript: Transcript) -> None:
    transcript.append(
        Record(Direction.OUTBOUND, Envelope("5e55", MEDIATOR, CLIENT, MessageType.COUNT, 0, b"{}"), 0.04),
    )

    assert len(transcript) == 4
