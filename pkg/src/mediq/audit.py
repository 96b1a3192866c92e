"""
Mechanical privacy audit of a mediator transcript.

Checks:
    source-anonymity -- client-bound envelopes never carry a provider identity, in addresses or payload bytes
    payload-opacity -- key exchange payloads the mediator sees never carry a sensitive plaintext cell value
    step-ordering -- per party the message types follow the protocol steps, relays follow their inbound message
    n-consistency -- the count sent to the client matches the acks, the key sets and the bundles

The plaintext query the mediator routes is an accepted leak and is excluded from payload-opacity. A cell search can
only find leaks, passing it doesn't prove there are none.
"""

from __future__ import annotations

import base64
import binascii
import json
import typing as t
from dataclasses import dataclass

from mediq.abc import MediqError
from mediq.datastore import Table, format_cell
from mediq.roles.messages import CountPayload, payload_alias
from mediq.transport.envelope import CodecError, Envelope, MessageType, Role, SchemaError
from mediq.transport.transcript import Direction, Record, Transcript, TranscriptError

if t.TYPE_CHECKING:
    from pathlib import Path

SOURCE_ANONYMITY = "source-anonymity"
PAYLOAD_OPACITY = "payload-opacity"
STEP_ORDERING = "step-ordering"
N_CONSISTENCY = "n-consistency"

# shorter strings show up by chance in kilobytes of ciphertext
SENSITIVE_MIN_LENGTH = 6

_OPAQUE_TYPES = frozenset(
    {MessageType.KEY_SET, MessageType.BLINDED_RESPONSE, MessageType.BUNDLE, MessageType.ABORT},
)

_RANKS: t.Mapping[tuple[Direction, MessageType], int] = {
    (Direction.INBOUND, MessageType.QUERY): 1,
    (Direction.OUTBOUND, MessageType.QUERY): 2,
    (Direction.INBOUND, MessageType.ACK): 3,
    (Direction.OUTBOUND, MessageType.COUNT): 4,
    (Direction.INBOUND, MessageType.KEY_SET): 5,
    (Direction.OUTBOUND, MessageType.KEY_SET): 5,
    (Direction.INBOUND, MessageType.BLINDED_RESPONSE): 6,
    (Direction.OUTBOUND, MessageType.BLINDED_RESPONSE): 7,
    (Direction.INBOUND, MessageType.BUNDLE): 8,
    (Direction.OUTBOUND, MessageType.BUNDLE): 8,
}


class TranscriptParseError(MediqError):
    pass


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    details: tuple[str, ...] = ()

    def to_json(self) -> dict[str, object]:
        return {"passed": self.passed, "details": list(self.details)}


@dataclass(frozen=True)
class AuditReport:
    checks: tuple[Verdict, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def __getitem__(self, name: str) -> Verdict:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_json(self) -> dict[str, object]:
        return {"passed": self.passed, "checks": {check.name: check.to_json() for check in self.checks}}


def _verdict(name: str, violations: t.Sequence[str]) -> Verdict:
    return Verdict(name, not violations, tuple(violations))


def sensitive_cells(tables: t.Iterable[Table], min_length: int = SENSITIVE_MIN_LENGTH) -> frozenset[str]:
    """Cell strings, as written in csv, long enough to be searched for in ciphertext."""

    cells: set[str] = set()
    for table in tables:
        for row in table.rows:
            cells.update(text for text in map(format_cell, row) if len(text) >= min_length)

    return frozenset(cells)


def _strings(data: object) -> t.Iterator[str]:
    if isinstance(data, str):
        yield data
    elif isinstance(data, dict):
        for key, value in data.items():
            yield str(key)
            yield from _strings(value)
    elif isinstance(data, list):
        for item in data:
            yield from _strings(item)


def payload_views(payload: bytes) -> t.Sequence[bytes]:
    """
    Byte views of a payload to search plaintext in.

    A JSON payload yields its string fields, base64 fields decoded. Anything else is searched as is.
    """

    try:
        data = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return [payload]

    views: list[bytes] = []
    for value in _strings(data):
        views.append(value.encode("utf-8"))
        try:
            views.append(base64.b64decode(value, validate=True))
        except (binascii.Error, ValueError):
            continue

    return views


def _counterparty(record: Record) -> str:
    env = record.envelope
    return str(env.sender if record.direction is Direction.INBOUND else env.recipient)


def _provider_identities(transcript: Transcript) -> set[str]:
    identities: set[str] = set()
    for record in transcript:
        env = record.envelope
        if record.direction is Direction.INBOUND and env.sender.role is Role.PROVIDER:
            identities.add(env.sender.token)
        if record.direction is Direction.OUTBOUND and env.recipient.role is Role.PROVIDER:
            identities.add(env.recipient.token)
    return identities


def check_source_anonymity(transcript: Transcript, identities: t.Collection[str] = ()) -> Verdict:
    known = _provider_identities(transcript) | set(identities)
    searchable = [identity.encode("utf-8") for identity in known if len(identity) >= SENSITIVE_MIN_LENGTH]
    violations: list[str] = []

    for i, record in enumerate(transcript):
        env = record.envelope
        if record.direction is not Direction.OUTBOUND or env.recipient.role is not Role.CLIENT:
            continue

        if env.sender.token in known or env.recipient.token in known:
            violations.append(f"record {i}: {env.msg_type.value} addressed with a provider identity")
            continue

        views = payload_views(env.payload)
        if any(identity in view for identity in searchable for view in views):
            violations.append(f"record {i}: {env.msg_type.value} payload carries a provider identity")

    return _verdict(SOURCE_ANONYMITY, violations)


def check_payload_opacity(transcript: Transcript, sensitive: t.Collection[str]) -> Verdict:
    needles = [(cell, cell.encode("utf-8")) for cell in sorted(sensitive)]
    violations: list[str] = []

    for i, record in enumerate(transcript):
        env = record.envelope
        if env.msg_type not in _OPAQUE_TYPES:
            continue

        alias = payload_alias(env.payload)
        # routing aliases are random hex and may contain digit runs
        views = [view for view in payload_views(env.payload) if alias is None or view != alias.encode("utf-8")]
        leaked = [cell for cell, needle in needles if any(needle in view for view in views)]
        if leaked:
            violations.append(f"record {i}: {env.msg_type.value} payload carries plaintext {leaked[:3]}")

    return _verdict(PAYLOAD_OPACITY, violations)


def _client_count(records: t.Sequence[Record]) -> t.Optional[tuple[int, int]]:
    """Index and value of the count delivered to the client."""

    for i, record in enumerate(records):
        env = record.envelope
        if (
            record.direction is Direction.OUTBOUND
            and env.msg_type is MessageType.COUNT
            and env.recipient.role is Role.CLIENT
        ):
            return i, _count_value(env)
    return None


def _count_value(env: Envelope) -> int:
    try:
        return CountPayload.decode(env.payload).n
    except SchemaError as err:
        msg = "count payload has no integer n"
        raise TranscriptParseError(msg, str(env.sender), env.seq) from err


def _first_index(
    records: t.Sequence[Record],
    direction: Direction,
    msg_type: MessageType,
    predicate: t.Callable[[Envelope], bool],
) -> t.Optional[int]:
    for i, record in enumerate(records):
        if record.direction is direction and record.envelope.msg_type is msg_type and predicate(record.envelope):
            return i
    return None


def _check_session_order(records: t.Sequence[Record]) -> list[str]:
    violations: list[str] = []

    first = records[0]
    if first.direction is not Direction.INBOUND or first.envelope.msg_type is not MessageType.QUERY:
        violations.append(f"session starts with {first.direction.value} {first.envelope.msg_type.value}")

    lanes: dict[str, tuple[int, int, MessageType]] = {}
    for i, record in enumerate(records):
        rank = _RANKS.get((record.direction, record.envelope.msg_type))
        if rank is None:
            continue

        lane = _counterparty(record)
        previous = lanes.get(lane)
        if previous is not None and previous[1] > rank:
            violations.append(
                f"record {i}: {record.envelope.msg_type.value} to/from {lane} after {previous[2].value} "
                f"(record {previous[0]})"
            )
        lanes[lane] = (i, rank, record.envelope.msg_type)

    count = _client_count(records)
    if count is None:
        violations.append("no count was delivered to the client")
        return violations

    count_at, n = count
    acks = {
        record.envelope.sender.token
        for record in records[:count_at]
        if record.direction is Direction.INBOUND and record.envelope.msg_type is MessageType.ACK
    }
    if len(acks) != n:
        violations.append(f"count {n} preceded by {len(acks)} acks")

    key_sets_out = [
        i
        for i, record in enumerate(records)
        if record.direction is Direction.OUTBOUND and record.envelope.msg_type is MessageType.KEY_SET
    ]
    first_blinded = _first_index(records, Direction.INBOUND, MessageType.BLINDED_RESPONSE, lambda _: True)
    if first_blinded is not None and any(i > first_blinded for i in key_sets_out):
        violations.append("a key set reached the client after it started answering")

    for i, record in enumerate(records):
        env = record.envelope
        if record.direction is not Direction.OUTBOUND or env.msg_type is not MessageType.COUNT:
            continue
        alias = payload_alias(env.payload)
        if env.recipient.role is not Role.PROVIDER or alias is None:
            continue

        violations.extend(_check_relays(records, i, alias, env.recipient.token))

    return violations


def _check_relays(records: t.Sequence[Record], count_at: int, alias: str, identity: str) -> list[str]:
    """Every relayed message of the alias lane is delivered after the message it relays."""

    violations: list[str] = []
    relays = [
        (
            MessageType.KEY_SET,
            _first_index(records, Direction.INBOUND, MessageType.KEY_SET, lambda e: e.sender.token == identity),
            _first_index(records, Direction.OUTBOUND, MessageType.KEY_SET, lambda e: e.sender.token == alias),
        ),
        (
            MessageType.BLINDED_RESPONSE,
            _first_index(
                records,
                Direction.INBOUND,
                MessageType.BLINDED_RESPONSE,
                lambda e: payload_alias(e.payload) == alias,
            ),
            _first_index(
                records,
                Direction.OUTBOUND,
                MessageType.BLINDED_RESPONSE,
                lambda e: e.recipient.token == identity,
            ),
        ),
        (
            MessageType.BUNDLE,
            _first_index(records, Direction.INBOUND, MessageType.BUNDLE, lambda e: e.sender.token == identity),
            _first_index(records, Direction.OUTBOUND, MessageType.BUNDLE, lambda e: e.sender.token == alias),
        ),
    ]

    for msg_type, inbound, outbound in relays:
        if inbound is not None and inbound < count_at:
            violations.append(f"alias {alias}: {msg_type.value} before the count")
        if outbound is not None and (inbound is None or outbound < inbound):
            violations.append(f"alias {alias}: {msg_type.value} relayed before it was received")

    return violations


def _sessions(transcript: Transcript) -> t.Mapping[str, t.Sequence[Record]]:
    sessions: dict[str, list[Record]] = {}
    for record in transcript:
        sessions.setdefault(record.envelope.session_id, []).append(record)
    return sessions


def check_step_ordering(transcript: Transcript) -> Verdict:
    sessions = _sessions(transcript)
    if not sessions:
        return _verdict(STEP_ORDERING, ["transcript is empty"])

    violations = [
        f"session {session_id}: {violation}"
        for session_id, records in sessions.items()
        for violation in _check_session_order(records)
    ]
    return _verdict(STEP_ORDERING, violations)


def _check_session_count(records: t.Sequence[Record]) -> list[str]:
    count = _client_count(records)
    if count is None:
        return ["no count was delivered to the client"]

    count_at, n = count
    violations: list[str] = []

    acked = {
        record.envelope.sender.token
        for record in records[:count_at]
        if record.direction is Direction.INBOUND and record.envelope.msg_type is MessageType.ACK
    }

    def distinct(msg_type: MessageType, role: Role) -> set[str]:
        return {
            record.envelope.sender.token
            for record in records
            if record.direction is Direction.OUTBOUND
            and record.envelope.msg_type is msg_type
            and record.envelope.recipient.role is role
        }

    provider_counts = [
        _count_value(record.envelope)
        for record in records
        if record.direction is Direction.OUTBOUND
        and record.envelope.msg_type is MessageType.COUNT
        and record.envelope.recipient.role is Role.PROVIDER
    ]

    observed = {
        "acked providers": len(acked),
        "key sets relayed": len(distinct(MessageType.KEY_SET, Role.CLIENT)),
        "bundles relayed": len(distinct(MessageType.BUNDLE, Role.CLIENT)),
        "provider counts": len(provider_counts),
    }
    violations.extend(f"count {n} != {value} {name}" for name, value in observed.items() if value != n)
    violations.extend(f"provider count {value} != client count {n}" for value in provider_counts if value != n)

    return violations


def check_n_consistency(transcript: Transcript) -> Verdict:
    violations = [
        f"session {session_id}: {violation}"
        for session_id, records in _sessions(transcript).items()
        for violation in _check_session_count(records)
    ]
    return _verdict(N_CONSISTENCY, violations)


def audit(
    transcript: Transcript,
    *,
    sensitive: t.Collection[str] = (),
    identities: t.Collection[str] = (),
) -> AuditReport:
    """Run the four checks; `sensitive` cells come from the provider tables, `identities` add to those observed."""

    return AuditReport(
        (
            check_source_anonymity(transcript, identities),
            check_payload_opacity(transcript, sensitive),
            check_step_ordering(transcript),
            check_n_consistency(transcript),
        )
    )


def audit_file(
    path: Path,
    *,
    sensitive: t.Collection[str] = (),
    identities: t.Collection[str] = (),
) -> AuditReport:
    try:
        transcript = Transcript.load(path)
    except OSError as err:
        msg = "can't read transcript"
        raise TranscriptParseError(msg, str(path)) from err
    except (TranscriptError, CodecError, json.JSONDecodeError, KeyError, ValueError) as err:
        msg = "transcript doesn't parse"
        raise TranscriptParseError(msg, str(path)) from err

    return audit(transcript, sensitive=sensitive, identities=identities)
