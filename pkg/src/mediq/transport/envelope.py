"""
Wire envelope and its frame codec.

Frame format:
    ┌──────────┬──────────────────────────────────────────────────────────────────┐
    │ len (4B) │ UTF-8 JSON: session_id, from, to, msg_type, seq, payload (b64)   │
    │ u32 BE   │                                                                  │
    └──────────┴──────────────────────────────────────────────────────────────────┘

Length is the size of the JSON body, NOT including the 4-byte length prefix. Keys are always written in the order
above, so encoding the same envelope twice gives identical bytes.
"""

from __future__ import annotations

import base64
import binascii
import enum
import json
import struct
import typing as t
from dataclasses import dataclass

from typing_extensions import override

from mediq.abc import MediqError

LENGTH_PREFIX_SIZE: int = 4
MAX_FRAME_SIZE: int = 64 * 1024 * 1024
_PREFIX = struct.Struct(">I")


class CodecError(MediqError):
    pass


class FrameError(CodecError):
    pass


class UnknownMessage(CodecError):
    pass


class SchemaError(CodecError):
    pass


class Role(str, enum.Enum):
    CLIENT = "client"
    MEDIATOR = "mediator"
    PROVIDER = "provider"


class MessageType(str, enum.Enum):
    QUERY = "Query"
    ACK = "Ack"
    COUNT = "Count"
    KEY_SET = "KeySet"
    BLINDED_RESPONSE = "BlindedResponse"
    BUNDLE = "Bundle"
    ABORT = "Abort"


@dataclass(frozen=True, order=True)
class Address:
    role: Role
    token: str

    @override
    def __str__(self) -> str:
        return f"{self.role.value}:{self.token}"

    def to_json(self) -> dict[str, str]:
        return {"role": self.role.value, "token": self.token}


MEDIATOR = Address(Role.MEDIATOR, "mediator")


@dataclass(frozen=True)
class Envelope:
    session_id: str
    sender: Address
    recipient: Address
    msg_type: MessageType
    seq: int
    payload: bytes

    @override
    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}("
            f"session_id={self.session_id!r}, "
            f"sender={self.sender}, "
            f"recipient={self.recipient}, "
            f"msg_type={self.msg_type.value}, "
            f"seq={self.seq}, "
            f"payload=<{len(self.payload)} bytes>"
            ")"
        )

    def to_json(self) -> dict[str, object]:
        return {
            "session_id": self.session_id,
            "from": self.sender.to_json(),
            "to": self.recipient.to_json(),
            "msg_type": self.msg_type.value,
            "seq": self.seq,
            "payload": base64.b64encode(self.payload).decode("ascii"),
        }

    @classmethod
    def from_json(cls, data: object) -> Envelope:
        if not isinstance(data, dict):
            msg = "envelope must be a JSON object"
            raise SchemaError(msg)

        missing = [key for key in ("session_id", "from", "to", "msg_type", "seq", "payload") if key not in data]
        if missing:
            msg = "envelope misses fields"
            raise SchemaError(msg, missing)

        try:
            msg_type = MessageType(data["msg_type"])
        except ValueError:
            raise UnknownMessage(data["msg_type"]) from None

        session_id, seq, payload = data["session_id"], data["seq"], data["payload"]
        if not isinstance(session_id, str) or not isinstance(payload, str):
            msg = "session_id and payload must be strings"
            raise SchemaError(msg)

        if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
            msg = "seq must be a non-negative integer"
            raise SchemaError(msg, seq)

        try:
            raw = base64.b64decode(payload, validate=True)
        except binascii.Error as err:
            msg = "payload is not valid base64"
            raise SchemaError(msg) from err

        return cls(session_id, _address(data["from"]), _address(data["to"]), msg_type, seq, raw)


def _address(data: object) -> Address:
    if not isinstance(data, dict) or not isinstance(data.get("token"), str):
        msg = "address must be an object with role and token"
        raise SchemaError(msg, data)

    try:
        return Address(Role(data.get("role")), data["token"])
    except ValueError as err:
        msg = "unknown role"
        raise SchemaError(msg, data) from err


def canonical_json(data: object) -> bytes:
    return json.dumps(data, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def encode(env: Envelope) -> bytes:
    body = canonical_json(env.to_json())
    if len(body) > MAX_FRAME_SIZE:
        msg = "frame is too large"
        raise FrameError(msg, len(body))

    return _PREFIX.pack(len(body)) + body


def read_length(prefix: bytes) -> int:
    if len(prefix) != LENGTH_PREFIX_SIZE:
        msg = "truncated length prefix"
        raise FrameError(msg, len(prefix))

    (length,) = _PREFIX.unpack(prefix)
    if length > MAX_FRAME_SIZE:
        msg = "frame is too large"
        raise FrameError(msg, length)

    return t.cast("int", length)


def decode_body(body: bytes) -> Envelope:
    try:
        data = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        msg = "frame body is not UTF-8 JSON"
        raise SchemaError(msg) from err

    return Envelope.from_json(data)


def decode(data: bytes) -> Envelope:
    length = read_length(data[:LENGTH_PREFIX_SIZE])
    body = data[LENGTH_PREFIX_SIZE:]
    if len(body) != length:
        msg = "frame length doesn't match its prefix"
        raise FrameError(msg, length, len(body))

    return decode_body(body)
