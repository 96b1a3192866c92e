from __future__ import annotations

import base64
import binascii
import json
import typing as t
from dataclasses import dataclass

from mediq.datastore import Query, QueryError
from mediq.keyprotocol import BlindedResponse, EncryptedBundle, KeySet, SymmetricKey
from mediq.transport.envelope import SchemaError, canonical_json


def _b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def _unb64_list(data: t.Mapping[str, object], key: str) -> tuple[bytes, ...]:
    items = data.get(key)
    if not isinstance(items, list) or not all(isinstance(item, str) for item in items):
        msg = "expected a list of base64 strings"
        raise SchemaError(msg, key)

    try:
        return tuple(base64.b64decode(item, validate=True) for item in items)
    except binascii.Error as err:
        msg = "invalid base64 item"
        raise SchemaError(msg, key) from err


def _load(payload: bytes) -> t.Mapping[str, object]:
    try:
        data = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        msg = "payload is not UTF-8 JSON"
        raise SchemaError(msg) from err

    if not isinstance(data, dict):
        msg = "payload must be a JSON object"
        raise SchemaError(msg)

    return t.cast("t.Mapping[str, object]", data)


def _str(data: t.Mapping[str, object], key: str) -> str:
    value = data.get(key)
    if not isinstance(value, str):
        msg = "expected a string field"
        raise SchemaError(msg, key)
    return value


def _int(data: t.Mapping[str, object], key: str) -> int:
    value = data.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        msg = "expected an integer field"
        raise SchemaError(msg, key)
    return value


@dataclass(frozen=True)
class QueryPayload:
    query: Query
    m: int

    def encode(self) -> bytes:
        return canonical_json({"query": self.query.to_json(), "m": self.m})

    @classmethod
    def decode(cls, payload: bytes) -> QueryPayload:
        data = _load(payload)
        query = data.get("query")
        if not isinstance(query, dict):
            msg = "query payload needs a query object"
            raise SchemaError(msg)

        try:
            return cls(Query.from_json(query), _int(data, "m"))
        except QueryError as err:
            msg = "invalid query"
            raise SchemaError(msg) from err


@dataclass(frozen=True)
class AckPayload:
    def encode(self) -> bytes:
        return canonical_json({})

    @classmethod
    def decode(cls, payload: bytes) -> AckPayload:
        _load(payload)
        return cls()


@dataclass(frozen=True)
class CountPayload:
    """`n` for the client; provider-bound counts also carry the provider's session alias."""

    n: int
    alias: t.Optional[str] = None

    def encode(self) -> bytes:
        data: dict[str, object] = {"n": self.n}
        if self.alias is not None:
            data["alias"] = self.alias
        return canonical_json(data)

    @classmethod
    def decode(cls, payload: bytes) -> CountPayload:
        data = _load(payload)
        alias = data.get("alias")
        return cls(_int(data, "n"), alias if isinstance(alias, str) else None)


def encode_key_set(keyset: KeySet) -> bytes:
    return canonical_json(
        {"alias": keyset.alias, "m": keyset.m, "keys": [_b64(key.material) for key in keyset.keys]}
    )


def decode_key_set(payload: bytes) -> KeySet:
    data = _load(payload)
    keys = _unb64_list(data, "keys")
    if len(keys) != _int(data, "m"):
        msg = "key count doesn't match m"
        raise SchemaError(msg)

    return KeySet(_str(data, "alias"), tuple(SymmetricKey(key) for key in keys))


def encode_blinded(blinded: BlindedResponse) -> bytes:
    return canonical_json({"alias": blinded.alias, "m": len(blinded.slots), "slots": [_b64(s) for s in blinded.slots]})


def decode_blinded(payload: bytes) -> BlindedResponse:
    data = _load(payload)
    return BlindedResponse(_str(data, "alias"), _unb64_list(data, "slots"))


def encode_bundle(bundle: EncryptedBundle) -> bytes:
    return canonical_json(
        {"alias": bundle.alias, "m": len(bundle.payloads), "payloads": [_b64(p) for p in bundle.payloads]}
    )


def decode_bundle(payload: bytes) -> EncryptedBundle:
    data = _load(payload)
    return EncryptedBundle(_str(data, "alias"), _unb64_list(data, "payloads"))


def payload_alias(payload: bytes) -> t.Optional[str]:
    """Alias field of a key set, blinded response or bundle payload, if any."""

    try:
        alias = _load(payload).get("alias")
    except SchemaError:
        return None

    return alias if isinstance(alias, str) else None


@dataclass(frozen=True)
class AbortPayload:
    reason: str

    def encode(self) -> bytes:
        return canonical_json({"reason": self.reason})

    @classmethod
    def decode(cls, payload: bytes) -> AbortPayload:
        return cls(_str(_load(payload), "reason"))
