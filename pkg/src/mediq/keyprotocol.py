"""
Oblivious key selection and multi-encryption.

1. A provider generates a key set of `m` symmetric keys and offers it to the client.
2. The client secretly selects index `j` and blinds: slot `j` carries its real public key encrypted under `key_j`,
   every other slot `i` carries a freshly generated decoy public key encrypted under `key_i`.
3. The provider unwraps all `m` slots and gets `m` identically distributed public keys.
4. The provider encrypts the same payload to every candidate key; only the client can open exactly one entry.

Every random byte (keys, nonces, ephemeral keys) comes from the seeded random source so that sessions are replayable.
Such a source is not a cryptographically secure generator: the protocol objects are reproducible by construction.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat
from typing_extensions import override

from mediq.abc import MediqError

if t.TYPE_CHECKING:
    import numpy as np

KEY_SIZE = 32
NONCE_SIZE = 12
PUBLIC_KEY_SIZE = 32
BUNDLE_INFO = b"mediq/bundle/v1"


class KeyProtocolError(MediqError):
    pass


class KeySetTooSmall(KeyProtocolError):
    pass


class IndexOutOfRange(KeyProtocolError):
    pass


class AliasMismatch(KeyProtocolError):
    pass


class TamperedResponse(KeyProtocolError):
    pass


class MalformedCandidate(KeyProtocolError):
    pass


class NoDecryptableEntry(KeyProtocolError):
    pass


class MultipleDecryptable(KeyProtocolError):
    pass


@dataclass(frozen=True)
class SymmetricKey:
    material: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.material) != KEY_SIZE:
            msg = f"symmetric key must be {KEY_SIZE} bytes"
            raise KeyProtocolError(msg, len(self.material))


@dataclass(frozen=True)
class KeySet:
    alias: str
    keys: tuple[SymmetricKey, ...]

    def __post_init__(self) -> None:
        if len(self.keys) < 2:  # noqa: PLR2004
            msg = "key set needs at least 2 keys to hide the selection"
            raise KeySetTooSmall(msg, len(self.keys))

        if len({key.material for key in self.keys}) != len(self.keys):
            msg = "keys in a set must be pairwise distinct"
            raise KeyProtocolError(msg, self.alias)

    @property
    def m(self) -> int:
        return len(self.keys)


@dataclass(frozen=True)
class ClientKeypair:
    public: bytes
    private: X25519PrivateKey = field(repr=False, compare=False)

    @classmethod
    def from_private_bytes(cls, raw: bytes) -> ClientKeypair:
        private = X25519PrivateKey.from_private_bytes(raw)
        return cls(private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw), private)


@dataclass(frozen=True)
class Selection:
    alias: str
    index: int
    m: int

    def __post_init__(self) -> None:
        if not 0 <= self.index < self.m:
            msg = "selected index is out of the key set range"
            raise IndexOutOfRange(msg, self.index, self.m)


@dataclass(frozen=True)
class BlindedResponse:
    alias: str
    slots: tuple[bytes, ...]


@dataclass(frozen=True)
class EncryptedBundle:
    alias: str
    payloads: tuple[bytes, ...]

    @override
    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(alias={self.alias!r}, m={len(self.payloads)})"


def _slot_aad(alias: str, index: int) -> bytes:
    return f"{alias}:{index}".encode()


def generate_client_keypair(rng: np.random.Generator) -> ClientKeypair:
    return ClientKeypair.from_private_bytes(rng.bytes(KEY_SIZE))


def generate_key_set(m: int, alias: str, rng: np.random.Generator) -> KeySet:
    if m < 2:  # noqa: PLR2004
        msg = "key set needs at least 2 keys to hide the selection"
        raise KeySetTooSmall(msg, m)

    materials: list[bytes] = []
    while len(materials) < m:
        material = rng.bytes(KEY_SIZE)
        if material not in materials:
            materials.append(material)

    return KeySet(alias, tuple(SymmetricKey(material) for material in materials))


def select_index(keyset: KeySet, rng: np.random.Generator) -> Selection:
    return Selection(keyset.alias, int(rng.integers(0, keyset.m)), keyset.m)


def blind(keyset: KeySet, sel: Selection, client_pub: bytes, rng: np.random.Generator) -> BlindedResponse:
    if sel.alias != keyset.alias or sel.m != keyset.m:
        raise AliasMismatch(sel.alias, keyset.alias)

    slots: list[bytes] = []
    for i, key in enumerate(keyset.keys):
        # decoys are drawn for every slot, so the random stream doesn't depend on the secret index
        decoy = generate_client_keypair(rng).public
        public = client_pub if i == sel.index else decoy
        nonce = rng.bytes(NONCE_SIZE)
        slots.append(nonce + ChaCha20Poly1305(key.material).encrypt(nonce, public, _slot_aad(keyset.alias, i)))

    return BlindedResponse(keyset.alias, tuple(slots))


def _check_candidate(candidate: bytes) -> X25519PublicKey:
    if len(candidate) != PUBLIC_KEY_SIZE:
        msg = "candidate is not a raw X25519 public key"
        raise MalformedCandidate(msg, len(candidate))

    try:
        return X25519PublicKey.from_public_bytes(candidate)
    except ValueError as err:
        msg = "candidate is not a raw X25519 public key"
        raise MalformedCandidate(msg) from err


def unwrap(keyset: KeySet, blinded: BlindedResponse) -> tuple[bytes, ...]:
    if blinded.alias != keyset.alias:
        raise AliasMismatch(blinded.alias, keyset.alias)

    if len(blinded.slots) != keyset.m:
        msg = "blinded response has a wrong slot count"
        raise MalformedCandidate(msg, len(blinded.slots), keyset.m)

    candidates: list[bytes] = []
    for i, (key, slot) in enumerate(zip(keyset.keys, blinded.slots)):
        nonce, ciphertext = slot[:NONCE_SIZE], slot[NONCE_SIZE:]
        try:
            candidate = ChaCha20Poly1305(key.material).decrypt(nonce, ciphertext, _slot_aad(keyset.alias, i))
        except (InvalidTag, ValueError) as err:
            msg = "blinded slot failed authentication"
            raise TamperedResponse(msg, keyset.alias, i) from err

        candidates.append(candidate)

    for candidate in candidates:
        _check_candidate(candidate)

    return tuple(candidates)


def _derive_key(shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    hkdf = HKDF(algorithm=hashes.SHA256(), length=KEY_SIZE, salt=None, info=BUNDLE_INFO + eph_pub + recipient_pub)
    return hkdf.derive(shared)


def seal(payload: bytes, recipient: bytes, rng: np.random.Generator, aad: bytes = b"") -> bytes:
    """Hybrid encryption to a raw X25519 public key: `eph_pub || nonce || aead(payload)`."""

    recipient_key = _check_candidate(recipient)
    ephemeral = X25519PrivateKey.from_private_bytes(rng.bytes(KEY_SIZE))
    eph_pub = ephemeral.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    nonce = rng.bytes(NONCE_SIZE)

    try:
        shared = ephemeral.exchange(recipient_key)
    except ValueError as err:
        msg = "candidate is a low order point"
        raise MalformedCandidate(msg) from err

    key = _derive_key(shared, eph_pub, recipient)
    return eph_pub + nonce + ChaCha20Poly1305(key).encrypt(nonce, payload, eph_pub + aad)


def try_open(sealed: bytes, keypair: ClientKeypair, aad: bytes = b"") -> t.Optional[bytes]:
    """Return the plaintext, or `None` when the entry wasn't sealed to this keypair."""

    eph_pub = sealed[:PUBLIC_KEY_SIZE]
    nonce = sealed[PUBLIC_KEY_SIZE : PUBLIC_KEY_SIZE + NONCE_SIZE]
    ciphertext = sealed[PUBLIC_KEY_SIZE + NONCE_SIZE :]

    try:
        shared = keypair.private.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        key = _derive_key(shared, eph_pub, keypair.public)
        return ChaCha20Poly1305(key).decrypt(nonce, ciphertext, eph_pub + aad)

    except (InvalidTag, ValueError):
        return None


def multi_encrypt(
    payload: bytes,
    candidates: t.Sequence[bytes],
    rng: np.random.Generator,
    alias: str = "",
) -> EncryptedBundle:
    if len(candidates) < 2:  # noqa: PLR2004
        msg = "bundle needs at least 2 candidates"
        raise MalformedCandidate(msg, len(candidates))

    return EncryptedBundle(
        alias,
        tuple(seal(payload, candidate, rng, _slot_aad(alias, i)) for i, candidate in enumerate(candidates)),
    )


def open_slots(bundle: EncryptedBundle, keypair: ClientKeypair) -> dict[int, bytes]:
    """Plaintexts of every bundle slot the keypair opens, by slot index."""

    opened: dict[int, bytes] = {}
    for i, sealed in enumerate(bundle.payloads):
        plaintext = try_open(sealed, keypair, _slot_aad(bundle.alias, i))
        if plaintext is not None:
            opened[i] = plaintext

    return opened


def open_bundle(bundle: EncryptedBundle, keypair: ClientKeypair) -> bytes:
    opened = list(open_slots(bundle, keypair).values())

    if not opened:
        msg = "no bundle entry is addressed to this keypair"
        raise NoDecryptableEntry(msg, bundle.alias)

    if len(opened) > 1:
        msg = "more than one bundle entry opens with this keypair"
        raise MultipleDecryptable(msg, bundle.alias, len(opened))

    return opened[0]
