import numpy as np
import pytest

from mediq.keyprotocol import (
    AliasMismatch,
    BlindedResponse,
    ClientKeypair,
    EncryptedBundle,
    IndexOutOfRange,
    KeySet,
    KeySetTooSmall,
    MalformedCandidate,
    MultipleDecryptable,
    NoDecryptableEntry,
    Selection,
    TamperedResponse,
    blind,
    generate_client_keypair,
    generate_key_set,
    multi_encrypt,
    open_bundle,
    open_slots,
    select_index,
    unwrap,
)

ALIAS = "a7f3c0de11223344"


@pytest.fixture
def keypair(rng: np.random.Generator) -> ClientKeypair:
    return generate_client_keypair(rng)


@pytest.fixture
def keyset(rng: np.random.Generator) -> KeySet:
    return generate_key_set(8, ALIAS, rng)


def _exchange(
    m: int,
    payload: bytes,
    rng: np.random.Generator,
) -> tuple[ClientKeypair, Selection, tuple[bytes, ...], bytes]:
    keyset = generate_key_set(m, ALIAS, rng)
    keypair = generate_client_keypair(rng)
    selection = select_index(keyset, rng)
    candidates = unwrap(keyset, blind(keyset, selection, keypair.public, rng))
    bundle = multi_encrypt(payload, candidates, rng, alias=ALIAS)

    return keypair, selection, candidates, open_bundle(bundle, keypair)


def test_generate_key_set_distinct(keyset: KeySet) -> None:
    assert keyset.m == 8
    assert len({key.material for key in keyset.keys}) == 8


@pytest.mark.parametrize("m", [pytest.param(1, id="one"), pytest.param(0, id="zero")])
def test_generate_key_set_too_small(m: int, rng: np.random.Generator) -> None:
    with pytest.raises(KeySetTooSmall):
        generate_key_set(m, ALIAS, rng)


def test_generate_key_set_deterministic() -> None:
    first = generate_key_set(8, ALIAS, np.random.default_rng(9))
    second = generate_key_set(8, ALIAS, np.random.default_rng(9))

    assert first == second


def test_select_index_uniform() -> None:
    rng = np.random.default_rng(2024)
    keyset = generate_key_set(2, ALIAS, rng)

    zeros = sum(select_index(keyset, rng).index == 0 for _ in range(10_000))

    assert 0.48 <= zeros / 10_000 <= 0.52


def test_select_index_deterministic(keyset: KeySet) -> None:
    assert select_index(keyset, np.random.default_rng(4)) == select_index(keyset, np.random.default_rng(4))


def test_selection_out_of_range() -> None:
    with pytest.raises(IndexOutOfRange):
        Selection(ALIAS, 8, 8)


def test_blind_places_client_key_at_selection(
    keyset: KeySet,
    keypair: ClientKeypair,
    rng: np.random.Generator,
) -> None:
    selection = Selection(ALIAS, 3, keyset.m)

    candidates = unwrap(keyset, blind(keyset, selection, keypair.public, rng))

    assert len(candidates) == keyset.m
    assert candidates[3] == keypair.public
    assert all(candidate != keypair.public for i, candidate in enumerate(candidates) if i != 3)
    assert len(set(candidates)) == keyset.m


def test_blind_alias_mismatch(keyset: KeySet, keypair: ClientKeypair, rng: np.random.Generator) -> None:
    with pytest.raises(AliasMismatch):
        blind(keyset, Selection("other", 0, keyset.m), keypair.public, rng)


@pytest.mark.parametrize("slot", [0, 5, 7])
@pytest.mark.parametrize(
    "position",
    [pytest.param(0, id="nonce"), pytest.param(20, id="ciphertext"), pytest.param(-1, id="tag")],
)
def test_unwrap_detects_tampering(
    keyset: KeySet,
    keypair: ClientKeypair,
    rng: np.random.Generator,
    slot: int,
    position: int,
) -> None:
    blinded = blind(keyset, select_index(keyset, rng), keypair.public, rng)
    mutated = bytearray(blinded.slots[slot])
    mutated[position] ^= 0x01
    slots = list(blinded.slots)
    slots[slot] = bytes(mutated)

    with pytest.raises(TamperedResponse):
        unwrap(keyset, BlindedResponse(ALIAS, tuple(slots)))


def test_unwrap_detects_swapped_slots(keyset: KeySet, keypair: ClientKeypair, rng: np.random.Generator) -> None:
    blinded = blind(keyset, select_index(keyset, rng), keypair.public, rng)
    slots = list(blinded.slots)
    slots[0], slots[1] = slots[1], slots[0]

    with pytest.raises(TamperedResponse):
        unwrap(keyset, BlindedResponse(ALIAS, tuple(slots)))


def test_unwrap_wrong_slot_count(keyset: KeySet, keypair: ClientKeypair, rng: np.random.Generator) -> None:
    blinded = blind(keyset, select_index(keyset, rng), keypair.public, rng)

    with pytest.raises(MalformedCandidate):
        unwrap(keyset, BlindedResponse(ALIAS, blinded.slots[:-1]))


def test_multi_encrypt_malformed_candidate(keypair: ClientKeypair, rng: np.random.Generator) -> None:
    with pytest.raises(MalformedCandidate):
        multi_encrypt(b"rows", [keypair.public, b"\x01" * 31], rng)


@pytest.mark.parametrize("m", [2, 4, 8, 16])
def test_roundtrip_large_payload(m: int) -> None:
    rng = np.random.default_rng(m)
    payload = rng.bytes(1 << 20)

    _, _, _, opened = _exchange(m, payload, rng)

    assert opened == payload


def test_roundtrip_empty_payload(rng: np.random.Generator) -> None:
    _, _, _, opened = _exchange(4, b"", rng)

    assert opened == b""


def test_open_bundle_unrelated_keypair(keyset: KeySet, keypair: ClientKeypair, rng: np.random.Generator) -> None:
    candidates = unwrap(keyset, blind(keyset, select_index(keyset, rng), keypair.public, rng))
    bundle = multi_encrypt(b"rows", candidates, rng, alias=ALIAS)
    stranger = generate_client_keypair(rng)

    assert open_slots(bundle, stranger) == {}
    with pytest.raises(NoDecryptableEntry):
        open_bundle(bundle, stranger)


def test_open_bundle_multiple_decryptable(keypair: ClientKeypair, rng: np.random.Generator) -> None:
    decoy = generate_client_keypair(rng).public
    bundle = multi_encrypt(b"rows", [keypair.public, decoy, keypair.public], rng, alias=ALIAS)

    with pytest.raises(MultipleDecryptable):
        open_bundle(bundle, keypair)


def test_open_bundle_bound_to_alias(keyset: KeySet, keypair: ClientKeypair, rng: np.random.Generator) -> None:
    candidates = unwrap(keyset, blind(keyset, select_index(keyset, rng), keypair.public, rng))
    bundle = multi_encrypt(b"rows", candidates, rng, alias=ALIAS)

    relabelled = EncryptedBundle("b0b0b0b0b0b0b0b0", bundle.payloads)

    with pytest.raises(NoDecryptableEntry):
        open_bundle(relabelled, keypair)


def test_exchange_deterministic() -> None:
    first = _exchange(4, b"rows", np.random.default_rng(77))
    second = _exchange(4, b"rows", np.random.default_rng(77))

    assert first[1:] == second[1:]
    assert first[0].public == second[0].public


@pytest.mark.slow
@pytest.mark.parametrize("m", [2, 8])
def test_exactly_one_decryptable(m: int) -> None:
    for seed in range(500):
        rng = np.random.default_rng([m, seed])
        keyset = generate_key_set(m, ALIAS, rng)
        keypair = generate_client_keypair(rng)
        candidates = unwrap(keyset, blind(keyset, select_index(keyset, rng), keypair.public, rng))

        opened = open_slots(multi_encrypt(b"rows", candidates, rng, alias=ALIAS), keypair)

        assert list(opened.values()) == [b"rows"]


@pytest.mark.slow
def test_selection_hiding() -> None:
    m, trials = 4, 2000
    hits = 0

    for seed in range(trials):
        rng = np.random.default_rng([1, seed])
        keyset = generate_key_set(m, ALIAS, rng)
        keypair = generate_client_keypair(rng)
        selection = select_index(keyset, rng)
        blinded = blind(keyset, selection, keypair.public, rng)
        candidates = unwrap(keyset, blinded)

        # provider view only: key set, blinded slots, candidates
        scores = [
            candidates[i][0] + blinded.slots[i][-1] + keyset.keys[i].material[0] + (candidates[i] < candidates[0])
            for i in range(m)
        ]
        guess = int(np.argmax(scores))
        hits += guess == selection.index

    assert 0.21 <= hits / trials <= 0.29
