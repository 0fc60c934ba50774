"""Ledger row encoding, chaining discipline, and verification."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from archivechain import crypto, ledger
from tests.conftest import StepClock


@pytest.fixture
def admin(keypair):
    return keypair


def make_tx(signature, base_ts=1_760_000_000_000, **meta):
    return ledger.FinalTransaction(
        tx_timestamp=base_ts + 2,
        doc_created_at=base_ts,
        metadata={"title": "doc", "author": "a", "organization": "o", **meta},
        creator_signature=signature,
        examined_at=base_ts + 1,
        examiner_signature=signature,
        archiver_signature=signature,
    )


def build_chain(tmp_path, admin, rows=5, clock=None):
    clock = clock or StepClock()
    chain = ledger.Chain.load(tmp_path / "ledger.tsv")
    ledger.genesis(chain, "test ledger", admin, 1, clock)
    signature = crypto.sign(admin, b"inner")
    for i in range(rows - 1):
        ledger.append(
            chain, make_tx(signature, clock.now, seq=str(i)), admin, 1, clock
        )
    return chain


# -- canonical encoding ------------------------------------------------------


def test_all_zero_row_layout():
    encoded = ledger.canonical_row_bytes(0, b"", b"", crypto.ZERO_DIGEST)
    assert encoded == bytes(80)


def test_length_prefixes_keep_splits_apart():
    a = ledger.canonical_row_bytes(0, b"ab", b"c", crypto.ZERO_DIGEST)
    b = ledger.canonical_row_bytes(0, b"a", b"bc", crypto.ZERO_DIGEST)
    assert a != b


def test_row_bytes_roundtrip_randomized():
    rng = random.Random(99)
    for _ in range(1000):
        fields = (
            rng.randrange(2**48),
            rng.randbytes(rng.randrange(0, 300)),
            rng.randbytes(rng.randrange(0, 160)),
            rng.randbytes(64),
        )
        assert ledger.decode_row_bytes(ledger.canonical_row_bytes(*fields)) == fields


@settings(max_examples=200, deadline=None)
@given(
    timestamp=st.integers(min_value=0, max_value=2**63 - 1),
    payload=st.binary(max_size=200),
    signature=st.binary(max_size=200),
    prev_hash=st.binary(min_size=64, max_size=64),
)
def test_row_bytes_roundtrip_property(timestamp, payload, signature, prev_hash):
    encoded = ledger.canonical_row_bytes(timestamp, payload, signature, prev_hash)
    assert ledger.decode_row_bytes(encoded) == (
        timestamp, payload, signature, prev_hash,
    )


def test_bad_prev_hash_length_rejected():
    with pytest.raises(ValueError):
        ledger.canonical_row_bytes(0, b"", b"", b"\x00" * 63)


# -- payload encodings --------------------------------------------------------


def test_genesis_payload_roundtrip():
    payload = ledger.GenesisPayload("archive title with ümlauts and 漢字")
    decoded = ledger.decode_payload(payload.encode())
    assert decoded == payload


def test_final_transaction_roundtrip(keypair):
    signature = crypto.sign(keypair, b"x")
    tx = make_tx(signature, meta_extra="värde £ θ")
    decoded = ledger.decode_payload(tx.encode())
    assert decoded == tx


def test_cert_hash_payload_roundtrip():
    payload = ledger.CertHashPayload(crypto.digest(b"cert"))
    assert ledger.decode_payload(payload.encode()) == payload


def test_unknown_tag_rejected():
    with pytest.raises(ValueError):
        ledger.decode_payload(b"\x77abc")


# -- genesis and append -------------------------------------------------------


def test_genesis_builds_valid_single_row_chain(tmp_path, admin):
    chain = ledger.Chain.load(tmp_path / "l.tsv")
    row = ledger.genesis(chain, "archive", admin, 1, StepClock())
    assert row.index == 0 and row.prev_hash == crypto.ZERO_DIGEST
    report = ledger.verify_chain(chain, key_resolver=lambda _: admin.public_bytes())
    assert report.valid and report.rows_checked == 1


def test_genesis_payload_carries_no_document_fields(tmp_path, admin):
    chain = ledger.Chain.load(tmp_path / "l.tsv")
    row = ledger.genesis(chain, "archive", admin, 1, StepClock())
    payload = ledger.decode_payload(row.payload)
    assert isinstance(payload, ledger.GenesisPayload)
    assert payload == ledger.GenesisPayload("archive")


def test_second_genesis_rejected(tmp_path, admin):
    chain = ledger.Chain.load(tmp_path / "l.tsv")
    ledger.genesis(chain, "archive", admin, 1, StepClock())
    with pytest.raises(ledger.ChainAlreadyInitialized):
        ledger.genesis(chain, "archive", admin, 1, StepClock())


def test_append_requires_genesis(tmp_path, admin):
    chain = ledger.Chain.load(tmp_path / "l.tsv")
    signature = crypto.sign(admin, b"x")
    with pytest.raises(ledger.UninitializedChain):
        ledger.append(chain, make_tx(signature), admin, 1, StepClock())


def test_append_links_to_previous_row(tmp_path, admin):
    chain = build_chain(tmp_path, admin, rows=2)
    assert len(chain) == 2
    assert chain.rows[1].prev_hash == chain.rows[0].row_hash


def test_hundred_appends_verify(tmp_path, admin):
    chain = build_chain(tmp_path, admin, rows=100)
    report = ledger.verify_chain(chain, key_resolver=lambda _: admin.public_bytes())
    assert report.valid and report.rows_checked == 100


def test_append_rejects_bad_transaction_ordering(tmp_path, admin):
    chain = build_chain(tmp_path, admin, rows=1)
    signature = crypto.sign(admin, b"x")
    tx = ledger.FinalTransaction(
        tx_timestamp=100, doc_created_at=50, metadata={},
        creator_signature=signature, examined_at=200,
        examiner_signature=signature, archiver_signature=signature,
    )
    with pytest.raises(ledger.InvalidTransaction):
        ledger.append(chain, tx, admin, 1, StepClock())


def test_append_rejects_backwards_clock(tmp_path, admin):
    clock = StepClock()
    chain = build_chain(tmp_path, admin, rows=2, clock=clock)
    signature = crypto.sign(admin, b"x")
    backwards = lambda: chain.head.timestamp - 10
    with pytest.raises(ledger.NonMonotonicClock):
        ledger.append(chain, make_tx(signature, clock.now), admin, 1, backwards)


def test_equal_timestamps_allowed(tmp_path, admin):
    frozen = lambda: 1_760_000_000_000
    chain = ledger.Chain.load(tmp_path / "l.tsv")
    ledger.genesis(chain, "t", admin, 1, frozen)
    signature = crypto.sign(admin, b"x")
    ledger.append(chain, make_tx(signature, 1_759_000_000_000), admin, 1, frozen)
    assert ledger.verify_chain(chain).valid


# -- verification -------------------------------------------------------------


def test_empty_chain_is_valid():
    assert ledger.verify_chain([]).valid


def test_payload_mutation_detected_at_right_row(tmp_path, admin):
    chain = build_chain(tmp_path, admin, rows=10)
    for k in (1, 5, 9):
        rows = list(chain.rows)
        tampered = bytearray(rows[k].payload)
        tampered[3] ^= 0x01
        rows[k] = ledger.LedgerRow(
            index=rows[k].index, timestamp=rows[k].timestamp,
            payload=bytes(tampered),
            payload_signature=rows[k].payload_signature,
            signer_cert_id=rows[k].signer_cert_id,
            prev_hash=rows[k].prev_hash, row_hash=rows[k].row_hash,
        )
        report = ledger.verify_chain(rows)
        assert not report.valid and report.first_bad_index == k


def test_row_deletion_detected(tmp_path, admin):
    chain = build_chain(tmp_path, admin, rows=10)
    rows = chain.rows[:4] + chain.rows[5:]
    report = ledger.verify_chain(rows)
    assert not report.valid and report.first_bad_index == 4


def test_verify_head(tmp_path, admin):
    chain = build_chain(tmp_path, admin, rows=3)
    assert ledger.verify_head(chain)
    # tamper the tail payload
    tail = chain.rows[-1]
    chain.rows[-1] = ledger.LedgerRow(
        index=tail.index, timestamp=tail.timestamp,
        payload=tail.payload + b"!", payload_signature=tail.payload_signature,
        signer_cert_id=tail.signer_cert_id, prev_hash=tail.prev_hash,
        row_hash=tail.row_hash,
    )
    assert not ledger.verify_head(chain)
    # truncating back to genesis leaves a self-consistent chain
    assert ledger.verify_head(chain.rows[:1])
    with pytest.raises(ledger.EmptyChain):
        ledger.verify_head([])


def test_unknown_signer_detected(tmp_path, admin):
    chain = build_chain(tmp_path, admin, rows=3)
    report = ledger.verify_chain(
        chain, key_resolver=lambda cid: None
    )
    assert not report.valid and report.first_bad_index == 0
    assert report.reason == "unknown signer certificate"


def test_wrong_signer_key_detected(tmp_path, admin, other_keypair):
    chain = build_chain(tmp_path, admin, rows=3)
    report = ledger.verify_chain(
        chain, key_resolver=lambda cid: other_keypair.public_bytes()
    )
    assert not report.valid and report.reason == "payload signature invalid"


# -- persistence ---------------------------------------------------------------


def test_file_roundtrip_preserves_rows(tmp_path, admin):
    chain = build_chain(tmp_path, admin, rows=6)
    reloaded = ledger.Chain.load(tmp_path / "ledger.tsv")
    assert reloaded.rows == chain.rows
    assert ledger.verify_chain(reloaded).valid


def test_line_format_is_seven_tab_separated_fields(tmp_path, admin):
    chain = build_chain(tmp_path, admin, rows=2)
    for line in (tmp_path / "ledger.tsv").read_text().splitlines():
        assert len(line.split("\t")) == 7


def test_malformed_line_rejected():
    with pytest.raises(ValueError):
        ledger.LedgerRow.from_line("1\t2\t3")
