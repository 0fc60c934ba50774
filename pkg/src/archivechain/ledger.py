"""Append-only hash-chained transaction ledger.

Rows carry a timestamp, an opaque canonical payload, the administrator's
signature over that payload, and two digests: a link to the previous row and
the hash of the row itself. The row hash is always computed over the binary
canonical encoding, never the tab-separated display form used on disk, so a
file round-trip can never change what gets hashed.

The same row machinery backs the main document chain and both certificate
chains; they differ only in payload type (tags 0/1/2 below).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

from . import crypto
from .crypto import SignatureValue, ZERO_DIGEST

MAX_CHUNK = 2**32 - 1

TAG_GENESIS = 0
TAG_FINAL_TX = 1
TAG_CERT_HASH = 2


class LedgerError(Exception):
    """Base class for ledger failures."""


class ChainAlreadyInitialized(LedgerError):
    pass


class UninitializedChain(LedgerError):
    pass


class NonMonotonicClock(LedgerError):
    pass


class InvalidTransaction(LedgerError):
    pass


class OversizePayload(LedgerError):
    pass


class EmptyChain(LedgerError):
    pass


# ---------------------------------------------------------------------------
# canonical encodings


def _pack_chunk(data: bytes) -> bytes:
    if len(data) > MAX_CHUNK:
        raise OversizePayload(f"{len(data)} bytes exceeds 4-byte length prefix")
    return struct.pack(">I", len(data)) + data


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated encoding")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def chunk(self) -> bytes:
        (n,) = struct.unpack(">I", self.take(4))
        return self.take(n)

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def done(self) -> None:
        if self.pos != len(self.data):
            raise ValueError("trailing bytes in encoding")


def canonical_row_bytes(
    timestamp: int, payload: bytes, signature: bytes, prev_hash: bytes
) -> bytes:
    """Injective binary image of a row; this is what the row hash covers."""
    if len(prev_hash) != crypto.DIGEST_SIZE:
        raise ValueError("prev_hash must be a 64-byte digest")
    return (
        struct.pack(">Q", timestamp)
        + _pack_chunk(payload)
        + _pack_chunk(signature)
        + prev_hash
    )


def decode_row_bytes(raw: bytes) -> tuple[int, bytes, bytes, bytes]:
    """Inverse of canonical_row_bytes."""
    r = _Reader(raw)
    timestamp = r.u64()
    payload = r.chunk()
    signature = r.chunk()
    prev_hash = r.take(crypto.DIGEST_SIZE)
    r.done()
    return timestamp, payload, signature, prev_hash


@lru_cache(maxsize=8192)
def _row_digest(row_bytes: bytes) -> bytes:
    # Verification workloads rehash identical rows constantly; memoizing the
    # pure digest keeps exhaustive audits cheap.
    return crypto.digest(row_bytes)


# ---------------------------------------------------------------------------
# payloads


@dataclass(frozen=True)
class GenesisPayload:
    """First row of a chain: a title, no document data, no backward link."""

    chain_title: str

    def encode(self) -> bytes:
        return bytes([TAG_GENESIS]) + _pack_chunk(self.chain_title.encode("utf-8"))


@dataclass(frozen=True)
class CertHashPayload:
    """Certificate-chain row body: the 64-byte hash of one certificate."""

    cert_hash: bytes

    def __post_init__(self) -> None:
        if len(self.cert_hash) != crypto.DIGEST_SIZE:
            raise ValueError("cert_hash must be a 64-byte digest")

    def encode(self) -> bytes:
        return bytes([TAG_CERT_HASH]) + self.cert_hash


@dataclass(frozen=True)
class FinalTransaction:
    """Archival record committed when a document reaches its final status.

    Carries both lifecycle timestamps, the document metadata, and the three
    participant signatures (creator, examiner, archiver). The row-level hash
    and backward link live on the enclosing LedgerRow.
    """

    tx_timestamp: int
    doc_created_at: int
    metadata: dict[str, str]
    creator_signature: SignatureValue
    examined_at: int
    examiner_signature: SignatureValue
    archiver_signature: SignatureValue

    def validate(self) -> None:
        if not self.doc_created_at <= self.examined_at <= self.tx_timestamp:
            raise InvalidTransaction(
                "timestamps must satisfy created <= examined <= transaction"
            )

    def encode(self) -> bytes:
        parts = [
            bytes([TAG_FINAL_TX]),
            struct.pack(">Q", self.tx_timestamp),
            struct.pack(">Q", self.doc_created_at),
            struct.pack(">I", len(self.metadata)),
        ]
        for key in sorted(self.metadata):
            parts.append(_pack_chunk(key.encode("utf-8")))
            parts.append(_pack_chunk(self.metadata[key].encode("utf-8")))
        parts.append(_pack_chunk(self.creator_signature.to_bytes()))
        parts.append(struct.pack(">Q", self.examined_at))
        parts.append(_pack_chunk(self.examiner_signature.to_bytes()))
        parts.append(_pack_chunk(self.archiver_signature.to_bytes()))
        return b"".join(parts)


Payload = GenesisPayload | FinalTransaction | CertHashPayload


def decode_payload(raw: bytes) -> Payload:
    if not raw:
        raise ValueError("empty payload")
    tag = raw[0]
    r = _Reader(raw[1:])
    if tag == TAG_GENESIS:
        title = r.chunk().decode("utf-8")
        r.done()
        return GenesisPayload(title)
    if tag == TAG_CERT_HASH:
        h = r.take(crypto.DIGEST_SIZE)
        r.done()
        return CertHashPayload(h)
    if tag == TAG_FINAL_TX:
        tx_timestamp = r.u64()
        doc_created_at = r.u64()
        (count,) = struct.unpack(">I", r.take(4))
        metadata = {}
        for _ in range(count):
            key = r.chunk().decode("utf-8")
            metadata[key] = r.chunk().decode("utf-8")
        creator_sig = SignatureValue.from_bytes(r.chunk())
        examined_at = r.u64()
        examiner_sig = SignatureValue.from_bytes(r.chunk())
        archiver_sig = SignatureValue.from_bytes(r.chunk())
        r.done()
        return FinalTransaction(
            tx_timestamp=tx_timestamp,
            doc_created_at=doc_created_at,
            metadata=metadata,
            creator_signature=creator_sig,
            examined_at=examined_at,
            examiner_signature=examiner_sig,
            archiver_signature=archiver_sig,
        )
    raise ValueError(f"unknown payload tag {tag}")


# ---------------------------------------------------------------------------
# rows and chains


@dataclass(frozen=True)
class LedgerRow:
    index: int
    timestamp: int
    payload: bytes
    payload_signature: SignatureValue
    signer_cert_id: int
    prev_hash: bytes
    row_hash: bytes

    def canonical_bytes(self) -> bytes:
        return canonical_row_bytes(
            self.timestamp,
            self.payload,
            self.payload_signature.to_bytes(),
            self.prev_hash,
        )

    def to_line(self) -> str:
        return "\t".join(
            (
                str(self.index),
                str(self.timestamp),
                self.payload.hex(),
                self.payload_signature.to_bytes().hex(),
                str(self.signer_cert_id),
                self.prev_hash.hex(),
                self.row_hash.hex(),
            )
        )

    @classmethod
    def from_line(cls, line: str) -> "LedgerRow":
        fields = line.rstrip("\n").split("\t")
        if len(fields) != 7:
            raise ValueError(f"expected 7 tab-separated fields, got {len(fields)}")
        return cls(
            index=int(fields[0]),
            timestamp=int(fields[1]),
            payload=bytes.fromhex(fields[2]),
            payload_signature=SignatureValue.from_bytes(bytes.fromhex(fields[3])),
            signer_cert_id=int(fields[4]),
            prev_hash=bytes.fromhex(fields[5]),
            row_hash=bytes.fromhex(fields[6]),
        )


def build_row(
    index: int,
    timestamp: int,
    payload: bytes,
    signer: crypto.KeyPair,
    signer_cert_id: int,
    prev_hash: bytes,
) -> LedgerRow:
    sig = crypto.sign(signer, payload)
    row_hash = _row_digest(
        canonical_row_bytes(timestamp, payload, sig.to_bytes(), prev_hash)
    )
    return LedgerRow(
        index=index,
        timestamp=timestamp,
        payload=payload,
        payload_signature=sig,
        signer_cert_id=signer_cert_id,
        prev_hash=prev_hash,
        row_hash=row_hash,
    )


@dataclass
class Chain:
    """In-memory row sequence with optional file persistence."""

    rows: list[LedgerRow] = field(default_factory=list)
    path: Path | None = None

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def head(self) -> LedgerRow:
        if not self.rows:
            raise EmptyChain("chain has no rows")
        return self.rows[-1]

    def _persist(self, row: LedgerRow) -> None:
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(row.to_line() + "\n")

    @classmethod
    def load(cls, path: Path) -> "Chain":
        rows: list[LedgerRow] = []
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rows.append(LedgerRow.from_line(line))
        return cls(rows=rows, path=path)


def genesis(
    chain: Chain,
    chain_title: str,
    admin_keypair: crypto.KeyPair,
    admin_cert_id: int,
    clock: Callable[[], int],
) -> LedgerRow:
    """Create row 0. Signed by the administrator; no document data."""
    if chain.rows:
        raise ChainAlreadyInitialized("chain already has rows")
    payload = GenesisPayload(chain_title).encode()
    row = build_row(0, clock(), payload, admin_keypair, admin_cert_id, ZERO_DIGEST)
    chain.rows.append(row)
    chain._persist(row)
    return row


def append(
    chain: Chain,
    tx: FinalTransaction | CertHashPayload,
    admin_keypair: crypto.KeyPair,
    admin_cert_id: int,
    clock: Callable[[], int],
    tx_validator: Callable[[FinalTransaction], None] | None = None,
) -> LedgerRow:
    """Append one transaction row. The caller must already be authorized."""
    if not chain.rows:
        raise UninitializedChain("genesis row required before append")
    if isinstance(tx, FinalTransaction):
        tx.validate()
        if tx_validator is not None:
            tx_validator(tx)
    timestamp = clock()
    prev = chain.head
    if timestamp < prev.timestamp:
        raise NonMonotonicClock(
            f"clock went backwards: {timestamp} < {prev.timestamp}"
        )
    row = build_row(
        len(chain.rows), timestamp, tx.encode(), admin_keypair, admin_cert_id,
        prev.row_hash,
    )
    chain.rows.append(row)
    chain._persist(row)
    return row


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class VerificationReport:
    valid: bool
    first_bad_index: int | None = None
    reason: str | None = None
    rows_checked: int = 0
    signatures_checked: bool = False


KeyResolver = Callable[[int], bytes | None]
VerifyFn = Callable[[bytes, bytes, SignatureValue], bool]


def _check_row(
    row: LedgerRow,
    index: int,
    prev: LedgerRow | None,
    key_resolver: KeyResolver | None,
    verify_fn: VerifyFn,
) -> str | None:
    if row.index != index:
        return "index mismatch"
    expected_prev = ZERO_DIGEST if prev is None else prev.row_hash
    if row.prev_hash != expected_prev:
        return "previous-hash link broken"
    if prev is not None and row.timestamp < prev.timestamp:
        return "timestamp decreased"
    try:
        canonical = row.canonical_bytes()
    except (ValueError, OversizePayload):
        return "unencodable row"
    if row.row_hash != _row_digest(canonical):
        return "row hash mismatch"
    try:
        payload = decode_payload(row.payload)
    except ValueError:
        return "undecodable payload"
    if index == 0 and not isinstance(payload, GenesisPayload):
        return "row 0 must be a genesis payload"
    if index > 0 and isinstance(payload, GenesisPayload):
        return "genesis payload after row 0"
    if isinstance(payload, FinalTransaction):
        try:
            payload.validate()
        except InvalidTransaction:
            return "transaction timestamps out of order"
    if key_resolver is not None:
        public = key_resolver(row.signer_cert_id)
        if public is None:
            return "unknown signer certificate"
        if not verify_fn(public, row.payload, row.payload_signature):
            return "payload signature invalid"
    return None


def verify_chain(
    chain: Chain | list[LedgerRow],
    key_resolver: KeyResolver | None = None,
    verify_fn: VerifyFn | None = None,
) -> VerificationReport:
    """Check every row; corruption is reported, never raised.

    Structural checks (hash, linkage, ordering) always run. Signature checks
    run when a key resolver is supplied, which full audits must do: the
    signer certificate id is the one persisted field outside the row hash.
    """
    rows = chain.rows if isinstance(chain, Chain) else chain
    vfn = verify_fn or crypto.verify
    prev: LedgerRow | None = None
    for i, row in enumerate(rows):
        reason = _check_row(row, i, prev, key_resolver, vfn)
        if reason is not None:
            return VerificationReport(
                valid=False,
                first_bad_index=i,
                reason=reason,
                rows_checked=i + 1,
                signatures_checked=key_resolver is not None,
            )
        prev = row
    return VerificationReport(
        valid=True,
        rows_checked=len(rows),
        signatures_checked=key_resolver is not None,
    )


def verify_head(
    chain: Chain | list[LedgerRow],
    key_resolver: KeyResolver | None = None,
    verify_fn: VerifyFn | None = None,
) -> bool:
    """Constant-work tail check run after each append."""
    rows = chain.rows if isinstance(chain, Chain) else chain
    if not rows:
        raise EmptyChain("cannot verify the head of an empty chain")
    prev = rows[-2] if len(rows) > 1 else None
    reason = _check_row(
        rows[-1], len(rows) - 1, prev, key_resolver, verify_fn or crypto.verify
    )
    return reason is None
