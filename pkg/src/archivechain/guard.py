"""Secret-file defense for the ledger file.

The last row of an append-only file is the one record the chain hash cannot
protect: whoever controls the host can swap it while keeping the previous
hash intact. The defense is a fast rolling signature of the whole file,
computed by an 8-bit linear automaton over GF(2) that alternates between two
companion matrices of primitive degree-8 polynomials. The signature is
stored in a file whose *name* is derived from the signature itself, so the
file can sit unremarked in a system directory; every append first replays
the signature and compares before extending the chain.

This is a tamper-evidence tripwire between two appends, not a cryptographic
hash; the chain digests remain the real integrity anchor.
"""

from __future__ import annotations

import datetime as _dt
import io
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import BinaryIO, Callable, Iterable

from filelock import FileLock

DEFAULT_SIGN_LEN = 257
DEFAULT_NAME_LEN = 16

STANDARD_POLYNOMIALS = ("100011101", "110101011")

_CHUNK_SIZE = 1 << 16


class GuardError(Exception):
    """Base class for guard failures."""


class BadParameters(GuardError):
    """sign_len must be odd and name_len must be smaller than it."""


class GuardAlarm(GuardError):
    """Ledger file changed between appends; nothing was written."""

    def __init__(self, expected_hex: str, computed_hex: str, message: str = ""):
        self.expected_hex = expected_hex
        self.computed_hex = computed_hex
        super().__init__(message or "ledger integrity signature mismatch")


class MissingSecretFile(GuardError):
    """Non-bootstrap append found no stored signature to compare against."""


class AppendRejected(GuardError):
    """The ledger-level append failed; the secret file was left untouched."""


@dataclass(frozen=True)
class GuardMatrix:
    """8x8 binary matrix, one byte per row; bit 7 is the leftmost column."""

    rows: bytes

    def __post_init__(self) -> None:
        if len(self.rows) != 8:
            raise ValueError("matrix needs exactly 8 row bytes")

    @classmethod
    def from_polynomial(cls, coefficients: str) -> "GuardMatrix":
        """Companion matrix of a degree-8 polynomial.

        `coefficients` is the 9-character string of coefficients from x^8
        down to the constant term. Rows 0-6 form the superdiagonal (row i has
        its single 1 in column i+1); row 7 packs the low eight coefficients
        with the constant term in the leftmost column.
        """
        if len(coefficients) != 9 or any(c not in "01" for c in coefficients):
            raise ValueError("need 9 binary coefficient characters")
        if coefficients[0] != "1":
            raise ValueError("polynomial must have degree 8")
        rows = [1 << (6 - i) for i in range(7)]
        row7 = 0
        for k in range(8):  # coefficient of x^k goes to bit (7-k)
            if coefficients[8 - k] == "1":
                row7 |= 1 << (7 - k)
        rows.append(row7)
        return cls(bytes(rows))


STANDARD_MATRICES = tuple(
    GuardMatrix.from_polynomial(p) for p in STANDARD_POLYNOMIALS
)


def one_step(matr: GuardMatrix, state: int, byte: int) -> int:
    """One automaton step: multiply the state vector by the matrix, add byte.

    The state byte is read MSB-first, so state bit (7-i) selects row i.
    """
    out = 0
    rows = matr.rows
    for i in range(8):
        if (state >> (7 - i)) & 1:
            out ^= rows[i]
    return out ^ byte


@lru_cache(maxsize=8)
def _action_table(matr: GuardMatrix) -> bytes:
    # one_step(m, s, 0) for all 256 states: turns the inner loop of the
    # streaming signature into a single table lookup per byte.
    return bytes(one_step(matr, s, 0) for s in range(256))


@dataclass(frozen=True)
class GuardSignature:
    sign_len: int
    name_len: int
    bytes: bytes
    filename: str


def derive_filename(sig_bytes: bytes, name_len: int) -> str:
    """Lowercase hex of the leading name_len signature bytes, no extension."""
    if name_len > len(sig_bytes):
        raise ValueError("name_len exceeds signature length")
    return sig_bytes[:name_len].hex()


def compute_signature(
    stream: bytes | BinaryIO,
    sign_len: int = DEFAULT_SIGN_LEN,
    name_len: int = DEFAULT_NAME_LEN,
    matrices: tuple[GuardMatrix, GuardMatrix] = STANDARD_MATRICES,
) -> GuardSignature:
    """Roll the automaton over the stream in one pass.

    The signature array starts zero-filled; each step overwrites one slot
    and the write position wraps modulo sign_len, so only the final state of
    every slot survives.
    """
    if sign_len <= 0 or sign_len % 2 == 0:
        raise BadParameters("sign_len must be an odd positive integer")
    if not 0 < name_len < sign_len:
        raise BadParameters("name_len must be positive and less than sign_len")

    if isinstance(stream, (bytes, bytearray)):
        reader: BinaryIO = io.BytesIO(stream)
    else:
        reader = stream

    tables = (_action_table(matrices[0]), _action_table(matrices[1]))
    signature = bytearray(sign_len)
    state = 0
    pos = 0
    matr_numb = 0
    while True:
        chunk = reader.read(_CHUNK_SIZE)
        if not chunk:
            break
        for byte in chunk:
            state = tables[matr_numb][state] ^ byte
            matr_numb ^= 1
            signature[pos] = state
            pos += 1
            if pos == sign_len:
                pos = 0
    sig_bytes = bytes(signature)
    return GuardSignature(
        sign_len=sign_len,
        name_len=name_len,
        bytes=sig_bytes,
        filename=derive_filename(sig_bytes, name_len),
    )


# ---------------------------------------------------------------------------
# secret-file lifecycle


def _secret_files(guard_dir: Path) -> list[Path]:
    return sorted(
        p
        for p in guard_dir.iterdir()
        if p.is_file() and not p.name.startswith(".") and p.suffix == ""
    )


def _ledger_bytes(ledger_file: Path) -> bytes:
    return ledger_file.read_bytes() if ledger_file.exists() else b""


def _utc_stamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="milliseconds")


def _log_alarm(
    audit_log: Path | None, expected_hex: str, computed_hex: str
) -> None:
    if audit_log is None:
        return
    audit_log.parent.mkdir(parents=True, exist_ok=True)
    with open(audit_log, "a", encoding="utf-8") as fh:
        fh.write(f"{_utc_stamp()}\t{expected_hex}\t{computed_hex}\n")


def integrity_check(
    ledger_file: Path,
    guard_dir: Path,
    sign_len: int = DEFAULT_SIGN_LEN,
    name_len: int = DEFAULT_NAME_LEN,
) -> tuple[bool, str, str]:
    """Compare the stored signature with a fresh one; no side effects.

    Returns (ok, stored_hex, computed_hex). Raises MissingSecretFile when
    there is no stored signature to compare against.
    """
    secrets = _secret_files(guard_dir)
    if len(secrets) != 1:
        raise MissingSecretFile(
            f"expected exactly one secret file in {guard_dir}, found {len(secrets)}"
        )
    stored = secrets[0].read_bytes()
    computed = compute_signature(_ledger_bytes(ledger_file), sign_len, name_len)
    ok = stored == computed.bytes and secrets[0].name == computed.filename
    return ok, stored.hex(), computed.bytes.hex()


@dataclass(frozen=True)
class AppendOutcome:
    row: object
    secret_path: Path
    bootstrap: bool


def guarded_append(
    ledger_file: Path,
    new_transaction: object,
    guard_dir: Path,
    appender: Callable[[object], object],
    sign_len: int = DEFAULT_SIGN_LEN,
    name_len: int = DEFAULT_NAME_LEN,
    audit_log: Path | None = None,
    alarm_sinks: Iterable[Callable[[str, str], None]] = (),
) -> AppendOutcome:
    """Check, append, re-sign: the whole sequence under one exclusive lock.

    1. Recompute the signature of the current ledger file and compare it
       with the stored secret file (content and derived name).
    2. On mismatch raise GuardAlarm and append nothing.
    3. On match run the appender, delete the old secret file, and write the
       new signature under its newly derived name.

    The very first record bootstraps: with no ledger and no secret file the
    comparison is skipped and the first signature is simply written out.
    """
    guard_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(guard_dir / ".guard.lock"))
    with lock:
        current = _ledger_bytes(ledger_file)
        secrets = _secret_files(guard_dir)
        bootstrap = not current and not secrets
        old_secret: Path | None = None
        if not bootstrap:
            if not secrets:
                raise MissingSecretFile(f"no secret file in {guard_dir}")
            if len(secrets) > 1:
                computed = compute_signature(current, sign_len, name_len)
                hexes = ",".join(p.name for p in secrets)
                _log_alarm(audit_log, hexes, computed.bytes.hex())
                for sink in alarm_sinks:
                    sink(hexes, computed.bytes.hex())
                raise GuardAlarm(
                    hexes, computed.bytes.hex(), "multiple secret files present"
                )
            old_secret = secrets[0]
            stored = old_secret.read_bytes()
            computed = compute_signature(current, sign_len, name_len)
            if stored != computed.bytes or old_secret.name != computed.filename:
                _log_alarm(audit_log, stored.hex(), computed.bytes.hex())
                for sink in alarm_sinks:
                    sink(stored.hex(), computed.bytes.hex())
                raise GuardAlarm(stored.hex(), computed.bytes.hex())

        try:
            row = appender(new_transaction)
        except GuardError:
            raise
        except Exception as exc:
            raise AppendRejected(str(exc)) from exc

        if old_secret is not None:
            old_secret.unlink()
        new_sig = compute_signature(_ledger_bytes(ledger_file), sign_len, name_len)
        secret_path = guard_dir / new_sig.filename
        secret_path.write_bytes(new_sig.bytes)
        return AppendOutcome(row=row, secret_path=secret_path, bootstrap=bootstrap)
