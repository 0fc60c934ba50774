"""Certification authority: accounts, roles, certificates, and the two
certificate chains.

Issued certificates are hashed into an all-certificates chain; revocations
(re-issue, expiry, demotion to unconfirmed) land in a revoked-certificates
chain built the same way. Validity of a presented certificate is decided by
looking its hash up in the revoked chain first, then the all chain — the
revoked chain always wins.

Account data lives in an embedded sqlite store; the chains are append-only
files in the ledger row format. Private keys are handed out exactly once at
issuance and never stored.
"""

from __future__ import annotations

import secrets as _secrets
import sqlite3
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

from .. import crypto, ledger

NO_EXPIRY = 2**63 - 1
DEFAULT_CERT_LIFETIME_MS = 365 * 24 * 3600 * 1000
DEFAULT_PASSWORD_ITERATIONS = 1000
MIN_PASSWORD_LENGTH = 8
SALT_BYTES = 16


def now_ms() -> int:
    return time.time_ns() // 1_000_000


class Role(str, Enum):
    UNCONFIRMED_USER = "UnconfirmedUser"
    USER = "User"
    EXPERT = "Expert"
    ADMINISTRATOR = "Administrator"
    CA_ADMINISTRATOR = "CAAdministrator"


class Validity(str, Enum):
    VALID = "Valid"
    REVOKED = "Revoked"
    UNKNOWN = "Unknown"


class CaError(Exception):
    pass


class DuplicateUsername(CaError):
    pass


class WeakPassword(CaError):
    pass


class Unauthorized(CaError):
    pass


class UnknownUser(CaError):
    pass


class UnconfirmedHolder(CaError):
    pass


@dataclass(frozen=True)
class Profile:
    first_name: str
    last_name: str
    organization: str
    email: str

    @property
    def full_name(self) -> str:
        return f"{self.first_name} {self.last_name}".strip()


@dataclass(frozen=True)
class UserAccount:
    user_id: int
    username: str
    profile: Profile
    role: Role
    active_cert_id: int | None
    prompted_for_renewal: bool


_CERT_FIELDS = (
    "certificate_id",
    "holder_id",
    "holder_name",
    "holder_email",
    "holder_organization",
    "holder_category",
    "public_key",
    "expires_at",
    "keygen_algorithm",
    "ca_metadata",
)


@dataclass(frozen=True)
class Certificate:
    """Ten-field public certificate; the text form is the hashed artifact."""

    cert_id: int
    holder_id: int
    holder_name: str
    holder_email: str
    holder_org: str
    holder_category: Role
    public_key: bytes
    expires_at: int
    keygen_algorithm: str
    ca_metadata: str

    def __post_init__(self) -> None:
        if len(self.public_key) != crypto.PUBLIC_KEY_BYTES:
            raise ValueError("public key must serialize to 128 bytes")
        for value in (
            self.holder_name,
            self.holder_email,
            self.holder_org,
            self.ca_metadata,
            self.keygen_algorithm,
        ):
            if "\n" in value:
                raise ValueError("certificate fields must not contain newlines")

    def canonical_text(self) -> str:
        values = (
            str(self.cert_id),
            str(self.holder_id),
            self.holder_name,
            self.holder_email,
            self.holder_org,
            self.holder_category.value,
            self.public_key.hex(),
            str(self.expires_at),
            self.keygen_algorithm,
            self.ca_metadata,
        )
        return "".join(
            f"{name}: {value}\n" for name, value in zip(_CERT_FIELDS, values)
        )

    def cert_hash(self) -> bytes:
        return crypto.digest(self.canonical_text().encode("utf-8"))

    @classmethod
    def from_text(cls, text: str) -> "Certificate":
        lines = text.splitlines()
        if len(lines) != len(_CERT_FIELDS):
            raise ValueError(f"certificate must have {len(_CERT_FIELDS)} lines")
        values = {}
        for expected, line in zip(_CERT_FIELDS, lines):
            name, sep, value = line.partition(": ")
            if not sep or name != expected:
                raise ValueError(f"malformed certificate line: {line!r}")
            values[name] = value
        return cls(
            cert_id=int(values["certificate_id"]),
            holder_id=int(values["holder_id"]),
            holder_name=values["holder_name"],
            holder_email=values["holder_email"],
            holder_org=values["holder_organization"],
            holder_category=Role(values["holder_category"]),
            public_key=bytes.fromhex(values["public_key"]),
            expires_at=int(values["expires_at"]),
            keygen_algorithm=values["keygen_algorithm"],
            ca_metadata=values["ca_metadata"],
        )


@dataclass(frozen=True)
class IssuedCredentials:
    """Returned to the holder exactly once; the CA keeps no private keys."""

    certificate: Certificate
    private_key: bytes
    append_private_key: bytes | None = None
    append_public_key: bytes | None = None


def hash_password(password: str, salt: bytes, iterations: int) -> bytes:
    value = crypto.digest(salt + password.encode("utf-8"))
    for _ in range(iterations - 1):
        value = crypto.digest(salt + value)
    return value


def append_key_record_bytes(cert_id: int, public_key: bytes) -> bytes:
    return b"append-key\x00" + str(cert_id).encode() + b"\x00" + public_key


_SCHEMA = """
CREATE TABLE IF NOT EXISTS accounts (
    user_id INTEGER PRIMARY KEY AUTOINCREMENT,
    username TEXT UNIQUE NOT NULL,
    password_hash BLOB NOT NULL,
    salt BLOB NOT NULL,
    first_name TEXT NOT NULL,
    last_name TEXT NOT NULL,
    organization TEXT NOT NULL,
    email TEXT NOT NULL,
    role TEXT NOT NULL,
    active_cert_id INTEGER,
    prompted INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS certificates (
    cert_id INTEGER PRIMARY KEY AUTOINCREMENT,
    holder_id INTEGER NOT NULL,
    text TEXT NOT NULL,
    hash BLOB NOT NULL,
    expires_at INTEGER NOT NULL,
    status TEXT NOT NULL,
    append_public_key BLOB
);
"""


class CertificationAuthority:
    """Single trusted center owning role assignment and both cert chains."""

    def __init__(
        self,
        data_dir: Path,
        clock: Callable[[], int] = now_ms,
        password_iterations: int = DEFAULT_PASSWORD_ITERATIONS,
        cert_lifetime_ms: int = DEFAULT_CERT_LIFETIME_MS,
        ca_metadata: str = "archivechain certification authority",
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self.password_iterations = password_iterations
        self.cert_lifetime_ms = cert_lifetime_ms
        self.ca_metadata = ca_metadata
        self._lock = threading.RLock()
        self._db = sqlite3.connect(
            self.data_dir / "accounts.sqlite", check_same_thread=False
        )
        self._db.executescript(_SCHEMA)
        self.all_chain = ledger.Chain.load(self.data_dir / "certs_all.tsv")
        self.revoked_chain = ledger.Chain.load(self.data_dir / "certs_revoked.tsv")
        self._all_index: dict[bytes, int] = {}
        self._revoked_index: dict[bytes, int] = {}
        self._rebuild_indexes()
        self._subscribers: list[Callable[[str, list[ledger.LedgerRow]], None]] = []
        self._admin_keypair: crypto.KeyPair | None = None
        key_path = self.data_dir / "ca_admin.key"
        if key_path.exists():
            self._admin_keypair = crypto.KeyPair.from_private_bytes(
                key_path.read_bytes()
            )

    # -- bootstrap ----------------------------------------------------------

    @property
    def is_bootstrapped(self) -> bool:
        return self._admin_keypair is not None and len(self.all_chain) > 0

    @property
    def admin_keypair(self) -> crypto.KeyPair:
        if self._admin_keypair is None:
            raise CaError("authority not bootstrapped")
        return self._admin_keypair

    @property
    def admin_cert_id(self) -> int:
        return 1

    def bootstrap(
        self, admin_username: str, admin_password: str, profile: Profile
    ) -> Certificate:
        """Create the authority identity, both chains, and the admin account.

        The admin certificate holds the chain-signing key itself and never
        expires.
        """
        with self._lock:
            if self.is_bootstrapped:
                raise CaError("authority already bootstrapped")
            keypair = crypto.keygen(_secrets.token_bytes(64))
            key_path = self.data_dir / "ca_admin.key"
            key_path.write_bytes(keypair.private_bytes())
            key_path.chmod(0o600)
            self._admin_keypair = keypair

            account = self.register_user(admin_username, admin_password, profile)
            self._db.execute(
                "UPDATE accounts SET role=? WHERE user_id=?",
                (Role.CA_ADMINISTRATOR.value, account.user_id),
            )
            cert = Certificate(
                cert_id=1,
                holder_id=account.user_id,
                holder_name=profile.full_name,
                holder_email=profile.email,
                holder_org=profile.organization,
                holder_category=Role.CA_ADMINISTRATOR,
                public_key=keypair.public_bytes(),
                expires_at=NO_EXPIRY,
                keygen_algorithm=keypair.curve_id,
                ca_metadata=self.ca_metadata,
            )
            ledger.genesis(
                self.all_chain, "all certificates", keypair, 1, self.clock
            )
            ledger.genesis(
                self.revoked_chain, "revoked certificates", keypair, 1, self.clock
            )
            self._store_certificate(cert, append_public=None)
            self._db.execute(
                "UPDATE accounts SET active_cert_id=? WHERE user_id=?",
                (cert.cert_id, account.user_id),
            )
            self._db.commit()
            return cert

    # -- accounts -----------------------------------------------------------

    def register_user(
        self, username: str, password: str, profile: Profile
    ) -> UserAccount:
        if len(password) < MIN_PASSWORD_LENGTH:
            raise WeakPassword(
                f"password must be at least {MIN_PASSWORD_LENGTH} characters"
            )
        with self._lock:
            salt = _secrets.token_bytes(SALT_BYTES)
            pw_hash = hash_password(password, salt, self.password_iterations)
            try:
                cur = self._db.execute(
                    "INSERT INTO accounts (username, password_hash, salt,"
                    " first_name, last_name, organization, email, role)"
                    " VALUES (?,?,?,?,?,?,?,?)",
                    (
                        username,
                        pw_hash,
                        salt,
                        profile.first_name,
                        profile.last_name,
                        profile.organization,
                        profile.email,
                        Role.UNCONFIRMED_USER.value,
                    ),
                )
            except sqlite3.IntegrityError:
                raise DuplicateUsername(username) from None
            self._db.commit()
            account = self.get_account(cur.lastrowid)
            assert account is not None
            return account

    def authenticate(self, username: str, password: str) -> UserAccount | None:
        row = self._db.execute(
            "SELECT user_id, password_hash, salt FROM accounts WHERE username=?",
            (username,),
        ).fetchone()
        if row is None:
            return None
        user_id, stored, salt = row
        candidate = hash_password(password, salt, self.password_iterations)
        if not _secrets.compare_digest(stored, candidate):
            return None
        return self.get_account(user_id)

    def _account_from_row(self, row: tuple) -> UserAccount:
        (user_id, username, first, last, org, email, role, cert_id, prompted) = row
        return UserAccount(
            user_id=user_id,
            username=username,
            profile=Profile(first, last, org, email),
            role=Role(role),
            active_cert_id=cert_id,
            prompted_for_renewal=bool(prompted),
        )

    _ACCOUNT_COLS = (
        "user_id, username, first_name, last_name, organization, email,"
        " role, active_cert_id, prompted"
    )

    def get_account(self, user_id: int) -> UserAccount | None:
        row = self._db.execute(
            f"SELECT {self._ACCOUNT_COLS} FROM accounts WHERE user_id=?",
            (user_id,),
        ).fetchone()
        return None if row is None else self._account_from_row(row)

    def find_account(self, username: str) -> UserAccount | None:
        row = self._db.execute(
            f"SELECT {self._ACCOUNT_COLS} FROM accounts WHERE username=?",
            (username,),
        ).fetchone()
        return None if row is None else self._account_from_row(row)

    def list_accounts(self) -> list[UserAccount]:
        rows = self._db.execute(
            f"SELECT {self._ACCOUNT_COLS} FROM accounts ORDER BY user_id"
        ).fetchall()
        return [self._account_from_row(r) for r in rows]

    # -- roles and issuance -------------------------------------------------

    def assign_role(
        self, actor: UserAccount, user_id: int, new_role: Role
    ) -> IssuedCredentials | None:
        """Change a user's role; non-unconfirmed roles auto-issue a
        certificate, demotion to unconfirmed revokes without replacement."""
        if actor.role is not Role.CA_ADMINISTRATOR:
            raise Unauthorized("only the CA administrator assigns roles")
        with self._lock:
            account = self.get_account(user_id)
            if account is None:
                raise UnknownUser(str(user_id))
            self._db.execute(
                "UPDATE accounts SET role=? WHERE user_id=?",
                (new_role.value, user_id),
            )
            self._db.commit()
            if new_role is Role.UNCONFIRMED_USER:
                if account.active_cert_id is not None:
                    self._revoke_cert_id(account.active_cert_id)
                    self._db.execute(
                        "UPDATE accounts SET active_cert_id=NULL WHERE user_id=?",
                        (user_id,),
                    )
                    self._db.commit()
                return None
            return self.issue_certificate(user_id)

    def issue_certificate(self, user_id: int) -> IssuedCredentials:
        """Generate keys, build the certificate, chain its hash.

        A previously active certificate for the holder is revoked first, so
        the holder never has two valid certificates at once.
        """
        with self._lock:
            account = self.get_account(user_id)
            if account is None:
                raise UnknownUser(str(user_id))
            if account.role is Role.UNCONFIRMED_USER:
                raise UnconfirmedHolder(
                    "unconfirmed users cannot hold certificates"
                )
            if account.active_cert_id is not None:
                self._revoke_cert_id(account.active_cert_id)

            keypair = crypto.keygen(_secrets.token_bytes(64))
            expires = (
                NO_EXPIRY
                if account.role is Role.CA_ADMINISTRATOR
                else self.clock() + self.cert_lifetime_ms
            )
            cur = self._db.execute(
                "SELECT COALESCE(MAX(cert_id), 0) + 1 FROM certificates"
            )
            cert_id = cur.fetchone()[0]
            cert = Certificate(
                cert_id=cert_id,
                holder_id=user_id,
                holder_name=account.profile.full_name,
                holder_email=account.profile.email,
                holder_org=account.profile.organization,
                holder_category=account.role,
                public_key=keypair.public_bytes(),
                expires_at=expires,
                keygen_algorithm=keypair.curve_id,
                ca_metadata=self.ca_metadata,
            )
            append_pair: crypto.KeyPair | None = None
            if account.role is Role.EXPERT:
                append_pair = crypto.keygen(_secrets.token_bytes(64))
            self._store_certificate(
                cert,
                append_public=(
                    append_pair.public_bytes() if append_pair else None
                ),
            )
            self._db.execute(
                "UPDATE accounts SET active_cert_id=?, prompted=0 WHERE user_id=?",
                (cert_id, user_id),
            )
            self._db.commit()
            return IssuedCredentials(
                certificate=cert,
                private_key=keypair.private_bytes(),
                append_private_key=(
                    append_pair.private_bytes() if append_pair else None
                ),
                append_public_key=(
                    append_pair.public_bytes() if append_pair else None
                ),
            )

    def _store_certificate(
        self, cert: Certificate, append_public: bytes | None
    ) -> None:
        self._db.execute(
            "INSERT INTO certificates"
            " (cert_id, holder_id, text, hash, expires_at, status,"
            "  append_public_key) VALUES (?,?,?,?,?,?,?)",
            (
                cert.cert_id,
                cert.holder_id,
                cert.canonical_text(),
                cert.cert_hash(),
                cert.expires_at,
                "active",
                append_public,
            ),
        )
        row = ledger.append(
            self.all_chain,
            ledger.CertHashPayload(cert.cert_hash()),
            self.admin_keypair,
            self.admin_cert_id,
            self.clock,
        )
        self._all_index[cert.cert_hash()] = row.index
        self.broadcast_ca_update("all", [row])

    def _revoke_cert_id(self, cert_id: int) -> bool:
        row = self._db.execute(
            "SELECT hash, status FROM certificates WHERE cert_id=?", (cert_id,)
        ).fetchone()
        if row is None or row[1] != "active":
            return False
        cert_hash = row[0]
        self._db.execute(
            "UPDATE certificates SET status='revoked' WHERE cert_id=?", (cert_id,)
        )
        self._db.commit()
        chain_row = ledger.append(
            self.revoked_chain,
            ledger.CertHashPayload(cert_hash),
            self.admin_keypair,
            self.admin_cert_id,
            self.clock,
        )
        self._revoked_index[bytes(cert_hash)] = chain_row.index
        self.broadcast_ca_update("revoked", [chain_row])
        return True

    # -- validity -----------------------------------------------------------

    def _rebuild_indexes(self) -> None:
        self._all_index = {}
        self._revoked_index = {}
        for chain, index in (
            (self.all_chain, self._all_index),
            (self.revoked_chain, self._revoked_index),
        ):
            for row in chain.rows:
                try:
                    payload = ledger.decode_payload(row.payload)
                except ValueError:
                    continue
                if isinstance(payload, ledger.CertHashPayload):
                    index.setdefault(payload.cert_hash, row.index)

    def check_validity(self, cert_hash: bytes, now: int | None = None) -> Validity:
        """Revoked chain first, then the all chain; expiry revokes on sight."""
        now = self.clock() if now is None else now
        if cert_hash in self._revoked_index:
            return Validity.REVOKED
        if cert_hash not in self._all_index:
            return Validity.UNKNOWN
        row = self._db.execute(
            "SELECT cert_id, expires_at, status FROM certificates WHERE hash=?",
            (cert_hash,),
        ).fetchone()
        if row is None:
            # chained but unknown to the store: treat as unknown
            return Validity.UNKNOWN
        cert_id, expires_at, status = row
        if expires_at > now:
            return Validity.VALID
        with self._lock:
            if status == "active":
                self._revoke_cert_id(cert_id)
                self._db.execute(
                    "UPDATE accounts SET active_cert_id=NULL, prompted=1"
                    " WHERE active_cert_id=?",
                    (cert_id,),
                )
                self._db.commit()
        return Validity.REVOKED

    def check_expiry(self, now: int | None = None) -> list[int]:
        """Revoke every active certificate past its expiry; idempotent."""
        now = self.clock() if now is None else now
        with self._lock:
            rows = self._db.execute(
                "SELECT cert_id FROM certificates"
                " WHERE status='active' AND expires_at<=?",
                (now,),
            ).fetchall()
            revoked = []
            for (cert_id,) in rows:
                if self._revoke_cert_id(cert_id):
                    self._db.execute(
                        "UPDATE accounts SET active_cert_id=NULL, prompted=1"
                        " WHERE active_cert_id=?",
                        (cert_id,),
                    )
                    revoked.append(cert_id)
            self._db.commit()
            return revoked

    # -- lookups ------------------------------------------------------------

    def get_certificate(self, cert_id: int) -> Certificate | None:
        row = self._db.execute(
            "SELECT text FROM certificates WHERE cert_id=?", (cert_id,)
        ).fetchone()
        return None if row is None else Certificate.from_text(row[0])

    def certificate_text(self, cert_id: int) -> str | None:
        row = self._db.execute(
            "SELECT text FROM certificates WHERE cert_id=?", (cert_id,)
        ).fetchone()
        return None if row is None else row[0]

    def public_key_for_cert(self, cert_id: int) -> bytes | None:
        cert = self.get_certificate(cert_id)
        return None if cert is None else cert.public_key

    def append_public_key(self, cert_id: int) -> bytes | None:
        row = self._db.execute(
            "SELECT append_public_key FROM certificates WHERE cert_id=?",
            (cert_id,),
        ).fetchone()
        return None if row is None else row[0]

    def list_append_keys(self) -> list[tuple[int, bytes, crypto.SignatureValue]]:
        """Expert append-authorization keys, each signed by the authority."""
        rows = self._db.execute(
            "SELECT cert_id, append_public_key FROM certificates"
            " WHERE append_public_key IS NOT NULL AND status='active'"
        ).fetchall()
        out = []
        for cert_id, public in rows:
            record = append_key_record_bytes(cert_id, public)
            out.append((cert_id, public, crypto.sign(self.admin_keypair, record)))
        return out

    # -- broadcast ----------------------------------------------------------

    def subscribe(
        self, callback: Callable[[str, list[ledger.LedgerRow]], None]
    ) -> None:
        self._subscribers.append(callback)

    def broadcast_ca_update(
        self, chain_name: str, rows: list[ledger.LedgerRow]
    ) -> None:
        """Deliver fresh rows to subscribers; failures never block issuance."""
        for callback in list(self._subscribers):
            try:
                callback(chain_name, rows)
            except Exception:
                threading.Thread(
                    target=self._retry_broadcast,
                    args=(callback, chain_name, rows),
                    daemon=True,
                ).start()

    @staticmethod
    def _retry_broadcast(
        callback: Callable[[str, list[ledger.LedgerRow]], None],
        chain_name: str,
        rows: list[ledger.LedgerRow],
    ) -> None:
        for _ in range(3):
            time.sleep(0.5)
            try:
                callback(chain_name, rows)
                return
            except Exception:
                continue
