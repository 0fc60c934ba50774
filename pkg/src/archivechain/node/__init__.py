"""Administrative node: blob storage, the signed message protocol, CA chain
replicas, and the single ledger writer.

The transport is deliberately unencrypted; every mutation arrives as an
envelope signed by the sender's certificate key and is checked against the
node's replica of the CA chains before it reaches the workflow engine.
Replay resistance is a timestamp skew window, which is adequate for the
archival workloads this targets (every meaningful mutation is also
idempotence-guarded by the document state machine).
"""

from __future__ import annotations

import base64
import json
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import httpx

from .. import crypto, ledger
from ..ca import Certificate, Role, Validity, append_key_record_bytes, now_ms
from ..workflow import (
    CLOCK_SKEW_MS,
    DocumentStatus,
    DocumentWorkflow,
    WorkflowError,
)

MSG_TYPES = frozenset(
    {
        "hello",
        "submit_document",
        "assign",
        "decide",
        "archive",
        "status_update",
        "chain_rows",
        "ca_rows",
        "alarm",
        "error",
    }
)


class NodeError(Exception):
    pass


class AuthFailed(NodeError):
    pass


class RevokedCertificate(NodeError):
    pass


class BadSignature(NodeError):
    pass


class UnknownMessageType(NodeError):
    pass


class Unauthorized(NodeError):
    pass


class ChainVerificationFailed(NodeError):
    pass


class BlobMissing(NodeError):
    pass


class BlobCorrupt(NodeError):
    pass


# ---------------------------------------------------------------------------
# blob store


class BlobStore:
    """Content-addressed byte store; the digest is the address."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: bytes) -> Path:
        return self.root / digest.hex()

    def put(self, content: bytes) -> bytes:
        digest = crypto.digest(content)
        path = self._path(digest)
        if not path.exists():
            path.write_bytes(content)
        return digest

    def has(self, digest: bytes) -> bool:
        return self._path(digest).exists()

    def get(self, digest: bytes) -> bytes:
        path = self._path(digest)
        if not path.exists():
            raise BlobMissing(digest.hex())
        content = path.read_bytes()
        if crypto.digest(content) != digest:
            raise BlobCorrupt(digest.hex())
        return content


# ---------------------------------------------------------------------------
# envelopes


def canonical_envelope_bytes(msg_type: str, timestamp: int, body: dict) -> bytes:
    ident = msg_type.encode("utf-8")
    body_json = json.dumps(body, sort_keys=True, separators=(",", ":")).encode(
        "utf-8"
    )
    return (
        struct.pack(">I", len(ident))
        + ident
        + struct.pack(">Q", timestamp)
        + body_json
    )


@dataclass(frozen=True)
class Envelope:
    msg_type: str
    sender_cert_id: int
    body: dict
    timestamp: int
    signature: crypto.SignatureValue

    def signed_bytes(self) -> bytes:
        return canonical_envelope_bytes(self.msg_type, self.timestamp, self.body)

    def to_dict(self) -> dict:
        return {
            "msg_type": self.msg_type,
            "sender_cert_id": self.sender_cert_id,
            "body": self.body,
            "timestamp": self.timestamp,
            "signature": self.signature.to_bytes().hex(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Envelope":
        try:
            return cls(
                msg_type=str(data["msg_type"]),
                sender_cert_id=int(data["sender_cert_id"]),
                body=dict(data["body"]),
                timestamp=int(data["timestamp"]),
                signature=crypto.SignatureValue.from_bytes(
                    bytes.fromhex(data["signature"])
                ),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise BadSignature(f"malformed envelope: {exc}") from None


def make_envelope(
    keypair: crypto.KeyPair,
    sender_cert_id: int,
    msg_type: str,
    body: dict,
    timestamp: int | None = None,
) -> Envelope:
    timestamp = now_ms() if timestamp is None else timestamp
    signature = crypto.sign(
        keypair, canonical_envelope_bytes(msg_type, timestamp, body)
    )
    return Envelope(
        msg_type=msg_type,
        sender_cert_id=sender_cert_id,
        body=body,
        timestamp=timestamp,
        signature=signature,
    )


# ---------------------------------------------------------------------------
# certificate registry (certificates presented to this node)


class CertRegistry:
    """Certificates presented by participants, kept as their canonical text.

    Doubles as the offline-audit export: the directory contents plus the
    ledger file are all an auditor needs to re-verify every signature.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._by_id: dict[int, Certificate] = {}
        self._by_hash: dict[bytes, Certificate] = {}
        for path in sorted(self.root.glob("*.crt")):
            try:
                self._remember(Certificate.from_text(path.read_text()))
            except ValueError:
                continue

    def _remember(self, cert: Certificate) -> None:
        self._by_id[cert.cert_id] = cert
        self._by_hash[cert.cert_hash()] = cert

    def register(self, cert: Certificate) -> None:
        if cert.cert_id not in self._by_id:
            (self.root / f"{cert.cert_id}.crt").write_text(cert.canonical_text())
        self._remember(cert)

    def get(self, cert_id: int) -> Certificate | None:
        return self._by_id.get(cert_id)

    def by_hash(self, cert_hash: bytes) -> Certificate | None:
        return self._by_hash.get(cert_hash)

    def all(self) -> list[Certificate]:
        return list(self._by_id.values())


# ---------------------------------------------------------------------------
# CA replica


class CaReplica:
    """Local, re-verified copy of both CA chains plus expert append keys."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.all_chain = ledger.Chain.load(self.root / "ca_all.tsv")
        self.revoked_chain = ledger.Chain.load(self.root / "ca_revoked.tsv")
        self._lock = threading.RLock()
        self.ca_public: bytes | None = None
        pub_path = self.root / "ca_admin.pub"
        if pub_path.exists():
            self.ca_public = pub_path.read_bytes()
        self.append_keys: dict[int, bytes] = {}
        keys_path = self.root / "append_keys.json"
        if keys_path.exists():
            data = json.loads(keys_path.read_text())
            self.append_keys = {int(k): bytes.fromhex(v) for k, v in data.items()}
        self._rebuild_indexes()

    def _rebuild_indexes(self) -> None:
        self._all_hashes: set[bytes] = set()
        self._revoked_hashes: set[bytes] = set()
        for chain, bucket in (
            (self.all_chain, self._all_hashes),
            (self.revoked_chain, self._revoked_hashes),
        ):
            for row in chain.rows:
                try:
                    payload = ledger.decode_payload(row.payload)
                except ValueError:
                    continue
                if isinstance(payload, ledger.CertHashPayload):
                    bucket.add(payload.cert_hash)

    def _pin_ca_public(self, client: httpx.Client, headers: dict) -> bytes:
        response = client.get("/ca/public-key", headers=headers)
        if response.status_code == 401:
            raise Unauthorized("CA rejected the channel token")
        response.raise_for_status()
        public = bytes.fromhex(response.json()["public_key"])
        if self.ca_public is None:
            self.ca_public = public
            (self.root / "ca_admin.pub").write_bytes(public)
        elif self.ca_public != public:
            raise ChainVerificationFailed("CA public key changed; refusing to sync")
        return self.ca_public

    def sync(
        self,
        client: httpx.Client,
        token: str,
        alarm: Callable[[str], None] | None = None,
    ) -> tuple[int, int]:
        """Pull both chains to the CA's head and re-verify end to end.

        Returns the number of new rows accepted per chain. A row that fails
        verification aborts the sync for that chain and leaves the replica
        untouched.
        """
        headers = {"X-CA-Token": token}
        with self._lock:
            public = self._pin_ca_public(client, headers)
            resolver = lambda _cert_id: public  # chains are CA-admin signed
            counts = []
            for name, chain in (
                ("all", self.all_chain),
                ("revoked", self.revoked_chain),
            ):
                response = client.get(
                    f"/chains/{name}", params={"from": len(chain.rows)},
                    headers=headers,
                )
                if response.status_code == 401:
                    raise Unauthorized("CA rejected the channel token")
                response.raise_for_status()
                new_rows = [
                    ledger.LedgerRow.from_line(line)
                    for line in response.text.splitlines()
                    if line.strip()
                ]
                candidate = chain.rows + new_rows
                report = ledger.verify_chain(candidate, key_resolver=resolver)
                if not report.valid:
                    message = (
                        f"CA {name} chain failed verification at row"
                        f" {report.first_bad_index}: {report.reason}"
                    )
                    if alarm:
                        alarm(message)
                    raise ChainVerificationFailed(message)
                for row in new_rows:
                    chain.rows.append(row)
                    chain._persist(row)
                counts.append(len(new_rows))
            self._rebuild_indexes()
            self._sync_append_keys(client, headers, public)
            return counts[0], counts[1]

    def _sync_append_keys(
        self, client: httpx.Client, headers: dict, public: bytes
    ) -> None:
        response = client.get("/append-keys", headers=headers)
        if response.status_code == 401:
            raise Unauthorized("CA rejected the channel token")
        response.raise_for_status()
        accepted: dict[int, bytes] = {}
        for item in response.json()["keys"]:
            cert_id = int(item["cert_id"])
            key = bytes.fromhex(item["public_key"])
            sig = crypto.SignatureValue.from_bytes(bytes.fromhex(item["signature"]))
            record = append_key_record_bytes(cert_id, key)
            if crypto.verify(public, record, sig):
                accepted[cert_id] = key
        self.append_keys = accepted
        (self.root / "append_keys.json").write_text(
            json.dumps({str(k): v.hex() for k, v in accepted.items()})
        )

    def check_validity(
        self, cert_hash: bytes, now: int, expiry_lookup: Callable[[bytes], int | None]
    ) -> Validity:
        """Same decision order as the CA: revoked chain wins, then the all
        chain plus the certificate's own expiry."""
        if cert_hash in self._revoked_hashes:
            return Validity.REVOKED
        if cert_hash not in self._all_hashes:
            return Validity.UNKNOWN
        expires_at = expiry_lookup(cert_hash)
        if expires_at is None:
            return Validity.UNKNOWN
        return Validity.VALID if expires_at > now else Validity.REVOKED


# ---------------------------------------------------------------------------
# node core


@dataclass
class PeerSession:
    session_id: str
    cert_id: int
    role: Role
    send: Callable[[dict], None]


@dataclass
class NodeCore:
    """Wires the workflow engine to the wire formats and replicas."""

    data_dir: Path
    admin_keypair: crypto.KeyPair
    admin_certificate: Certificate
    clock: Callable[[], int] = now_ms
    ca_client: httpx.Client | None = None
    ca_token: str = ""
    guard_dir: Path | None = None
    examination_window_ms: int | None = None
    guard_sign_len: int | None = None
    guard_name_len: int | None = None
    alarms: list[str] = field(default_factory=list)
    peers: dict[str, PeerSession] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.data_dir = Path(self.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.blob_store = BlobStore(self.data_dir / "blobs")
        self.registry = CertRegistry(self.data_dir / "certs")
        self.replica = CaReplica(self.data_dir / "ca_replica")
        self.registry.register(self.admin_certificate)
        self.alarm_log = self.data_dir / "alarms.log"
        self._peer_lock = threading.Lock()
        self._last_forced_sync = 0.0
        kwargs = {}
        if self.examination_window_ms is not None:
            kwargs["examination_window_ms"] = self.examination_window_ms
        if self.guard_sign_len is not None:
            kwargs["guard_sign_len"] = self.guard_sign_len
        if self.guard_name_len is not None:
            kwargs["guard_name_len"] = self.guard_name_len
        self.engine = DocumentWorkflow(
            ledger_file=self.data_dir / "ledger.tsv",
            guard_dir=Path(self.guard_dir) if self.guard_dir else
                self.data_dir / "guard",
            admin_keypair=self.admin_keypair,
            admin_cert_id=self.admin_certificate.cert_id,
            validity_checker=self.check_validity,
            cert_resolver=self.fetch_certificate,
            append_key_resolver=lambda cid: self.replica.append_keys.get(cid),
            blob_store=self.blob_store,
            clock=self.clock,
            audit_log=self.data_dir / "guard_audit.log",
            alarm_sinks=(self._guard_alarm,),
            observers=(self._on_transition,),
            **kwargs,
        )

    def fetch_certificate(self, cert_id: int) -> Certificate | None:
        """Resolve a certificate locally, falling back to the authority.

        A fetched certificate is only trusted if its hash appears in one of
        the replicated chains.
        """
        cert = self.registry.get(cert_id)
        if cert is not None or self.ca_client is None:
            return cert
        try:
            response = self.ca_client.get(f"/certificates/{cert_id}/download")
        except httpx.HTTPError:
            return None
        if response.status_code != 200:
            return None
        try:
            cert = Certificate.from_text(response.text)
        except ValueError:
            return None
        digest = cert.cert_hash()
        if (
            digest not in self.replica._all_hashes
            and digest not in self.replica._revoked_hashes
        ):
            return None
        self.registry.register(cert)
        return cert

    def resync(self) -> tuple[int, int] | None:
        if self.ca_client is None:
            return None
        return self.replica.sync(
            self.ca_client, self.ca_token, alarm=self.record_alarm
        )

    # -- alarms -------------------------------------------------------------

    def _guard_alarm(self, expected_hex: str, computed_hex: str) -> None:
        self.record_alarm(
            "ledger integrity signature mismatch:"
            f" stored {expected_hex[:32]}… computed {computed_hex[:32]}…"
        )

    def record_alarm(self, message: str) -> None:
        stamp = self.clock()
        line = f"{stamp}\t{message}"
        self.alarms.append(line)
        with open(self.alarm_log, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        self._broadcast(
            make_envelope(
                self.admin_keypair,
                self.admin_certificate.cert_id,
                "alarm",
                {"message": message, "at": stamp},
            )
        )

    # -- certificate validity ------------------------------------------------

    def _replica_validity(self, cert_hash: bytes, now: int) -> Validity:
        return self.replica.check_validity(
            cert_hash,
            now,
            lambda h: (
                None
                if self.registry.by_hash(h) is None
                else self.registry.by_hash(h).expires_at
            ),
        )

    def check_validity(self, cert_hash: bytes, now: int) -> Validity:
        verdict = self._replica_validity(cert_hash, now)
        if verdict is Validity.UNKNOWN and self.ca_client is not None:
            # an unseen certificate usually means the replica is stale;
            # pull once (rate limited) before refusing
            monotonic = time.monotonic()
            if monotonic - self._last_forced_sync > 1.0:
                self._last_forced_sync = monotonic
                try:
                    self.resync()
                except Exception:
                    return verdict
                verdict = self._replica_validity(cert_hash, now)
        return verdict

    def ca_sync(self, ca_url: str, token: str, client: httpx.Client | None = None):
        if client is not None:
            return self.replica.sync(client, token, alarm=self.record_alarm)
        with httpx.Client(base_url=ca_url, timeout=10) as owned:
            return self.replica.sync(owned, token, alarm=self.record_alarm)

    # -- sessions and routing -------------------------------------------------

    def authenticate_hello(self, envelope: Envelope, nonce: str) -> Certificate:
        """Validate a hello: presented certificate, validity, signed nonce."""
        if envelope.msg_type != "hello":
            raise AuthFailed("expected a hello envelope")
        try:
            cert = Certificate.from_text(envelope.body["certificate"])
        except (KeyError, ValueError) as exc:
            raise AuthFailed(f"unreadable certificate: {exc}") from None
        if envelope.body.get("nonce") != nonce:
            raise AuthFailed("nonce mismatch")
        # cache the presented certificate first: validity needs its expiry,
        # and an unchained certificate can never validate anyway
        self.registry.register(cert)
        verdict = self.check_validity(cert.cert_hash(), self.clock())
        if verdict is Validity.REVOKED:
            raise RevokedCertificate(f"certificate {cert.cert_id} is revoked")
        if verdict is not Validity.VALID:
            raise AuthFailed(f"certificate {cert.cert_id} is {verdict.value}")
        if not crypto.verify(
            cert.public_key, envelope.signed_bytes(), envelope.signature
        ):
            raise AuthFailed("hello signature does not verify")
        return cert

    def _verify_envelope(self, envelope: Envelope) -> Certificate:
        if envelope.msg_type not in MSG_TYPES:
            raise UnknownMessageType(envelope.msg_type)
        cert_text = envelope.body.get("certificate")
        if cert_text:
            try:
                candidate = Certificate.from_text(cert_text)
            except ValueError as exc:
                raise BadSignature(f"unreadable certificate: {exc}") from None
            if candidate.cert_id == envelope.sender_cert_id:
                self.registry.register(candidate)
        cert = self.registry.get(envelope.sender_cert_id)
        if cert is None:
            raise AuthFailed(
                f"certificate {envelope.sender_cert_id} never presented"
            )
        now = self.clock()
        if abs(envelope.timestamp - now) > CLOCK_SKEW_MS:
            raise BadSignature("envelope timestamp outside skew window")
        verdict = self.check_validity(cert.cert_hash(), now)
        if verdict is Validity.REVOKED:
            raise RevokedCertificate(f"certificate {cert.cert_id} is revoked")
        if verdict is not Validity.VALID:
            raise AuthFailed(f"certificate {cert.cert_id} is {verdict.value}")
        if not crypto.verify(
            cert.public_key, envelope.signed_bytes(), envelope.signature
        ):
            raise BadSignature("envelope signature does not verify")
        return cert

    def route(self, envelope: Envelope) -> Envelope:
        """Dispatch one verified envelope; errors come back as envelopes."""
        try:
            cert = self._verify_envelope(envelope)
            handler = {
                "submit_document": self._handle_submit,
                "assign": self._handle_assign,
                "decide": self._handle_decide,
                "archive": self._handle_archive,
            }.get(envelope.msg_type)
            if handler is None:
                raise UnknownMessageType(envelope.msg_type)
            body = handler(cert, envelope.body)
            return make_envelope(
                self.admin_keypair,
                self.admin_certificate.cert_id,
                "status_update",
                body,
            )
        except (NodeError, WorkflowError, ledger.LedgerError, ValueError) as exc:
            return make_envelope(
                self.admin_keypair,
                self.admin_certificate.cert_id,
                "error",
                {"error": type(exc).__name__, "message": str(exc)},
            )

    @staticmethod
    def _transition_args(body: dict) -> tuple[int, crypto.SignatureValue]:
        transition = body.get("transition") or {}
        try:
            timestamp = int(transition["timestamp"])
            signature = crypto.SignatureValue.from_bytes(
                bytes.fromhex(transition["signature"])
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise BadSignature(f"malformed transition block: {exc}") from None
        return timestamp, signature

    def document_view(self, doc) -> dict:
        return {
            "doc_id": doc.doc_id,
            "status": doc.status.value,
            "metadata": doc.metadata,
            "content_digest": doc.content_digest.hex(),
            "creator_cert_id": doc.creator_cert_id,
            "assigned_expert_id": doc.assigned_expert_id,
            "deadline": doc.deadline,
            "ledger_index": doc.ledger_index,
            "transitions": [
                {
                    "status": t.new_status.value,
                    "timestamp": t.timestamp,
                    "signer_cert_id": t.signer_cert_id,
                    "signature": t.signature.to_bytes().hex(),
                }
                for t in doc.transition_log
            ],
        }

    def _handle_submit(self, cert: Certificate, body: dict) -> dict:
        timestamp, signature = self._transition_args(body)
        try:
            content = base64.b64decode(body["content_b64"])
        except (KeyError, ValueError) as exc:
            raise WorkflowError(f"missing or undecodable content: {exc}") from None
        doc = self.engine.create_document(
            certificate=cert,
            content=content,
            metadata=dict(body.get("metadata") or {}),
            timestamp=timestamp,
            signature=signature,
            doc_id=body.get("doc_id"),
        )
        return self.document_view(doc)

    def _handle_assign(self, cert: Certificate, body: dict) -> dict:
        timestamp, signature = self._transition_args(body)
        doc = self.engine.assign_expert(
            admin_certificate=cert,
            doc_id=str(body.get("doc_id", "")),
            expert_cert_id=int(body.get("expert_cert_id", 0)),
            timestamp=timestamp,
            signature=signature,
            examination_window_ms=(
                int(body["window_ms"]) if body.get("window_ms") else None
            ),
        )
        return self.document_view(doc)

    def _handle_decide(self, cert: Certificate, body: dict) -> dict:
        timestamp, signature = self._transition_args(body)
        append_auth = None
        if body.get("append_authorization"):
            append_auth = crypto.SignatureValue.from_bytes(
                bytes.fromhex(body["append_authorization"])
            )
        try:
            verdict = DocumentStatus(body.get("verdict", ""))
        except ValueError:
            raise WorkflowError(
                f"unknown verdict {body.get('verdict')!r}"
            ) from None
        doc = self.engine.decide(
            expert_certificate=cert,
            doc_id=str(body.get("doc_id", "")),
            verdict=verdict,
            timestamp=timestamp,
            signature=signature,
            append_authorization=append_auth,
        )
        return self.document_view(doc)

    def _handle_archive(self, cert: Certificate, body: dict) -> dict:
        timestamp, signature = self._transition_args(body)
        doc, row = self.engine.archive(
            admin_certificate=cert,
            doc_id=str(body.get("doc_id", "")),
            timestamp=timestamp,
            signature=signature,
        )
        self.broadcast_block(row)
        view = self.document_view(doc)
        view["row"] = row.to_line()
        return view

    # -- broadcast ------------------------------------------------------------

    def register_peer(self, session: PeerSession) -> None:
        with self._peer_lock:
            self.peers[session.session_id] = session

    def drop_peer(self, session_id: str) -> None:
        with self._peer_lock:
            self.peers.pop(session_id, None)

    def _broadcast(self, envelope: Envelope) -> None:
        with self._peer_lock:
            sessions = list(self.peers.values())
        for session in sessions:
            try:
                session.send(envelope.to_dict())
            except Exception:
                continue  # per-peer delivery failures never roll back commits

    def broadcast_block(self, row: ledger.LedgerRow) -> None:
        self._broadcast(
            make_envelope(
                self.admin_keypair,
                self.admin_certificate.cert_id,
                "chain_rows",
                {"rows": [row.to_line()], "from": row.index},
            )
        )

    def _on_transition(self, doc, entry) -> None:
        self._broadcast(
            make_envelope(
                self.admin_keypair,
                self.admin_certificate.cert_id,
                "status_update",
                self.document_view(doc),
            )
        )

    def chain_rows_from(self, start: int) -> list[str]:
        return [row.to_line() for row in self.engine.chain.rows[start:]]
