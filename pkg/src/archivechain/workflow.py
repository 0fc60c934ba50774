"""Document lifecycle engine.

A document moves through six statuses; every transition is a signed record
bound to the role that may perform it (creation by a user, verdicts by the
assigned expert, everything else by an administrator). Transition records
are kept with the document and broadcast, but never chained; when a document
is archived they supply the timestamps and signatures of the final
transaction that does get committed, through the guard, to the main chain.
"""

from __future__ import annotations

import struct
import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from . import crypto, guard, ledger
from .ca import Certificate, Role, Validity, now_ms

DEFAULT_EXAMINATION_WINDOW_MS = 72 * 3600 * 1000
CLOCK_SKEW_MS = 5 * 60 * 1000

REQUIRED_METADATA_KEYS = ("title", "author", "organization")


class DocumentStatus(str, Enum):
    CREATED = "Created"
    ON_EXAMINATION = "OnExamination"
    APPROVED = "Approved"
    REJECTED = "Rejected"
    EXPIRED = "Expired"
    ADDED = "Added"


# which role signs a transition into each status
SIGNER_ROLE = {
    DocumentStatus.CREATED: Role.USER,
    DocumentStatus.ON_EXAMINATION: Role.ADMINISTRATOR,
    DocumentStatus.APPROVED: Role.EXPERT,
    DocumentStatus.REJECTED: Role.EXPERT,
    DocumentStatus.EXPIRED: Role.ADMINISTRATOR,
    DocumentStatus.ADDED: Role.ADMINISTRATOR,
}

# the full reachable transition graph; everything else is refused
TRANSITIONS = {
    DocumentStatus.CREATED: {DocumentStatus.ON_EXAMINATION},
    DocumentStatus.ON_EXAMINATION: {
        DocumentStatus.APPROVED,
        DocumentStatus.REJECTED,
        DocumentStatus.EXPIRED,
    },
    DocumentStatus.APPROVED: {DocumentStatus.ADDED},
    DocumentStatus.REJECTED: set(),
    DocumentStatus.EXPIRED: set(),
    DocumentStatus.ADDED: set(),
}


class WorkflowError(Exception):
    pass


class WrongStatus(WorkflowError):
    pass


class InvalidCertificate(WorkflowError):
    pass


class EmptyContent(WorkflowError):
    pass


class InvalidMetadata(WorkflowError):
    pass


class DuplicateDocument(WorkflowError):
    pass


class NotAnExpert(WorkflowError):
    pass


class NotAssignedExpert(WorkflowError):
    pass


class DeadlinePassed(WorkflowError):
    pass


class BadTransitionSignature(WorkflowError):
    pass


class StaleTimestamp(WorkflowError):
    pass


class AppendAuthorizationError(WorkflowError):
    """Missing or invalid expert second-key authorization for archival."""


def transition_bytes(
    doc_id: str, status: DocumentStatus, timestamp: int, content_digest: bytes
) -> bytes:
    ident = doc_id.encode("utf-8")
    name = status.value.encode("ascii")
    return (
        struct.pack(">I", len(ident))
        + ident
        + struct.pack(">I", len(name))
        + name
        + struct.pack(">Q", timestamp)
        + content_digest
    )


def append_auth_bytes(doc_id: str, content_digest: bytes) -> bytes:
    return b"append-auth\x00" + doc_id.encode("utf-8") + b"\x00" + content_digest


def sign_transition(
    keypair: crypto.KeyPair,
    doc_id: str,
    status: DocumentStatus,
    timestamp: int,
    content_digest: bytes,
) -> crypto.SignatureValue:
    """Client-side helper: transitions are signed by whoever performs them."""
    return crypto.sign(
        keypair, transition_bytes(doc_id, status, timestamp, content_digest)
    )


def sign_append_authorization(
    append_keypair: crypto.KeyPair, doc_id: str, content_digest: bytes
) -> crypto.SignatureValue:
    return crypto.sign(append_keypair, append_auth_bytes(doc_id, content_digest))


@dataclass(frozen=True)
class IntermediateTransaction:
    doc_id: str
    new_status: DocumentStatus
    timestamp: int
    signer_cert_id: int
    signature: crypto.SignatureValue


@dataclass
class Document:
    doc_id: str
    content_digest: bytes
    metadata: dict[str, str]
    status: DocumentStatus
    creator_cert_id: int
    assigned_expert_id: int | None = None
    deadline: int | None = None
    transition_log: list[IntermediateTransaction] = field(default_factory=list)
    append_authorization: crypto.SignatureValue | None = None
    ledger_index: int | None = None

    def transition(self, status: DocumentStatus) -> IntermediateTransaction | None:
        for entry in self.transition_log:
            if entry.new_status is status:
                return entry
        return None


ValidityChecker = Callable[[bytes, int], Validity]
CertResolver = Callable[[int], Certificate | None]
AppendKeyResolver = Callable[[int], bytes | None]


class DocumentWorkflow:
    """Single-writer engine owned by the administrative node.

    The engine holds the administrator identity that signs ledger rows and
    automatic (expiry) transitions; user/expert/admin transitions arrive
    already signed by the acting participant and are verified here against
    the CA's view of their certificates.
    """

    def __init__(
        self,
        ledger_file: Path,
        guard_dir: Path,
        admin_keypair: crypto.KeyPair,
        admin_cert_id: int,
        validity_checker: ValidityChecker,
        cert_resolver: CertResolver,
        append_key_resolver: AppendKeyResolver,
        blob_store=None,
        clock: Callable[[], int] = now_ms,
        examination_window_ms: int = DEFAULT_EXAMINATION_WINDOW_MS,
        guard_sign_len: int = guard.DEFAULT_SIGN_LEN,
        guard_name_len: int = guard.DEFAULT_NAME_LEN,
        audit_log: Path | None = None,
        alarm_sinks: Iterable[Callable[[str, str], None]] = (),
        observers: Iterable[Callable[[Document, IntermediateTransaction], None]] = (),
    ):
        self.ledger_file = Path(ledger_file)
        self.guard_dir = Path(guard_dir)
        self.admin_keypair = admin_keypair
        self.admin_cert_id = admin_cert_id
        self.validity_checker = validity_checker
        self.cert_resolver = cert_resolver
        self.append_key_resolver = append_key_resolver
        self.blob_store = blob_store
        self.clock = clock
        self.examination_window_ms = examination_window_ms
        self.guard_sign_len = guard_sign_len
        self.guard_name_len = guard_name_len
        self.audit_log = audit_log
        self.alarm_sinks = tuple(alarm_sinks)
        self.observers = list(observers)
        self.documents: dict[str, Document] = {}
        self.chain = ledger.Chain.load(self.ledger_file)
        self._lock = threading.RLock()

    # -- plumbing -----------------------------------------------------------

    def ensure_genesis(self, chain_title: str) -> ledger.LedgerRow | None:
        with self._lock:
            if self.chain.rows:
                return None
            outcome = guard.guarded_append(
                self.ledger_file,
                None,
                self.guard_dir,
                lambda _tx: ledger.genesis(
                    self.chain,
                    chain_title,
                    self.admin_keypair,
                    self.admin_cert_id,
                    self.clock,
                ),
                sign_len=self.guard_sign_len,
                name_len=self.guard_name_len,
                audit_log=self.audit_log,
                alarm_sinks=self.alarm_sinks,
            )
            return outcome.row  # type: ignore[return-value]

    def _require_valid(self, certificate: Certificate, role: Role) -> None:
        if certificate.holder_category is not role:
            raise InvalidCertificate(
                f"operation requires a {role.value} certificate,"
                f" got {certificate.holder_category.value}"
            )
        verdict = self.validity_checker(certificate.cert_hash(), self.clock())
        if verdict is not Validity.VALID:
            raise InvalidCertificate(
                f"certificate {certificate.cert_id} is {verdict.value}"
            )

    def _check_signature(
        self,
        certificate: Certificate,
        doc_id: str,
        status: DocumentStatus,
        timestamp: int,
        content_digest: bytes,
        signature: crypto.SignatureValue,
    ) -> None:
        message = transition_bytes(doc_id, status, timestamp, content_digest)
        if not crypto.verify(certificate.public_key, message, signature):
            raise BadTransitionSignature(
                f"transition to {status.value} not signed by certificate"
                f" {certificate.cert_id}"
            )

    def _check_timestamp(self, timestamp: int, doc: Document | None) -> None:
        now = self.clock()
        if abs(timestamp - now) > CLOCK_SKEW_MS:
            raise StaleTimestamp(
                f"transition timestamp {timestamp} outside skew window of {now}"
            )
        if doc is not None and doc.transition_log:
            last = doc.transition_log[-1].timestamp
            if timestamp < last:
                raise StaleTimestamp(
                    f"transition timestamp {timestamp} precedes last {last}"
                )

    def _record(
        self,
        doc: Document,
        status: DocumentStatus,
        timestamp: int,
        signer_cert_id: int,
        signature: crypto.SignatureValue,
    ) -> IntermediateTransaction:
        entry = IntermediateTransaction(
            doc_id=doc.doc_id,
            new_status=status,
            timestamp=timestamp,
            signer_cert_id=signer_cert_id,
            signature=signature,
        )
        doc.transition_log.append(entry)
        doc.status = status
        for observer in self.observers:
            try:
                observer(doc, entry)
            except Exception:
                pass
        return entry

    def _guard_state(self, doc: Document, target: DocumentStatus) -> None:
        if target not in TRANSITIONS[doc.status]:
            raise WrongStatus(
                f"cannot move {doc.doc_id} from {doc.status.value}"
                f" to {target.value}"
            )

    # -- operations ---------------------------------------------------------

    def create_document(
        self,
        certificate: Certificate,
        content: bytes,
        metadata: dict[str, str],
        timestamp: int,
        signature: crypto.SignatureValue,
        doc_id: str | None = None,
    ) -> Document:
        """Register an uploaded document in status Created."""
        if not content:
            raise EmptyContent("document content must be non-empty")
        missing = [k for k in REQUIRED_METADATA_KEYS if not metadata.get(k)]
        if missing:
            raise InvalidMetadata(f"missing metadata keys: {', '.join(missing)}")
        self._require_valid(certificate, Role.USER)
        doc_id = doc_id or uuid.uuid4().hex
        content_digest = crypto.digest(content)
        self._check_signature(
            certificate, doc_id, DocumentStatus.CREATED, timestamp,
            content_digest, signature,
        )
        with self._lock:
            if doc_id in self.documents:
                raise DuplicateDocument(doc_id)
            self._check_timestamp(timestamp, None)
            if self.blob_store is not None:
                self.blob_store.put(content)
            doc = Document(
                doc_id=doc_id,
                content_digest=content_digest,
                metadata={
                    **metadata,
                    "content_digest": content_digest.hex(),
                    "doc_id": doc_id,
                },
                status=DocumentStatus.CREATED,
                creator_cert_id=certificate.cert_id,
            )
            self.documents[doc_id] = doc
            self._record(
                doc, DocumentStatus.CREATED, timestamp, certificate.cert_id,
                signature,
            )
            return doc

    def assign_expert(
        self,
        admin_certificate: Certificate,
        doc_id: str,
        expert_cert_id: int,
        timestamp: int,
        signature: crypto.SignatureValue,
        examination_window_ms: int | None = None,
    ) -> Document:
        """Move a created document to examination by a chosen expert."""
        self._require_valid(admin_certificate, Role.ADMINISTRATOR)
        with self._lock:
            doc = self._get(doc_id)
            self._guard_state(doc, DocumentStatus.ON_EXAMINATION)
            expert_cert = self.cert_resolver(expert_cert_id)
            if expert_cert is None or expert_cert.holder_category is not Role.EXPERT:
                raise NotAnExpert(f"certificate {expert_cert_id} is not an expert")
            if (
                self.validity_checker(expert_cert.cert_hash(), self.clock())
                is not Validity.VALID
            ):
                raise InvalidCertificate(
                    f"expert certificate {expert_cert_id} is not valid"
                )
            self._check_signature(
                admin_certificate, doc_id, DocumentStatus.ON_EXAMINATION,
                timestamp, doc.content_digest, signature,
            )
            self._check_timestamp(timestamp, doc)
            window = (
                self.examination_window_ms
                if examination_window_ms is None
                else examination_window_ms
            )
            doc.assigned_expert_id = expert_cert_id
            doc.deadline = self.clock() + window
            self._record(
                doc, DocumentStatus.ON_EXAMINATION, timestamp,
                admin_certificate.cert_id, signature,
            )
            return doc

    def decide(
        self,
        expert_certificate: Certificate,
        doc_id: str,
        verdict: DocumentStatus,
        timestamp: int,
        signature: crypto.SignatureValue,
        append_authorization: crypto.SignatureValue | None = None,
    ) -> Document:
        """Record the assigned expert's verdict before the deadline."""
        if verdict not in (DocumentStatus.APPROVED, DocumentStatus.REJECTED):
            raise WrongStatus(f"verdict must be Approved or Rejected, not {verdict}")
        self._require_valid(expert_certificate, Role.EXPERT)
        with self._lock:
            doc = self._get(doc_id)
            if doc.status is DocumentStatus.EXPIRED:
                raise DeadlinePassed(f"examination window for {doc_id} has closed")
            self._guard_state(doc, verdict)
            if expert_certificate.cert_id != doc.assigned_expert_id:
                raise NotAssignedExpert(
                    f"certificate {expert_certificate.cert_id} is not assigned"
                    f" to {doc_id}"
                )
            assert doc.deadline is not None
            if self.clock() >= doc.deadline:
                raise DeadlinePassed(f"examination window for {doc_id} has closed")
            self._check_signature(
                expert_certificate, doc_id, verdict, timestamp,
                doc.content_digest, signature,
            )
            self._check_timestamp(timestamp, doc)
            if verdict is DocumentStatus.APPROVED:
                self._check_append_authorization(
                    doc, expert_certificate.cert_id, append_authorization
                )
                doc.append_authorization = append_authorization
            self._record(
                doc, verdict, timestamp, expert_certificate.cert_id, signature
            )
            return doc

    def _check_append_authorization(
        self,
        doc: Document,
        expert_cert_id: int,
        authorization: crypto.SignatureValue | None,
    ) -> None:
        if authorization is None:
            raise AppendAuthorizationError(
                "approval requires the expert's append-authorization signature"
            )
        public = self.append_key_resolver(expert_cert_id)
        if public is None:
            raise AppendAuthorizationError(
                f"no append key registered for certificate {expert_cert_id}"
            )
        message = append_auth_bytes(doc.doc_id, doc.content_digest)
        if not crypto.verify(public, message, authorization):
            raise AppendAuthorizationError("append authorization does not verify")

    def expire_documents(self, now: int | None = None) -> list[str]:
        """Expire every overdue examination; idempotent, administrator-signed."""
        now = self.clock() if now is None else now
        expired = []
        with self._lock:
            for doc in self.documents.values():
                if (
                    doc.status is DocumentStatus.ON_EXAMINATION
                    and doc.deadline is not None
                    and doc.deadline <= now
                ):
                    signature = sign_transition(
                        self.admin_keypair, doc.doc_id, DocumentStatus.EXPIRED,
                        now, doc.content_digest,
                    )
                    self._record(
                        doc, DocumentStatus.EXPIRED, now, self.admin_cert_id,
                        signature,
                    )
                    expired.append(doc.doc_id)
        return expired

    def archive(
        self,
        admin_certificate: Certificate,
        doc_id: str,
        timestamp: int,
        signature: crypto.SignatureValue,
    ) -> tuple[Document, ledger.LedgerRow]:
        """Commit an approved document's final transaction to the main chain.

        The caller's signature becomes the archiver signature; the final
        transaction is assembled from the transition log and committed via
        the guard, so a tampered ledger file raises before anything changes.
        """
        self._require_valid(admin_certificate, Role.ADMINISTRATOR)
        with self._lock:
            doc = self._get(doc_id)
            self._guard_state(doc, DocumentStatus.ADDED)
            self._check_signature(
                admin_certificate, doc_id, DocumentStatus.ADDED, timestamp,
                doc.content_digest, signature,
            )
            self._check_timestamp(timestamp, doc)
            self._check_append_authorization(
                doc, doc.assigned_expert_id, doc.append_authorization
            )

            created = doc.transition(DocumentStatus.CREATED)
            approved = doc.transition(DocumentStatus.APPROVED)
            assert created is not None and approved is not None
            tx = ledger.FinalTransaction(
                tx_timestamp=timestamp,
                doc_created_at=created.timestamp,
                metadata={
                    **doc.metadata,
                    "creator_cert_id": str(created.signer_cert_id),
                    "examiner_cert_id": str(approved.signer_cert_id),
                    "archiver_cert_id": str(admin_certificate.cert_id),
                },
                creator_signature=created.signature,
                examined_at=approved.timestamp,
                examiner_signature=approved.signature,
                archiver_signature=signature,
            )
            outcome = guard.guarded_append(
                self.ledger_file,
                tx,
                self.guard_dir,
                lambda t: ledger.append(
                    self.chain,
                    t,
                    self.admin_keypair,
                    self.admin_cert_id,
                    self.clock,
                    tx_validator=self.validate_final_transaction,
                ),
                sign_len=self.guard_sign_len,
                name_len=self.guard_name_len,
                audit_log=self.audit_log,
                alarm_sinks=self.alarm_sinks,
            )
            row = outcome.row
            assert isinstance(row, ledger.LedgerRow)
            doc.ledger_index = row.index
            self._record(
                doc, DocumentStatus.ADDED, timestamp, admin_certificate.cert_id,
                signature,
            )
            return doc, row

    def validate_final_transaction(self, tx: ledger.FinalTransaction) -> None:
        """Re-verify the three participant signatures inside a transaction."""
        meta = tx.metadata
        doc_id = meta.get("doc_id", "")
        digest_hex = meta.get("content_digest", "")
        try:
            content_digest = bytes.fromhex(digest_hex)
        except ValueError:
            raise ledger.InvalidTransaction("bad content digest in metadata")
        checks = (
            ("creator_cert_id", DocumentStatus.CREATED, tx.doc_created_at,
             tx.creator_signature),
            ("examiner_cert_id", DocumentStatus.APPROVED, tx.examined_at,
             tx.examiner_signature),
            ("archiver_cert_id", DocumentStatus.ADDED, tx.tx_timestamp,
             tx.archiver_signature),
        )
        for key, status, ts, sig in checks:
            cert = self.cert_resolver(int(meta.get(key, "0") or "0"))
            if cert is None:
                raise ledger.InvalidTransaction(f"unresolvable {key}")
            message = transition_bytes(doc_id, status, ts, content_digest)
            if not crypto.verify(cert.public_key, message, sig):
                raise ledger.InvalidTransaction(f"{key} signature does not verify")

    # -- queries ------------------------------------------------------------

    def _get(self, doc_id: str) -> Document:
        doc = self.documents.get(doc_id)
        if doc is None:
            raise WorkflowError(f"unknown document {doc_id}")
        return doc

    def get_document(self, doc_id: str) -> Document | None:
        return self.documents.get(doc_id)

    def list_documents(
        self, status: DocumentStatus | None = None
    ) -> list[Document]:
        docs = list(self.documents.values())
        if status is not None:
            docs = [d for d in docs if d.status is status]
        return docs
