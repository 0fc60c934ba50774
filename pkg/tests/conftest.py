import base64
from dataclasses import dataclass
from pathlib import Path

import pytest

from archivechain import crypto, workflow
from archivechain.ca import CertificationAuthority, Profile, Role
from archivechain.config import Identity, load_identity, save_identity
from archivechain.workflow import DocumentStatus, DocumentWorkflow

FIXED_CLOCK_START = 1_760_000_000_000


class StepClock:
    """Deterministic millisecond clock that ticks on every read."""

    def __init__(self, start: int = FIXED_CLOCK_START, step: int = 7):
        self.now = start
        self.step = step

    def __call__(self) -> int:
        self.now += self.step
        return self.now

    def advance(self, ms: int) -> None:
        self.now += ms


@pytest.fixture(scope="session")
def keypair() -> crypto.KeyPair:
    return crypto.keygen(b"\x11" * 64)


@pytest.fixture(scope="session")
def other_keypair() -> crypto.KeyPair:
    return crypto.keygen(b"\x22" * 64)


def make_authority(path: Path, clock=None) -> CertificationAuthority:
    kwargs = {"password_iterations": 10}
    if clock is not None:
        kwargs["clock"] = clock
    authority = CertificationAuthority(path, **kwargs)
    authority.bootstrap(
        "ca-admin",
        "rootpassword",
        Profile("Root", "Authority", "Archive", "ca@archive.test"),
    )
    return authority


@dataclass
class Cast:
    """A bootstrapped authority plus one identity per workflow role."""

    authority: CertificationAuthority
    user: Identity
    expert: Identity
    admin: Identity
    clock: StepClock

    def identity_for(self, role: Role) -> Identity:
        return {
            Role.USER: self.user,
            Role.EXPERT: self.expert,
            Role.ADMINISTRATOR: self.admin,
        }[role]


def make_cast(path: Path, clock: StepClock | None = None) -> Cast:
    clock = clock or StepClock()
    authority = make_authority(path / "ca", clock=clock)
    ca_admin = authority.find_account("ca-admin")
    identities = {}
    for name, role in (
        ("user", Role.USER),
        ("expert", Role.EXPERT),
        ("admin", Role.ADMINISTRATOR),
    ):
        account = authority.register_user(
            name,
            "password123",
            Profile(name.title(), "Person", "Org", f"{name}@archive.test"),
        )
        credentials = authority.assign_role(ca_admin, account.user_id, role)
        assert credentials is not None
        identity_path = path / f"{name}.id"
        blob = {
            "cert_id": credentials.certificate.cert_id,
            "scheme": credentials.certificate.keygen_algorithm,
            "private_key": credentials.private_key.hex(),
            "public_key": credentials.certificate.public_key.hex(),
            "certificate": credentials.certificate.canonical_text(),
        }
        if credentials.append_private_key:
            blob["append_private_key"] = credentials.append_private_key.hex()
            blob["append_public_key"] = credentials.append_public_key.hex()
        save_identity(identity_path, blob)
        identities[name] = load_identity(identity_path)
    return Cast(
        authority=authority,
        user=identities["user"],
        expert=identities["expert"],
        admin=identities["admin"],
        clock=clock,
    )


@pytest.fixture
def cast(tmp_path) -> Cast:
    return make_cast(tmp_path)


def make_engine(cast: Cast, path: Path, **kwargs) -> DocumentWorkflow:
    authority = cast.authority
    defaults = dict(
        ledger_file=path / "ledger.tsv",
        guard_dir=path / "guard",
        admin_keypair=cast.admin.keypair,
        admin_cert_id=cast.admin.cert_id,
        validity_checker=authority.check_validity,
        cert_resolver=authority.get_certificate,
        append_key_resolver=authority.append_public_key,
        clock=cast.clock,
    )
    defaults.update(kwargs)
    return DocumentWorkflow(**defaults)


@dataclass
class Flow:
    """Drives a workflow engine with correctly signed transitions."""

    cast: Cast
    engine: DocumentWorkflow

    def submit(self, content: bytes = b"document body", doc_id=None, **meta):
        import uuid

        identity = self.cast.user
        metadata = {
            "title": "Report",
            "author": "User Person",
            "organization": "Org",
            **meta,
        }
        doc_id = doc_id or uuid.uuid4().hex
        ts = self.cast.clock()
        signature = workflow.sign_transition(
            identity.keypair, doc_id, DocumentStatus.CREATED, ts,
            crypto.digest(content),
        )
        return self.engine.create_document(
            certificate=identity.certificate,
            content=content,
            metadata=metadata,
            timestamp=ts,
            signature=signature,
            doc_id=doc_id,
        )

    def assign(self, doc_id: str, expert_cert_id=None, window_ms=None):
        identity = self.cast.admin
        doc = self.engine.documents[doc_id]
        ts = self.cast.clock()
        return self.engine.assign_expert(
            admin_certificate=identity.certificate,
            doc_id=doc_id,
            expert_cert_id=expert_cert_id or self.cast.expert.cert_id,
            timestamp=ts,
            signature=workflow.sign_transition(
                identity.keypair, doc_id, DocumentStatus.ON_EXAMINATION, ts,
                doc.content_digest,
            ),
            examination_window_ms=window_ms,
        )

    def decide(self, doc_id: str, verdict: DocumentStatus, identity=None):
        identity = identity or self.cast.expert
        doc = self.engine.documents[doc_id]
        ts = self.cast.clock()
        append_auth = None
        if verdict is DocumentStatus.APPROVED and identity.append_keypair:
            append_auth = workflow.sign_append_authorization(
                identity.append_keypair, doc_id, doc.content_digest
            )
        return self.engine.decide(
            expert_certificate=identity.certificate,
            doc_id=doc_id,
            verdict=verdict,
            timestamp=ts,
            signature=workflow.sign_transition(
                identity.keypair, doc_id, verdict, ts, doc.content_digest
            ),
            append_authorization=append_auth,
        )

    def archive(self, doc_id: str):
        identity = self.cast.admin
        doc = self.engine.documents[doc_id]
        ts = self.cast.clock()
        return self.engine.archive(
            admin_certificate=identity.certificate,
            doc_id=doc_id,
            timestamp=ts,
            signature=workflow.sign_transition(
                identity.keypair, doc_id, DocumentStatus.ADDED, ts,
                doc.content_digest,
            ),
        )

    def run_to_added(self, content: bytes = b"body") -> tuple:
        doc = self.submit(content)
        self.assign(doc.doc_id)
        self.decide(doc.doc_id, DocumentStatus.APPROVED)
        return self.archive(doc.doc_id)


@pytest.fixture
def flow(cast, tmp_path) -> Flow:
    engine = make_engine(cast, tmp_path / "node")
    engine.ensure_genesis("archive ledger")
    return Flow(cast=cast, engine=engine)


def encode_content(content: bytes) -> str:
    return base64.b64encode(content).decode()
