"""Certification authority: accounts, issuance, the two chains, validity."""

import time

import pytest

from archivechain import crypto, ledger
from archivechain.ca import (
    NO_EXPIRY,
    Certificate,
    CertificationAuthority,
    DuplicateUsername,
    Profile,
    Role,
    Unauthorized,
    UnconfirmedHolder,
    UnknownUser,
    Validity,
    WeakPassword,
)
from tests.conftest import StepClock, make_authority

PROFILE = Profile("Ada", "Archivist", "Records Office", "ada@records.test")


@pytest.fixture
def authority(tmp_path):
    return make_authority(tmp_path / "ca")


@pytest.fixture
def ca_admin(authority):
    return authority.find_account("ca-admin")


# -- registration ---------------------------------------------------------------


def test_fresh_registration_is_unconfirmed(authority):
    account = authority.register_user("ada", "longenough", PROFILE)
    assert account.role is Role.UNCONFIRMED_USER
    assert account.active_cert_id is None


def test_duplicate_username(authority):
    authority.register_user("ada", "longenough", PROFILE)
    with pytest.raises(DuplicateUsername):
        authority.register_user("ada", "otherpassword", PROFILE)


def test_weak_password(authority):
    with pytest.raises(WeakPassword):
        authority.register_user("ada", "short", PROFILE)


def test_authenticate(authority):
    authority.register_user("ada", "longenough", PROFILE)
    assert authority.authenticate("ada", "longenough") is not None
    assert authority.authenticate("ada", "wrongpassword") is None
    assert authority.authenticate("nobody", "longenough") is None


def test_no_plaintext_password_stored(authority, tmp_path):
    authority.register_user("ada", "veryuniquepassword", PROFILE)
    stored = (authority.data_dir / "accounts.sqlite").read_bytes()
    assert b"veryuniquepassword" not in stored


# -- roles and issuance -----------------------------------------------------------


def test_assign_role_issues_certificate_from_profile(authority, ca_admin):
    account = authority.register_user("ada", "longenough", PROFILE)
    credentials = authority.assign_role(ca_admin, account.user_id, Role.EXPERT)
    cert = credentials.certificate
    assert cert.holder_name == "Ada Archivist"
    assert cert.holder_email == PROFILE.email
    assert cert.holder_org == PROFILE.organization
    assert cert.holder_category is Role.EXPERT
    assert authority.get_account(account.user_id).active_cert_id == cert.cert_id


def test_assign_role_requires_ca_admin(authority, ca_admin):
    account = authority.register_user("ada", "longenough", PROFILE)
    with pytest.raises(Unauthorized):
        authority.assign_role(account, account.user_id, Role.USER)
    with pytest.raises(UnknownUser):
        authority.assign_role(ca_admin, 9999, Role.USER)


def test_demotion_to_unconfirmed_revokes(authority, ca_admin):
    account = authority.register_user("ada", "longenough", PROFILE)
    credentials = authority.assign_role(ca_admin, account.user_id, Role.EXPERT)
    cert_hash = credentials.certificate.cert_hash()
    assert authority.check_validity(cert_hash) is Validity.VALID
    authority.assign_role(ca_admin, account.user_id, Role.UNCONFIRMED_USER)
    assert authority.check_validity(cert_hash) is Validity.REVOKED
    updated = authority.get_account(account.user_id)
    assert updated.role is Role.UNCONFIRMED_USER
    assert updated.active_cert_id is None


def test_unconfirmed_holder_cannot_get_certificate(authority):
    account = authority.register_user("ada", "longenough", PROFILE)
    with pytest.raises(UnconfirmedHolder):
        authority.issue_certificate(account.user_id)


def test_issuance_appends_matching_hash_to_chain(authority, ca_admin):
    account = authority.register_user("ada", "longenough", PROFILE)
    before = len(authority.all_chain)
    credentials = authority.assign_role(ca_admin, account.user_id, Role.USER)
    assert len(authority.all_chain) == before + 1
    payload = ledger.decode_payload(authority.all_chain.head.payload)
    assert isinstance(payload, ledger.CertHashPayload)
    assert payload.cert_hash == credentials.certificate.cert_hash()


def test_reissue_revokes_previous_certificate(authority, ca_admin):
    account = authority.register_user("ada", "longenough", PROFILE)
    first = authority.assign_role(ca_admin, account.user_id, Role.USER)
    revoked_before = len(authority.revoked_chain)
    second = authority.issue_certificate(account.user_id)
    assert len(authority.revoked_chain) == revoked_before + 1
    assert authority.check_validity(first.certificate.cert_hash()) is Validity.REVOKED
    assert authority.check_validity(second.certificate.cert_hash()) is Validity.VALID


def test_private_key_never_persisted(authority, ca_admin, tmp_path):
    account = authority.register_user("ada", "longenough", PROFILE)
    credentials = authority.assign_role(ca_admin, account.user_id, Role.EXPERT)
    private = bytes.fromhex(credentials.private_key.hex())
    append_private = credentials.append_private_key
    for path in authority.data_dir.rglob("*"):
        if path.is_file() and path.name != "ca_admin.key":
            blob = path.read_bytes()
            assert private not in blob
            assert private.hex().encode() not in blob
            assert append_private not in blob


def test_expert_gets_append_key_others_do_not(authority, ca_admin):
    expert = authority.register_user("e", "longenough", PROFILE)
    user = authority.register_user("u", "longenough", PROFILE)
    expert_creds = authority.assign_role(ca_admin, expert.user_id, Role.EXPERT)
    user_creds = authority.assign_role(ca_admin, user.user_id, Role.USER)
    assert expert_creds.append_private_key is not None
    assert user_creds.append_private_key is None
    cert_id = expert_creds.certificate.cert_id
    assert authority.append_public_key(cert_id) == expert_creds.append_public_key
    records = authority.list_append_keys()
    assert any(cid == cert_id for cid, _, _ in records)
    for cid, public, signature in records:
        from archivechain.ca import append_key_record_bytes

        assert crypto.verify(
            authority.admin_keypair.public_bytes(),
            append_key_record_bytes(cid, public),
            signature,
        )


# -- certificate text -------------------------------------------------------------


def test_certificate_text_has_ten_ordered_lines(authority, ca_admin):
    account = authority.register_user("ada", "longenough", PROFILE)
    credentials = authority.assign_role(ca_admin, account.user_id, Role.USER)
    text = credentials.certificate.canonical_text()
    lines = text.splitlines()
    assert len(lines) == 10
    assert [line.split(":")[0] for line in lines] == [
        "certificate_id", "holder_id", "holder_name", "holder_email",
        "holder_organization", "holder_category", "public_key", "expires_at",
        "keygen_algorithm", "ca_metadata",
    ]
    assert text.endswith("\n")
    assert Certificate.from_text(text) == credentials.certificate


def test_certificate_hash_is_over_canonical_text(authority, ca_admin):
    account = authority.register_user("ada", "longenough", PROFILE)
    cert = authority.assign_role(ca_admin, account.user_id, Role.USER).certificate
    assert cert.cert_hash() == crypto.digest(cert.canonical_text().encode())


def test_certificate_rejects_embedded_newlines(keypair):
    with pytest.raises(ValueError):
        Certificate(
            cert_id=1, holder_id=1, holder_name="a\nb", holder_email="e",
            holder_org="o", holder_category=Role.USER,
            public_key=keypair.public_bytes(), expires_at=1,
            keygen_algorithm="alg", ca_metadata="m",
        )


# -- validity ---------------------------------------------------------------------


def test_unknown_hash(authority):
    assert authority.check_validity(crypto.digest(b"never issued")) is Validity.UNKNOWN


def test_revoked_chain_wins_over_all_chain(authority, ca_admin):
    # a hash present in both chains must always come back revoked
    account = authority.register_user("ada", "longenough", PROFILE)
    credentials = authority.assign_role(ca_admin, account.user_id, Role.USER)
    cert_hash = credentials.certificate.cert_hash()
    authority.issue_certificate(account.user_id)  # revokes the first
    assert cert_hash in authority._all_index
    assert cert_hash in authority._revoked_index
    assert authority.check_validity(cert_hash) is Validity.REVOKED


def test_synthetic_overlaps_always_revoked(authority, ca_admin):
    overlapping = []
    for i in range(10):
        account = authority.register_user(f"u{i}", "longenough", PROFILE)
        creds = authority.assign_role(ca_admin, account.user_id, Role.USER)
        authority.issue_certificate(account.user_id)
        overlapping.append(creds.certificate.cert_hash())
    assert all(
        authority.check_validity(h) is Validity.REVOKED for h in overlapping
    )


def test_expired_certificate_revoked_on_sight(tmp_path):
    clock = StepClock()
    authority = CertificationAuthority(
        tmp_path / "ca", clock=clock, password_iterations=10,
        cert_lifetime_ms=1000,
    )
    authority.bootstrap("ca-admin", "rootpassword", PROFILE)
    ca_admin = authority.find_account("ca-admin")
    account = authority.register_user("ada", "longenough", PROFILE)
    credentials = authority.assign_role(ca_admin, account.user_id, Role.USER)
    cert_hash = credentials.certificate.cert_hash()
    assert authority.check_validity(cert_hash) is Validity.VALID
    clock.advance(10_000)
    assert authority.check_validity(cert_hash) is Validity.REVOKED
    assert authority.get_account(account.user_id).prompted_for_renewal


# -- expiry sweep ------------------------------------------------------------------


def test_expiry_sweep(tmp_path):
    clock = StepClock()
    authority = CertificationAuthority(
        tmp_path / "ca", clock=clock, password_iterations=10,
        cert_lifetime_ms=5_000,
    )
    authority.bootstrap("ca-admin", "rootpassword", PROFILE)
    ca_admin = authority.find_account("ca-admin")

    fresh = authority.register_user("fresh", "longenough", PROFILE)
    stale = authority.register_user("stale", "longenough", PROFILE)
    stale_creds = authority.assign_role(ca_admin, stale.user_id, Role.USER)
    clock.advance(60_000)
    fresh_creds = authority.assign_role(ca_admin, fresh.user_id, Role.USER)

    assert authority.check_expiry(clock.now) == [stale_creds.certificate.cert_id]
    assert (
        authority.check_validity(stale_creds.certificate.cert_hash())
        is Validity.REVOKED
    )
    assert (
        authority.check_validity(fresh_creds.certificate.cert_hash())
        is Validity.VALID
    )
    assert authority.get_account(stale.user_id).prompted_for_renewal
    # idempotent: a second sweep at the same instant revokes nothing
    assert authority.check_expiry(clock.now) == []


def test_no_certificates_expired_is_a_noop(authority):
    all_len = len(authority.all_chain)
    revoked_len = len(authority.revoked_chain)
    assert authority.check_expiry() == []
    assert len(authority.all_chain) == all_len
    assert len(authority.revoked_chain) == revoked_len


def test_ca_admin_certificate_never_expires(authority):
    cert = authority.get_certificate(authority.admin_cert_id)
    assert cert.expires_at == NO_EXPIRY
    assert authority.check_expiry(NO_EXPIRY - 1) == []
    assert authority.check_validity(cert.cert_hash()) is Validity.VALID


# -- chain integrity ----------------------------------------------------------------


def test_cert_chains_are_tamper_evident(authority, ca_admin, tmp_path):
    for i in range(5):
        account = authority.register_user(f"u{i}", "longenough", PROFILE)
        authority.assign_role(ca_admin, account.user_id, Role.USER)
    path = authority.data_dir / "certs_all.tsv"
    lines = path.read_text().splitlines()
    resolver = lambda _cid: authority.admin_keypair.public_bytes()
    assert ledger.verify_chain(
        ledger.Chain.load(path), key_resolver=resolver
    ).valid
    for k in (1, 3, len(lines) - 1):
        fields = lines[k].split("\t")
        payload = bytearray.fromhex(fields[2])
        payload[1] ^= 0x40
        mutated = lines.copy()
        mutated[k] = "\t".join(
            [fields[0], fields[1], payload.hex()] + fields[3:]
        )
        tampered_path = tmp_path / f"tampered{k}.tsv"
        tampered_path.write_text("".join(line + "\n" for line in mutated))
        report = ledger.verify_chain(
            ledger.Chain.load(tampered_path), key_resolver=resolver
        )
        assert not report.valid and report.first_bad_index == k


def test_chains_reload_with_indexes(authority, ca_admin, tmp_path):
    account = authority.register_user("ada", "longenough", PROFILE)
    creds = authority.assign_role(ca_admin, account.user_id, Role.USER)
    reopened = CertificationAuthority(authority.data_dir, password_iterations=10)
    assert reopened.is_bootstrapped
    assert (
        reopened.check_validity(creds.certificate.cert_hash()) is Validity.VALID
    )


# -- broadcast ---------------------------------------------------------------------


def test_issuance_with_zero_subscribers(authority, ca_admin):
    account = authority.register_user("ada", "longenough", PROFILE)
    assert authority.assign_role(ca_admin, account.user_id, Role.USER) is not None


def test_subscribers_receive_rows_in_order(authority, ca_admin):
    received = []
    authority.subscribe(lambda chain, rows: received.append((chain, rows)))
    account = authority.register_user("ada", "longenough", PROFILE)
    authority.assign_role(ca_admin, account.user_id, Role.USER)
    authority.issue_certificate(account.user_id)
    chains = [chain for chain, _ in received]
    assert chains == ["all", "revoked", "all"]
    for _, rows in received:
        assert all(isinstance(r, ledger.LedgerRow) for r in rows)


def test_failing_subscriber_never_blocks_issuance(authority, ca_admin):
    attempts = []

    def flaky(chain, rows):
        attempts.append(chain)
        if len(attempts) == 1:
            raise ConnectionError("down")

    authority.subscribe(flaky)
    account = authority.register_user("ada", "longenough", PROFILE)
    credentials = authority.assign_role(ca_admin, account.user_id, Role.USER)
    assert credentials is not None  # issuance unaffected
    deadline = time.time() + 3
    while len(attempts) < 2 and time.time() < deadline:
        time.sleep(0.05)
    assert len(attempts) >= 2  # delivery retried in the background
