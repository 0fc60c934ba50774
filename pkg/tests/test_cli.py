"""Offline CLI surfaces: verification, guard custody, identity handling."""

import json

import pytest
from click.testing import CliRunner

from archivechain import cli, guard
from archivechain.config import load_cli_config, load_identity
from tests.conftest import Flow, make_cast, make_engine


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def audit_bundle(tmp_path):
    """A ledger with three archived documents plus the certificate export."""
    cast = make_cast(tmp_path)
    engine = make_engine(cast, tmp_path / "node")
    engine.ensure_genesis("audit ledger")
    flow = Flow(cast=cast, engine=engine)
    for i in range(3):
        flow.run_to_added(f"doc {i}".encode())
    certs_dir = tmp_path / "certs"
    certs_dir.mkdir()
    for cert_id in (1, cast.user.cert_id, cast.expert.cert_id, cast.admin.cert_id):
        text = cast.authority.certificate_text(cert_id)
        (certs_dir / f"{cert_id}.crt").write_text(text)
    return {
        "cast": cast,
        "ledger": tmp_path / "node" / "ledger.tsv",
        "guard_dir": tmp_path / "node" / "guard",
        "certs": certs_dir,
        "identity": tmp_path / "expert.id",
    }


# -- chain verify ------------------------------------------------------------------


def test_chain_verify_pristine(runner, audit_bundle):
    result = runner.invoke(cli.main, [
        "chain", "verify", str(audit_bundle["ledger"]),
        "--certs", str(audit_bundle["certs"]),
    ])
    assert result.exit_code == 0, result.output
    assert "valid, 4 rows" in result.output


def test_chain_verify_structured_output(runner, audit_bundle):
    result = runner.invoke(cli.main, [
        "--format", "structured",
        "chain", "verify", str(audit_bundle["ledger"]),
        "--certs", str(audit_bundle["certs"]),
    ])
    assert result.exit_code == 0
    values = dict(
        line.split("=", 1) for line in result.output.strip().splitlines()
    )
    assert values["valid"] == "true"
    assert values["rows"] == "4"
    assert values["signatures_checked"] == "true"


def test_chain_verify_flipped_byte_exits_3(runner, audit_bundle, tmp_path):
    lines = audit_bundle["ledger"].read_text().splitlines()
    fields = lines[2].split("\t")
    payload = bytearray.fromhex(fields[2])
    payload[5] ^= 0x10
    fields[2] = payload.hex()
    lines[2] = "\t".join(fields)
    bad = tmp_path / "tampered.tsv"
    bad.write_text("".join(line + "\n" for line in lines))
    result = runner.invoke(cli.main, ["chain", "verify", str(bad)])
    assert result.exit_code == 3
    assert "row 2" in result.output


def test_chain_verify_without_certs_is_structure_only(runner, audit_bundle):
    result = runner.invoke(cli.main, [
        "chain", "verify", str(audit_bundle["ledger"]),
    ])
    assert result.exit_code == 0
    assert "structure only" in result.output


def test_chain_show_lists_rows(runner, audit_bundle):
    result = runner.invoke(cli.main, ["chain", "show", str(audit_bundle["ledger"])])
    assert result.exit_code == 0
    lines = result.output.strip().splitlines()
    assert len(lines) == 4
    assert "genesis" in lines[0]
    assert "transaction" in lines[1]


def test_chain_verify_usage_error(runner):
    result = runner.invoke(cli.main, ["chain", "verify", "/does/not/exist"])
    assert result.exit_code == 2


# -- guard commands ------------------------------------------------------------------


def test_guard_check_ok(runner, audit_bundle):
    result = runner.invoke(cli.main, [
        "guard", "check", str(audit_bundle["ledger"]),
        "--guard-dir", str(audit_bundle["guard_dir"]),
    ])
    assert result.exit_code == 0, result.output
    assert "matches" in result.output


def test_guard_check_tampered_exits_3(runner, audit_bundle):
    path = audit_bundle["ledger"]
    data = path.read_bytes()
    path.write_bytes(data[:100] + bytes([data[100] ^ 1]) + data[101:])
    result = runner.invoke(cli.main, [
        "guard", "check", str(path),
        "--guard-dir", str(audit_bundle["guard_dir"]),
    ])
    assert result.exit_code == 3
    assert "MISMATCH" in result.output


def test_guard_check_missing_secret_is_operation_error(runner, audit_bundle):
    for secret in guard._secret_files(audit_bundle["guard_dir"]):
        secret.unlink()
    result = runner.invoke(cli.main, [
        "guard", "check", str(audit_bundle["ledger"]),
        "--guard-dir", str(audit_bundle["guard_dir"]),
    ])
    assert result.exit_code == 1


def test_guard_export_import_roundtrip(runner, audit_bundle, tmp_path):
    exported = tmp_path / "sig.hex"
    result = runner.invoke(cli.main, [
        "guard", "export", "--guard-dir", str(audit_bundle["guard_dir"]),
        "-o", str(exported), "--remove",
    ])
    assert result.exit_code == 0, result.output
    assert guard._secret_files(audit_bundle["guard_dir"]) == []
    result = runner.invoke(cli.main, [
        "guard", "import", str(exported),
        "--guard-dir", str(audit_bundle["guard_dir"]),
    ])
    assert result.exit_code == 0, result.output
    result = runner.invoke(cli.main, [
        "guard", "check", str(audit_bundle["ledger"]),
        "--guard-dir", str(audit_bundle["guard_dir"]),
    ])
    assert result.exit_code == 0


# -- certificates ---------------------------------------------------------------------


def test_cert_show_from_identity(runner, audit_bundle):
    result = runner.invoke(cli.main, [
        "--identity", str(audit_bundle["identity"]), "cert", "show",
    ])
    assert result.exit_code == 0
    assert result.output.startswith("certificate_id: ")
    assert len(result.output.strip().splitlines()) == 10


def test_identity_round_trip_and_permissions(audit_bundle):
    path = audit_bundle["identity"]
    assert (path.stat().st_mode & 0o777) == 0o600
    identity = load_identity(path)
    assert identity.append_keypair is not None  # experts carry the second key


# -- config resolution -----------------------------------------------------------------


def test_config_precedence(tmp_path, monkeypatch):
    config_file = tmp_path / "cfg.json"
    config_file.write_text(json.dumps({
        "node": "http://file-node", "ca": "http://file-ca",
        "format": "structured",
    }))
    cfg = load_cli_config(config_file, None, None, None, None)
    assert cfg.node_url == "http://file-node"
    assert cfg.output_format == "structured"
    monkeypatch.setenv("ARCHIVECHAIN_NODE", "http://env-node")
    cfg = load_cli_config(config_file, None, None, None, None)
    assert cfg.node_url == "http://env-node"  # env beats file
    cfg = load_cli_config(config_file, "http://flag-node", None, None, None)
    assert cfg.node_url == "http://flag-node"  # flag beats env


def test_missing_identity_is_usage_error(runner, tmp_path):
    result = runner.invoke(cli.main, ["cert", "show"])
    assert result.exit_code == 2
