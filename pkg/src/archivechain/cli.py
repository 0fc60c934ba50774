"""Operator command line for every role plus offline audit tooling.

Online commands talk to the node and authority over HTTP; `chain verify`
and `guard check` work purely on local files so an auditor can re-check a
shipped ledger without any running service.

Exit codes: 0 success, 1 operation error, 2 usage error, 3 integrity alarm.
"""

from __future__ import annotations

import base64
import json
import uuid
from pathlib import Path

import click
import httpx

from . import crypto, guard, ledger, workflow
from .ca import Certificate
from .config import CliConfig, load_cli_config, load_identity, save_identity

_FMT_CHOICES = click.Choice(["text", "structured"])


class IntegrityAlarm(click.ClickException):
    exit_code = 3


def _emit(cfg: CliConfig, pairs: list[tuple[str, object]], text: str) -> None:
    if cfg.output_format == "structured":
        for key, value in pairs:
            click.echo(f"{key}={value}")
    else:
        click.echo(text)


def _client(base_url: str) -> httpx.Client:
    return httpx.Client(base_url=base_url, timeout=30)


def _check_http(response: httpx.Response) -> dict:
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise click.ClickException(f"HTTP {response.status_code}: {detail}")
    if "application/json" in response.headers.get("content-type", ""):
        return response.json()
    return {}


def _require_identity(cfg: CliConfig):
    if cfg.identity_path is None:
        raise click.UsageError("this command needs --identity (or ARCHIVECHAIN_IDENTITY)")
    return load_identity(cfg.identity_path)


def _unwrap(update: dict) -> dict:
    """Turn an error envelope into an exception; pass status bodies through."""
    msg_type = update.get("msg_type")
    body = update.get("body", {})
    if msg_type == "error":
        name = body.get("error", "Error")
        message = body.get("message", "")
        if name in ("GuardAlarm",):
            raise IntegrityAlarm(f"{name}: {message}")
        raise click.ClickException(f"{name}: {message}")
    return body


def _post_envelope(cfg: CliConfig, identity, path: str, msg_type: str, body: dict) -> dict:
    body = {**body, "certificate": identity.certificate_text}
    envelope = _make_signed_envelope(identity, msg_type, body)
    with _client(cfg.node_url) as client:
        data = _check_http(client.post(path, json=envelope))
    return _unwrap(data)


def _make_signed_envelope(identity, msg_type: str, body: dict) -> dict:
    from .node import make_envelope

    return make_envelope(
        identity.keypair, identity.cert_id, msg_type, body
    ).to_dict()


def _transition_block(identity, doc_id: str, status: workflow.DocumentStatus,
                      content_digest: bytes) -> dict:
    timestamp = workflow.now_ms()
    signature = workflow.sign_transition(
        identity.keypair, doc_id, status, timestamp, content_digest
    )
    return {"timestamp": timestamp, "signature": signature.to_bytes().hex()}


def _fetch_document(cfg: CliConfig, doc_id: str) -> dict:
    with _client(cfg.node_url) as client:
        return _check_http(client.get(f"/documents/{doc_id}"))


@click.group(context_settings={"auto_envvar_prefix": "ARCHIVECHAIN"})
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="JSON config file.")
@click.option("--node", "node_url", default=None, help="Node base URL.")
@click.option("--ca", "ca_url", default=None, help="Authority base URL.")
@click.option("--identity", "identity_path", type=click.Path(path_type=Path),
              default=None, help="Identity file with certificate and keys.")
@click.option("--format", "output_format", type=_FMT_CHOICES, default=None,
              help="Output style (text or structured).")
@click.pass_context
def main(ctx, config_path, node_url, ca_url, identity_path, output_format):
    """Archival blockchain client and audit tools."""
    ctx.obj = load_cli_config(
        config_path, node_url, ca_url, identity_path, output_format
    )


# ---------------------------------------------------------------------------
# account commands


@main.command()
@click.option("--username", required=True)
@click.option("--password", required=True)
@click.option("--first-name", default="")
@click.option("--last-name", default="")
@click.option("--organization", default="")
@click.option("--email", default="")
@click.pass_obj
def register(cfg: CliConfig, username, password, first_name, last_name,
             organization, email):
    """Create an account with the authority (starts unconfirmed)."""
    with _client(cfg.ca_url) as client:
        data = _check_http(client.post("/register", json={
            "username": username,
            "password": password,
            "profile": {
                "first_name": first_name,
                "last_name": last_name,
                "organization": organization,
                "email": email,
            },
        }))
    _emit(cfg, [("user_id", data["user_id"]), ("role", data["role"])],
          f"registered user {data['user_id']} ({data['role']})")


@main.command()
@click.option("--username", required=True)
@click.option("--password", required=True)
@click.pass_obj
def login(cfg: CliConfig, username, password):
    """Log in to the authority; prints a session token."""
    with _client(cfg.ca_url) as client:
        data = _check_http(client.post("/login", json={
            "username": username, "password": password,
        }))
    _emit(cfg, [("token", data["token"]), ("user_id", data["user_id"]),
                ("role", data["role"])],
          f"token {data['token']}")


@main.group()
def role():
    """Role management (authority administrator)."""


@role.command("set")
@click.argument("user_id", type=int)
@click.argument("new_role")
@click.option("--token", required=True, help="CA admin session token.")
@click.option("--save-identity", "save_path", type=click.Path(path_type=Path),
              default=None, help="Write the issued credentials to this file.")
@click.pass_obj
def role_set(cfg: CliConfig, user_id, new_role, token, save_path):
    """Assign a role; non-unconfirmed roles auto-issue a certificate."""
    with _client(cfg.ca_url) as client:
        data = _check_http(client.post(
            f"/users/{user_id}/role", json={"role": new_role},
            headers={"Authorization": f"Bearer {token}"},
        ))
    pairs: list[tuple[str, object]] = [
        ("user_id", user_id), ("role", data["account"]["role"])]
    text = f"user {user_id} is now {data['account']['role']}"
    credentials = data.get("credentials")
    if credentials:
        pairs.append(("cert_id", credentials["cert_id"]))
        text += f", certificate {credentials['cert_id']} issued"
        if save_path:
            save_identity(save_path, credentials)
            pairs.append(("identity", save_path))
            text += f", identity saved to {save_path}"
        else:
            click.echo("private key (shown once): "
                       + credentials["private_key"], err=True)
    _emit(cfg, pairs, text)


# ---------------------------------------------------------------------------
# document commands


@main.group()
def doc():
    """Document lifecycle operations."""


@doc.command()
@click.argument("file", type=click.Path(exists=True, path_type=Path))
@click.option("--title", required=True)
@click.option("--author", required=True)
@click.option("--organization", required=True)
@click.option("--meta", "extra", multiple=True, metavar="KEY=VALUE")
@click.pass_obj
def submit(cfg: CliConfig, file: Path, title, author, organization, extra):
    """Upload a document; it enters the workflow as Created."""
    identity = _require_identity(cfg)
    content = file.read_bytes()
    metadata = {"title": title, "author": author, "organization": organization}
    for item in extra:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.UsageError(f"--meta needs KEY=VALUE, got {item!r}")
        metadata[key] = value
    doc_id = uuid.uuid4().hex
    body = {
        "doc_id": doc_id,
        "metadata": metadata,
        "content_b64": base64.b64encode(content).decode(),
        "transition": _transition_block(
            identity, doc_id, workflow.DocumentStatus.CREATED,
            crypto.digest(content)),
    }
    view = _post_envelope(cfg, identity, "/documents", "submit_document", body)
    _emit(cfg, [("doc_id", view["doc_id"]), ("status", view["status"])],
          f"submitted {view['doc_id']} ({view['status']})")


@doc.command("list")
@click.option("--status", default=None)
@click.pass_obj
def doc_list(cfg: CliConfig, status):
    """List documents known to the node."""
    params = {"status": status} if status else {}
    with _client(cfg.node_url) as client:
        data = _check_http(client.get("/documents", params=params))
    docs = data["documents"]
    if cfg.output_format == "structured":
        for view in docs:
            click.echo(f"doc={view['doc_id']}\tstatus={view['status']}"
                       f"\ttitle={view['metadata'].get('title', '')}")
    else:
        if not docs:
            click.echo("no documents")
        for view in docs:
            click.echo(f"{view['doc_id']}  {view['status']:>14}  "
                       f"{view['metadata'].get('title', '')}")


@doc.command()
@click.argument("doc_id")
@click.argument("expert_cert_id", type=int)
@click.option("--window-hours", type=float, default=None,
              help="Examination window; default is the node's setting.")
@click.pass_obj
def assign(cfg: CliConfig, doc_id, expert_cert_id, window_hours):
    """Assign an expert to a created document (administrator)."""
    identity = _require_identity(cfg)
    view = _fetch_document(cfg, doc_id)
    digest = bytes.fromhex(view["content_digest"])
    body = {
        "doc_id": doc_id,
        "expert_cert_id": expert_cert_id,
        "transition": _transition_block(
            identity, doc_id, workflow.DocumentStatus.ON_EXAMINATION, digest),
    }
    if window_hours is not None:
        body["window_ms"] = int(window_hours * 3600 * 1000)
    result = _post_envelope(
        cfg, identity, f"/documents/{doc_id}/assign", "assign", body)
    _emit(cfg, [("doc_id", doc_id), ("status", result["status"]),
                ("deadline", result["deadline"])],
          f"{doc_id} -> {result['status']} (deadline {result['deadline']})")


def _decide(cfg: CliConfig, doc_id: str, verdict: workflow.DocumentStatus):
    identity = _require_identity(cfg)
    view = _fetch_document(cfg, doc_id)
    digest = bytes.fromhex(view["content_digest"])
    body = {
        "doc_id": doc_id,
        "verdict": verdict.value,
        "transition": _transition_block(identity, doc_id, verdict, digest),
    }
    if verdict is workflow.DocumentStatus.APPROVED:
        if identity.append_keypair is None:
            raise click.ClickException(
                "identity has no append-authorization key; approvals need one")
        body["append_authorization"] = workflow.sign_append_authorization(
            identity.append_keypair, doc_id, digest).to_bytes().hex()
    result = _post_envelope(
        cfg, identity, f"/documents/{doc_id}/decision", "decide", body)
    _emit(cfg, [("doc_id", doc_id), ("status", result["status"])],
          f"{doc_id} -> {result['status']}")


@doc.command()
@click.argument("doc_id")
@click.pass_obj
def approve(cfg: CliConfig, doc_id):
    """Approve a document under examination (assigned expert)."""
    _decide(cfg, doc_id, workflow.DocumentStatus.APPROVED)


@doc.command()
@click.argument("doc_id")
@click.pass_obj
def reject(cfg: CliConfig, doc_id):
    """Reject a document under examination (assigned expert)."""
    _decide(cfg, doc_id, workflow.DocumentStatus.REJECTED)


@doc.command()
@click.argument("doc_id")
@click.pass_obj
def archive(cfg: CliConfig, doc_id):
    """Commit an approved document to the chain (administrator)."""
    identity = _require_identity(cfg)
    view = _fetch_document(cfg, doc_id)
    digest = bytes.fromhex(view["content_digest"])
    body = {
        "doc_id": doc_id,
        "transition": _transition_block(
            identity, doc_id, workflow.DocumentStatus.ADDED, digest),
    }
    result = _post_envelope(
        cfg, identity, f"/documents/{doc_id}/archive", "archive", body)
    _emit(cfg, [("doc_id", doc_id), ("status", result["status"]),
                ("ledger_index", result["ledger_index"])],
          f"{doc_id} archived as row {result['ledger_index']}")


# ---------------------------------------------------------------------------
# chain commands


def _resolver_from_certs(certs: Path | None):
    if certs is None:
        return None
    directory = Path(certs)
    keys: dict[int, bytes] = {}
    paths = (
        sorted(directory.glob("*.crt")) if directory.is_dir() else [directory]
    )
    for path in paths:
        try:
            cert = Certificate.from_text(path.read_text())
        except ValueError:
            continue
        keys[cert.cert_id] = cert.public_key
    return keys.get


@main.group()
def chain():
    """Ledger file inspection and verification."""


@chain.command("verify")
@click.argument("ledger_file", type=click.Path(exists=True, path_type=Path))
@click.option("--certs", type=click.Path(exists=True, path_type=Path), default=None,
              help="Certificate file or directory for signature verification.")
@click.pass_obj
def chain_verify(cfg: CliConfig, ledger_file: Path, certs):
    """Re-verify a ledger file offline; exit 3 on any corruption."""
    rows = ledger.Chain.load(ledger_file).rows
    resolver = _resolver_from_certs(certs)
    report = ledger.verify_chain(rows, key_resolver=resolver)
    if report.valid:
        _emit(cfg, [("valid", "true"), ("rows", len(rows)),
                    ("signatures_checked", str(report.signatures_checked).lower())],
              f"valid, {len(rows)} rows"
              + ("" if report.signatures_checked else " (structure only)"))
    else:
        _emit(cfg, [("valid", "false"), ("first_bad_index", report.first_bad_index),
                    ("reason", report.reason)],
              f"INVALID at row {report.first_bad_index}: {report.reason}")
        raise IntegrityAlarm(
            f"ledger corrupt at row {report.first_bad_index}: {report.reason}")


@chain.command("show")
@click.argument("ledger_file", type=click.Path(exists=True, path_type=Path))
@click.pass_obj
def chain_show(cfg: CliConfig, ledger_file: Path):
    """Print a row-per-line summary of a ledger file."""
    for row in ledger.Chain.load(ledger_file).rows:
        try:
            payload = ledger.decode_payload(row.payload)
        except ValueError:
            kind, detail = "unreadable", ""
        else:
            if isinstance(payload, ledger.GenesisPayload):
                kind, detail = "genesis", payload.chain_title
            elif isinstance(payload, ledger.CertHashPayload):
                kind, detail = "certificate", payload.cert_hash.hex()[:16]
            else:
                kind = "transaction"
                detail = payload.metadata.get("title", "")
        click.echo(f"{row.index}\t{row.timestamp}\t{kind}\t{detail}")


@chain.command("export")
@click.option("-o", "--output", type=click.Path(path_type=Path), required=True)
@click.pass_obj
def chain_export(cfg: CliConfig, output: Path):
    """Download the node's ledger file."""
    with _client(cfg.node_url) as client:
        response = client.get("/chain", params={"from": 0})
        _check_http(response)
        output.write_text(response.text)
    rows = sum(1 for line in output.read_text().splitlines() if line.strip())
    _emit(cfg, [("rows", rows), ("output", output)],
          f"exported {rows} rows to {output}")


# ---------------------------------------------------------------------------
# guard commands


@main.group("guard")
def guard_group():
    """Secret-file integrity operations."""


@guard_group.command("check")
@click.argument("ledger_file", type=click.Path(exists=True, path_type=Path))
@click.option("--guard-dir", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--sign-len", type=int, default=guard.DEFAULT_SIGN_LEN)
@click.option("--name-len", type=int, default=guard.DEFAULT_NAME_LEN)
@click.pass_obj
def guard_check(cfg: CliConfig, ledger_file: Path, guard_dir: Path,
                sign_len: int, name_len: int):
    """Compare the stored rolling signature against the ledger file."""
    try:
        ok, stored_hex, computed_hex = guard.integrity_check(
            ledger_file, Path(guard_dir), sign_len, name_len)
    except guard.MissingSecretFile as exc:
        raise click.ClickException(str(exc)) from None
    if ok:
        _emit(cfg, [("match", "true")], "signature matches ledger file")
    else:
        _emit(cfg, [("match", "false"), ("stored", stored_hex[:32]),
                    ("computed", computed_hex[:32])],
              "SIGNATURE MISMATCH: ledger file changed since last append")
        raise IntegrityAlarm("guard signature mismatch")


@guard_group.command("export")
@click.option("--guard-dir", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("-o", "--output", type=click.Path(path_type=Path), required=True)
@click.option("--remove", is_flag=True,
              help="Delete the secret file after export (custody handoff).")
@click.pass_obj
def guard_export(cfg: CliConfig, guard_dir: Path, output: Path, remove: bool):
    """Export the secret signature bytes as hex for administrator custody."""
    secrets = guard._secret_files(Path(guard_dir))
    if len(secrets) != 1:
        raise click.ClickException(
            f"expected exactly one secret file, found {len(secrets)}")
    output.write_text(secrets[0].read_bytes().hex() + "\n")
    if remove:
        secrets[0].unlink()
    _emit(cfg, [("output", output), ("removed", str(remove).lower())],
          f"signature exported to {output}")


@guard_group.command("import")
@click.argument("signature_file", type=click.Path(exists=True, path_type=Path))
@click.option("--guard-dir", type=click.Path(path_type=Path), required=True)
@click.option("--name-len", type=int, default=guard.DEFAULT_NAME_LEN)
@click.pass_obj
def guard_import(cfg: CliConfig, signature_file: Path, guard_dir: Path,
                 name_len: int):
    """Restore a previously exported signature into the guard directory."""
    data = bytes.fromhex(signature_file.read_text().strip())
    guard_dir = Path(guard_dir)
    guard_dir.mkdir(parents=True, exist_ok=True)
    for stale in guard._secret_files(guard_dir):
        stale.unlink()
    name = guard.derive_filename(data, name_len)
    (guard_dir / name).write_bytes(data)
    _emit(cfg, [("secret_file", guard_dir / name)],
          f"signature imported as {guard_dir / name}")


# ---------------------------------------------------------------------------
# certificate commands


@main.group()
def cert():
    """Certificate inspection and validation."""


def _load_cert_text(cfg: CliConfig, cert_file: Path | None) -> str:
    if cert_file is not None:
        return Path(cert_file).read_text()
    identity = _require_identity(cfg)
    return identity.certificate_text


@cert.command("show")
@click.argument("cert_file", type=click.Path(exists=True, path_type=Path),
                required=False)
@click.pass_obj
def cert_show(cfg: CliConfig, cert_file):
    """Print a certificate (from a file or the configured identity)."""
    click.echo(_load_cert_text(cfg, cert_file), nl=False)


@cert.command("validate")
@click.argument("cert_file", type=click.Path(exists=True, path_type=Path),
                required=False)
@click.pass_obj
def cert_validate(cfg: CliConfig, cert_file):
    """Ask the authority whether a certificate is currently valid."""
    text = _load_cert_text(cfg, cert_file)
    certificate = Certificate.from_text(text)
    digest = certificate.cert_hash().hex()
    with _client(cfg.ca_url) as client:
        data = _check_http(client.get(f"/certificates/{digest}/validity"))
    verdict = data["validity"]
    _emit(cfg, [("cert_id", certificate.cert_id), ("validity", verdict)],
          f"certificate {certificate.cert_id}: {verdict}")
    if verdict != "Valid":
        raise click.exceptions.Exit(1)


# ---------------------------------------------------------------------------
# services


@main.group()
def ca():
    """Certification authority service."""


@ca.command("serve")
@click.option("--data-dir", type=click.Path(path_type=Path), required=True)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8600)
@click.option("--node-token", required=True,
              help="Shared token for the node channel.")
@click.option("--admin-username", default="ca-admin")
@click.option("--admin-password", required=True)
@click.option("--password-iterations", type=int, default=None)
def ca_serve(data_dir, host, port, node_token, admin_username, admin_password,
             password_iterations):
    """Run the authority (bootstraps on first start)."""
    from .ca import service

    service.run(data_dir, host, port, node_token, admin_username,
                admin_password, password_iterations)


@main.group()
def node():
    """Administrative node service."""


@node.command("serve")
@click.option("--data-dir", type=click.Path(path_type=Path), required=True)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8601)
@click.option("--ca-token", required=True)
@click.option("--chain-title", default="archive ledger")
@click.option("--poll-interval", type=float, default=30.0)
@click.option("--sweep-interval", type=float, default=5.0)
@click.option("--guard-dir", type=click.Path(path_type=Path), default=None,
              help="Secret-file directory (default: <data-dir>/guard).")
@click.option("--static-dir", type=click.Path(path_type=Path), default=None)
@click.option("--public-url", default=None,
              help="This node's URL, registered with the CA for push updates.")
@click.pass_obj
def node_serve(cfg: CliConfig, data_dir, host, port, ca_token, chain_title,
               poll_interval, sweep_interval, guard_dir, static_dir,
               public_url):
    """Run the node (needs an administrator identity)."""
    from .node import service

    if cfg.identity_path is None:
        raise click.UsageError("node serve needs --identity")
    identity_data = json.loads(Path(cfg.identity_path).read_text())
    service.run(
        data_dir=data_dir,
        host=host,
        port=port,
        identity=identity_data,
        ca_url=cfg.ca_url,
        ca_token=ca_token,
        chain_title=chain_title,
        poll_interval_s=poll_interval,
        sweep_interval_s=sweep_interval,
        static_dir=static_dir,
        public_url=public_url,
        guard_dir=guard_dir,
    )


if __name__ == "__main__":
    main()
