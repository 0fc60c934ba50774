"""Client configuration and identity files.

Resolution order for every setting: explicit flag, then ARCHIVECHAIN_*
environment variable, then the JSON config file, then the default. Identity
files hold a participant's certificate and private key material and are kept
owner-readable only.
"""

from __future__ import annotations

import json
import os
import stat
import sys
from dataclasses import dataclass
from pathlib import Path

from . import crypto
from .ca import Certificate

ENV_PREFIX = "ARCHIVECHAIN"

DEFAULT_NODE_URL = "http://127.0.0.1:8601"
DEFAULT_CA_URL = "http://127.0.0.1:8600"


@dataclass
class CliConfig:
    node_url: str = DEFAULT_NODE_URL
    ca_url: str = DEFAULT_CA_URL
    identity_path: Path | None = None
    output_format: str = "text"


def _env(name: str) -> str | None:
    return os.environ.get(f"{ENV_PREFIX}_{name}")


def load_cli_config(
    config_path: Path | None,
    node_url: str | None,
    ca_url: str | None,
    identity: Path | None,
    output_format: str | None,
) -> CliConfig:
    file_values: dict = {}
    if config_path is not None:
        file_values = json.loads(Path(config_path).read_text())
    cfg = CliConfig()
    cfg.node_url = (
        node_url or _env("NODE") or file_values.get("node") or cfg.node_url
    )
    cfg.ca_url = ca_url or _env("CA") or file_values.get("ca") or cfg.ca_url
    identity_value = (
        identity or _env("IDENTITY") or file_values.get("identity") or None
    )
    cfg.identity_path = Path(identity_value) if identity_value else None
    cfg.output_format = (
        output_format
        or _env("FORMAT")
        or file_values.get("format")
        or cfg.output_format
    )
    return cfg


@dataclass
class Identity:
    cert_id: int
    keypair: crypto.KeyPair
    certificate: Certificate
    certificate_text: str
    append_keypair: crypto.KeyPair | None = None


def save_identity(path: Path, credentials: dict) -> None:
    """Write the one-time credentials blob from the authority to disk."""
    path = Path(path)
    payload = {
        "cert_id": credentials["cert_id"],
        "scheme": credentials.get("scheme", crypto.DEFAULT_SCHEME),
        "private_key": credentials["private_key"],
        "public_key": credentials["public_key"],
        "certificate": credentials["certificate"],
    }
    if credentials.get("append_private_key"):
        payload["append_private_key"] = credentials["append_private_key"]
        payload["append_public_key"] = credentials["append_public_key"]
    path.write_text(json.dumps(payload, indent=2) + "\n")
    path.chmod(0o600)


def load_identity(path: Path) -> Identity:
    path = Path(path)
    mode = stat.S_IMODE(path.stat().st_mode)
    if mode & 0o077:
        print(
            f"warning: identity file {path} is readable by others"
            f" (mode {oct(mode)})",
            file=sys.stderr,
        )
    data = json.loads(path.read_text())
    scheme = data.get("scheme", crypto.DEFAULT_SCHEME)
    keypair = crypto.KeyPair.from_private_bytes(
        bytes.fromhex(data["private_key"]), scheme
    )
    append_keypair = None
    if data.get("append_private_key"):
        append_keypair = crypto.KeyPair.from_private_bytes(
            bytes.fromhex(data["append_private_key"]), scheme
        )
    return Identity(
        cert_id=int(data["cert_id"]),
        keypair=keypair,
        certificate=Certificate.from_text(data["certificate"]),
        certificate_text=data["certificate"],
        append_keypair=append_keypair,
    )
