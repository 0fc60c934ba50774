"""HTTP face of the certification authority.

Session tokens guard the account-management endpoints; the node channel is
authorized by a shared token carried in the X-CA-Token header. Chain reads
are public: anyone may re-verify the certificate chains.
"""

from __future__ import annotations

import secrets
import threading
import time
from pathlib import Path

import httpx
from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from . import (
    CaError,
    CertificationAuthority,
    DuplicateUsername,
    Profile,
    Role,
    Unauthorized,
    UnknownUser,
    UserAccount,
    Validity,
    WeakPassword,
)

SESSION_TTL_S = 3600


class ProfileModel(BaseModel):
    first_name: str
    last_name: str
    organization: str
    email: str


class RegisterRequest(BaseModel):
    username: str
    password: str
    profile: ProfileModel


class LoginRequest(BaseModel):
    username: str
    password: str


class RoleRequest(BaseModel):
    role: str


class SubscribeRequest(BaseModel):
    callback_url: str


class SessionStore:
    def __init__(self) -> None:
        self._sessions: dict[str, tuple[int, float]] = {}
        self._lock = threading.Lock()

    def create(self, user_id: int) -> str:
        token = secrets.token_hex(24)
        with self._lock:
            self._sessions[token] = (user_id, time.time() + SESSION_TTL_S)
        return token

    def resolve(self, token: str) -> int | None:
        with self._lock:
            entry = self._sessions.get(token)
            if entry is None:
                return None
            user_id, expires = entry
            if time.time() > expires:
                del self._sessions[token]
                return None
            return user_id


def account_view(account: UserAccount) -> dict:
    return {
        "user_id": account.user_id,
        "username": account.username,
        "role": account.role.value,
        "active_cert_id": account.active_cert_id,
        "prompted_for_renewal": account.prompted_for_renewal,
        "profile": {
            "first_name": account.profile.first_name,
            "last_name": account.profile.last_name,
            "organization": account.profile.organization,
            "email": account.profile.email,
        },
    }


def create_app(authority: CertificationAuthority, node_token: str) -> FastAPI:
    app = FastAPI(title="archivechain certification authority")
    sessions = SessionStore()

    def current_account(
        authorization: str | None = Header(default=None),
    ) -> UserAccount:
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(401, "missing bearer token")
        user_id = sessions.resolve(authorization.removeprefix("Bearer "))
        if user_id is None:
            raise HTTPException(401, "invalid or expired session")
        account = authority.get_account(user_id)
        if account is None:
            raise HTTPException(401, "account no longer exists")
        return account

    def require_channel_token(
        x_ca_token: str | None = Header(default=None),
    ) -> None:
        if x_ca_token != node_token:
            raise HTTPException(401, "bad channel token")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "bootstrapped": authority.is_bootstrapped}

    @app.post("/register")
    def register(request: RegisterRequest) -> dict:
        profile = Profile(
            first_name=request.profile.first_name,
            last_name=request.profile.last_name,
            organization=request.profile.organization,
            email=request.profile.email,
        )
        try:
            account = authority.register_user(
                request.username, request.password, profile
            )
        except DuplicateUsername as exc:
            raise HTTPException(409, f"username already taken: {exc}") from None
        except WeakPassword as exc:
            raise HTTPException(400, str(exc)) from None
        return account_view(account)

    @app.post("/login")
    def login(request: LoginRequest) -> dict:
        account = authority.authenticate(request.username, request.password)
        if account is None:
            raise HTTPException(401, "bad credentials")
        token = sessions.create(account.user_id)
        return {"token": token, **account_view(account)}

    @app.get("/users")
    def list_users(account: UserAccount = Depends(current_account)) -> dict:
        if account.role is not Role.CA_ADMINISTRATOR:
            raise HTTPException(403, "CA administrator only")
        return {"users": [account_view(a) for a in authority.list_accounts()]}

    @app.post("/users/{user_id}/role")
    def set_role(
        user_id: int,
        request: RoleRequest,
        account: UserAccount = Depends(current_account),
    ) -> dict:
        try:
            role = Role(request.role)
        except ValueError:
            raise HTTPException(400, f"unknown role {request.role!r}") from None
        try:
            credentials = authority.assign_role(account, user_id, role)
        except Unauthorized as exc:
            raise HTTPException(403, str(exc)) from None
        except UnknownUser as exc:
            raise HTTPException(404, f"unknown user {exc}") from None
        except CaError as exc:
            raise HTTPException(400, str(exc)) from None
        updated = authority.get_account(user_id)
        assert updated is not None
        response = {"account": account_view(updated)}
        if credentials is not None:
            response["credentials"] = {
                "cert_id": credentials.certificate.cert_id,
                "certificate": credentials.certificate.canonical_text(),
                "scheme": credentials.certificate.keygen_algorithm,
                "public_key": credentials.certificate.public_key.hex(),
                "private_key": credentials.private_key.hex(),
            }
            if credentials.append_private_key is not None:
                response["credentials"]["append_private_key"] = (
                    credentials.append_private_key.hex()
                )
                response["credentials"]["append_public_key"] = (
                    credentials.append_public_key.hex()
                )
        return response

    @app.get("/certificates/{cert_hash}/validity")
    def certificate_validity(cert_hash: str) -> dict:
        try:
            digest = bytes.fromhex(cert_hash)
        except ValueError:
            raise HTTPException(400, "certificate hash must be hex") from None
        if len(digest) != 64:
            raise HTTPException(400, "certificate hash must be 64 bytes")
        verdict: Validity = authority.check_validity(digest)
        return {"validity": verdict.value}

    @app.get("/certificates/{cert_id}/download", response_class=PlainTextResponse)
    def download_certificate(cert_id: int) -> str:
        text = authority.certificate_text(cert_id)
        if text is None:
            raise HTTPException(404, f"no certificate {cert_id}")
        return text

    @app.get("/chains/{chain_name}", response_class=PlainTextResponse)
    def chain_rows(
        chain_name: str, from_: int = Query(default=0, alias="from")
    ) -> str:
        if chain_name == "all":
            chain = authority.all_chain
        elif chain_name == "revoked":
            chain = authority.revoked_chain
        else:
            raise HTTPException(404, "chain must be 'all' or 'revoked'")
        rows = chain.rows[max(from_, 0) :]
        return "".join(row.to_line() + "\n" for row in rows)

    @app.get("/ca/public-key")
    def ca_public_key(_: None = Depends(require_channel_token)) -> dict:
        return {
            "public_key": authority.admin_keypair.public_bytes().hex(),
            "cert_id": authority.admin_cert_id,
        }

    @app.get("/append-keys")
    def append_keys(_: None = Depends(require_channel_token)) -> dict:
        keys = [
            {
                "cert_id": cert_id,
                "public_key": public.hex(),
                "signature": signature.to_bytes().hex(),
            }
            for cert_id, public, signature in authority.list_append_keys()
        ]
        return {"keys": keys}

    @app.post("/subscribe")
    def subscribe(
        request: SubscribeRequest, _: None = Depends(require_channel_token)
    ) -> dict:
        url = request.callback_url

        def deliver(chain_name: str, rows) -> None:
            payload = {
                "chain": chain_name,
                "rows": [row.to_line() for row in rows],
            }
            httpx.post(url, json=payload, timeout=5).raise_for_status()

        authority.subscribe(deliver)
        return {"subscribed": url}

    @app.get("/expiry/sweep")
    def expiry_sweep(_: None = Depends(require_channel_token)) -> dict:
        return {"revoked_cert_ids": authority.check_expiry()}

    return app


def run(
    data_dir: Path,
    host: str,
    port: int,
    node_token: str,
    admin_username: str,
    admin_password: str,
    password_iterations: int | None = None,
) -> None:
    """Boot (or re-open) an authority and serve it."""
    import uvicorn

    kwargs = {}
    if password_iterations is not None:
        kwargs["password_iterations"] = password_iterations
    authority = CertificationAuthority(data_dir, **kwargs)
    if not authority.is_bootstrapped:
        authority.bootstrap(
            admin_username,
            admin_password,
            Profile(
                first_name="Certification",
                last_name="Authority",
                organization="archive",
                email="ca@localhost",
            ),
        )
    app = create_app(authority, node_token)
    uvicorn.run(app, host=host, port=port, log_level="warning")
