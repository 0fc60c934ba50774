"""HTTP and message-channel face of the administrative node.

Mutations arrive as signed envelopes, over plain POSTs or over the
persistent channel at /ws. The channel handshake is a nonce challenge: the
server sends a nonce, the client answers with a hello envelope carrying its
certificate and the nonce, signed with its certificate key. Authenticated
channel peers receive status updates, fresh chain rows, and alarms as they
happen; the hello may name the rows it already has and missing ones are
replayed in order.
"""

from __future__ import annotations

import secrets
import threading
import uuid
from pathlib import Path

import anyio
from fastapi import FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles

from .. import crypto
from ..ca import Certificate
from ..workflow import DocumentStatus
from . import (
    BlobCorrupt,
    BlobMissing,
    Envelope,
    NodeCore,
    NodeError,
    PeerSession,
    RevokedCertificate,
)


def create_app(core: NodeCore, static_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="archivechain administrative node")

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "chain_rows": len(core.engine.chain.rows),
            "ca_replica_rows": len(core.replica.all_chain.rows),
        }

    @app.get("/chain", response_class=PlainTextResponse)
    def chain(from_: int = Query(default=0, alias="from")) -> str:
        lines = core.chain_rows_from(max(from_, 0))
        return "".join(line + "\n" for line in lines)

    @app.get("/documents")
    def documents(status: str | None = None) -> dict:
        wanted = None
        if status is not None:
            try:
                wanted = DocumentStatus(status)
            except ValueError:
                raise HTTPException(400, f"unknown status {status!r}") from None
        views = [
            core.document_view(d) for d in core.engine.list_documents(wanted)
        ]
        return {"documents": views}

    @app.get("/documents/{doc_id}")
    def document(doc_id: str) -> dict:
        doc = core.engine.get_document(doc_id)
        if doc is None:
            raise HTTPException(404, f"unknown document {doc_id}")
        return core.document_view(doc)

    def _routed(envelope_data: dict, expect: str, doc_id: str | None = None) -> dict:
        try:
            envelope = Envelope.from_dict(envelope_data)
        except NodeError as exc:
            raise HTTPException(400, str(exc)) from None
        if envelope.msg_type != expect:
            raise HTTPException(
                400, f"expected a {expect} envelope, got {envelope.msg_type}"
            )
        if doc_id is not None and envelope.body.get("doc_id") != doc_id:
            raise HTTPException(400, "envelope doc_id does not match the URL")
        return core.route(envelope).to_dict()

    @app.post("/documents")
    def submit(envelope: dict) -> dict:
        return _routed(envelope, "submit_document")

    @app.post("/documents/{doc_id}/assign")
    def assign(doc_id: str, envelope: dict) -> dict:
        return _routed(envelope, "assign", doc_id)

    @app.post("/documents/{doc_id}/decision")
    def decision(doc_id: str, envelope: dict) -> dict:
        return _routed(envelope, "decide", doc_id)

    @app.post("/documents/{doc_id}/archive")
    def archive(doc_id: str, envelope: dict) -> dict:
        return _routed(envelope, "archive", doc_id)

    @app.get("/blobs/{digest}")
    def blob(digest: str) -> Response:
        try:
            raw = bytes.fromhex(digest)
        except ValueError:
            raise HTTPException(400, "digest must be hex") from None
        try:
            content = core.blob_store.get(raw)
        except BlobMissing:
            raise HTTPException(404, "no such blob") from None
        except BlobCorrupt:
            raise HTTPException(500, "stored blob failed its digest check") from None
        return Response(content, media_type="application/octet-stream")

    @app.get("/alarms", response_class=PlainTextResponse)
    def alarms() -> str:
        return "".join(line + "\n" for line in core.alarms)

    @app.get("/certificates")
    def certificates() -> dict:
        return {
            "certificates": [c.canonical_text() for c in core.registry.all()]
        }

    @app.post("/ca-updates", status_code=202)
    def ca_updates(_payload: dict) -> dict:
        # push notification: re-pull through the verified sync path
        threading.Thread(target=lambda: _quiet_sync(core), daemon=True).start()
        return {"scheduled": True}

    @app.websocket("/ws")
    async def channel(websocket: WebSocket) -> None:
        await websocket.accept()
        nonce = secrets.token_hex(16)
        await websocket.send_json({"msg_type": "challenge", "nonce": nonce})
        try:
            hello_data = await websocket.receive_json()
            try:
                hello = Envelope.from_dict(hello_data)
                cert: Certificate = core.authenticate_hello(hello, nonce)
            except RevokedCertificate as exc:
                await websocket.send_json(
                    {"msg_type": "error", "body": {
                        "error": "RevokedCertificate", "message": str(exc)}}
                )
                await websocket.close()
                return
            except (NodeError, crypto.CryptoError) as exc:
                await websocket.send_json(
                    {"msg_type": "error", "body": {
                        "error": type(exc).__name__, "message": str(exc)}}
                )
                await websocket.close()
                return

            send_stream, receive_stream = anyio.create_memory_object_stream(256)
            session = PeerSession(
                session_id=uuid.uuid4().hex,
                cert_id=cert.cert_id,
                role=cert.holder_category,
                send=lambda message: send_stream.send_nowait(message),
            )
            core.register_peer(session)
            await websocket.send_json(
                {
                    "msg_type": "session",
                    "body": {
                        "session_id": session.session_id,
                        "cert_id": cert.cert_id,
                        "role": cert.holder_category.value,
                    },
                }
            )
            have = int(hello.body.get("have_rows", 0) or 0)
            missing = core.chain_rows_from(have)
            if missing:
                await websocket.send_json(
                    {
                        "msg_type": "chain_rows",
                        "body": {"rows": missing, "from": have},
                    }
                )

            async def pump_outgoing() -> None:
                async for message in receive_stream:
                    try:
                        await websocket.send_json(message)
                    except (WebSocketDisconnect, RuntimeError):
                        return

            try:
                async with anyio.create_task_group() as group:
                    group.start_soon(pump_outgoing)
                    try:
                        while True:
                            data = await websocket.receive_json()
                            try:
                                envelope = Envelope.from_dict(data)
                                response = await anyio.to_thread.run_sync(
                                    core.route, envelope
                                )
                                await websocket.send_json(response.to_dict())
                            except (NodeError, ValueError) as exc:
                                await websocket.send_json(
                                    {"msg_type": "error", "body": {
                                        "error": type(exc).__name__,
                                        "message": str(exc)}}
                                )
                    except WebSocketDisconnect:
                        pass
                    finally:
                        group.cancel_scope.cancel()
            finally:
                core.drop_peer(session.session_id)
        except WebSocketDisconnect:
            pass

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def _quiet_sync(core: NodeCore) -> None:
    try:
        core.resync()
    except Exception as exc:
        core.record_alarm(f"CA sync failed: {exc}")


def run(
    data_dir: Path,
    host: str,
    port: int,
    identity: dict,
    ca_url: str,
    ca_token: str,
    chain_title: str = "archive ledger",
    poll_interval_s: float = 30.0,
    sweep_interval_s: float = 5.0,
    static_dir: Path | None = None,
    public_url: str | None = None,
    guard_dir: Path | None = None,
) -> None:
    """Wire a node core to uvicorn plus the sync and expiry loops."""
    import httpx
    import uvicorn

    keypair = crypto.KeyPair.from_private_bytes(
        bytes.fromhex(identity["private_key"]), identity.get("scheme", crypto.DEFAULT_SCHEME)
    )
    certificate = Certificate.from_text(identity["certificate"])
    core = NodeCore(
        data_dir=Path(data_dir),
        admin_keypair=keypair,
        admin_certificate=certificate,
        ca_client=httpx.Client(base_url=ca_url, timeout=10),
        ca_token=ca_token,
        guard_dir=guard_dir,
    )
    _quiet_sync(core)
    core.engine.ensure_genesis(chain_title)
    if public_url:
        try:
            httpx.post(
                f"{ca_url}/subscribe",
                json={"callback_url": f"{public_url}/ca-updates"},
                headers={"X-CA-Token": ca_token},
                timeout=5,
            )
        except httpx.HTTPError:
            pass  # polling still covers updates

    stop = threading.Event()

    def poll_loop() -> None:
        while not stop.wait(poll_interval_s):
            _quiet_sync(core)

    def sweep_loop() -> None:
        while not stop.wait(sweep_interval_s):
            try:
                core.engine.expire_documents()
            except Exception:
                continue

    threading.Thread(target=poll_loop, daemon=True).start()
    threading.Thread(target=sweep_loop, daemon=True).start()

    app = create_app(core, static_dir=static_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        stop.set()
