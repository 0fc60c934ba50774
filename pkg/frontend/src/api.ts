/**
 * Node and authority clients: signed envelopes over fetch, plus the
 * persistent channel with its nonce-challenge handshake.
 */

import {
  appendAuthBytes,
  bytesToHex,
  envelopeBytes,
  hexToBytes,
  tagSignature,
  transitionBytes,
} from "./canonical.js";
import { SCHEME_ID, sign } from "./gost_ec.js";
import { streebog512 } from "./streebog.js";
import { ServerMessage } from "./state.js";

export interface Identity {
  cert_id: number;
  scheme: string;
  private_key: string;
  public_key: string;
  certificate: string;
  append_private_key?: string;
  append_public_key?: string;
}

export function parseIdentity(text: string): Identity {
  const data = JSON.parse(text);
  for (const key of ["cert_id", "private_key", "certificate"]) {
    if (!(key in data)) throw new Error(`identity file lacks ${key}`);
  }
  return data as Identity;
}

export function certificateRole(certificateText: string): string {
  for (const line of certificateText.split("\n")) {
    if (line.startsWith("holder_category: ")) {
      return line.slice("holder_category: ".length);
    }
  }
  throw new Error("certificate has no holder_category line");
}

type Body = Record<string, unknown>;

export function makeEnvelope(
  identity: Identity,
  msgType: string,
  body: Body,
): Body {
  const withCert = { ...body, certificate: identity.certificate };
  const timestamp = Date.now();
  const message = envelopeBytes(msgType, timestamp, withCert as never);
  const raw = sign(hexToBytes(identity.private_key), message);
  return {
    msg_type: msgType,
    sender_cert_id: identity.cert_id,
    body: withCert,
    timestamp,
    signature: bytesToHex(tagSignature(raw, identity.scheme ?? SCHEME_ID)),
  };
}

export function transitionBlock(
  identity: Identity,
  docId: string,
  status: string,
  contentDigest: Uint8Array,
): { timestamp: number; signature: string } {
  const timestamp = Date.now();
  const message = transitionBytes(docId, status, timestamp, contentDigest);
  const raw = sign(hexToBytes(identity.private_key), message);
  return {
    timestamp,
    signature: bytesToHex(tagSignature(raw, identity.scheme ?? SCHEME_ID)),
  };
}

export function appendAuthorization(
  identity: Identity,
  docId: string,
  contentDigest: Uint8Array,
): string {
  if (!identity.append_private_key) {
    throw new Error("identity has no append-authorization key");
  }
  const raw = sign(
    hexToBytes(identity.append_private_key),
    appendAuthBytes(docId, contentDigest),
  );
  return bytesToHex(tagSignature(raw, identity.scheme ?? SCHEME_ID));
}

async function jsonOrThrow(response: Response): Promise<Body> {
  const data = (await response.json().catch(() => ({}))) as Body;
  if (!response.ok) {
    throw new Error(String(data.detail ?? response.statusText));
  }
  return data;
}

export class NodeApi {
  constructor(public baseUrl: string) {}

  async health(): Promise<Body> {
    return jsonOrThrow(await fetch(`${this.baseUrl}/health`));
  }

  async documents(status?: string): Promise<Body[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    const data = await jsonOrThrow(
      await fetch(`${this.baseUrl}/documents${query}`),
    );
    return data.documents as Body[];
  }

  async chainLines(from = 0): Promise<string[]> {
    const response = await fetch(`${this.baseUrl}/chain?from=${from}`);
    if (!response.ok) throw new Error(response.statusText);
    const text = await response.text();
    return text.split("\n").filter((line) => line.trim().length > 0);
  }

  private async post(path: string, envelope: Body): Promise<ServerMessage> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(envelope),
    });
    return (await jsonOrThrow(response)) as unknown as ServerMessage;
  }

  async submitDocument(
    identity: Identity,
    content: Uint8Array,
    metadata: Record<string, string>,
  ): Promise<ServerMessage> {
    const docId = crypto.randomUUID().replace(/-/g, "");
    const digest = streebog512(content);
    const body = {
      doc_id: docId,
      metadata,
      content_b64: btoa(String.fromCharCode(...content)),
      transition: transitionBlock(identity, docId, "Created", digest),
    };
    return this.post("/documents", makeEnvelope(identity, "submit_document", body));
  }

  async assignExpert(
    identity: Identity,
    docId: string,
    expertCertId: number,
    contentDigest: Uint8Array,
  ): Promise<ServerMessage> {
    const body = {
      doc_id: docId,
      expert_cert_id: expertCertId,
      transition: transitionBlock(identity, docId, "OnExamination", contentDigest),
    };
    return this.post(
      `/documents/${docId}/assign`,
      makeEnvelope(identity, "assign", body),
    );
  }

  async decide(
    identity: Identity,
    docId: string,
    verdict: "Approved" | "Rejected",
    contentDigest: Uint8Array,
  ): Promise<ServerMessage> {
    const body: Body = {
      doc_id: docId,
      verdict,
      transition: transitionBlock(identity, docId, verdict, contentDigest),
    };
    if (verdict === "Approved") {
      body.append_authorization = appendAuthorization(
        identity, docId, contentDigest,
      );
    }
    return this.post(
      `/documents/${docId}/decision`,
      makeEnvelope(identity, "decide", body),
    );
  }

  async archive(
    identity: Identity,
    docId: string,
    contentDigest: Uint8Array,
  ): Promise<ServerMessage> {
    const body = {
      doc_id: docId,
      transition: transitionBlock(identity, docId, "Added", contentDigest),
    };
    return this.post(
      `/documents/${docId}/archive`,
      makeEnvelope(identity, "archive", body),
    );
  }
}

export class CaApi {
  constructor(public baseUrl: string) {}

  async login(username: string, password: string): Promise<Body> {
    const response = await fetch(`${this.baseUrl}/login`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ username, password }),
    });
    return jsonOrThrow(response);
  }

  async register(
    username: string,
    password: string,
    profile: Record<string, string>,
  ): Promise<Body> {
    const response = await fetch(`${this.baseUrl}/register`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ username, password, profile }),
    });
    return jsonOrThrow(response);
  }

  async users(token: string): Promise<Body[]> {
    const response = await fetch(`${this.baseUrl}/users`, {
      headers: { authorization: `Bearer ${token}` },
    });
    return (await jsonOrThrow(response)).users as Body[];
  }

  async setRole(token: string, userId: number, role: string): Promise<Body> {
    const response = await fetch(`${this.baseUrl}/users/${userId}/role`, {
      method: "POST",
      headers: {
        "content-type": "application/json",
        authorization: `Bearer ${token}`,
      },
      body: JSON.stringify({ role }),
    });
    return jsonOrThrow(response);
  }
}

export interface ChannelCallbacks {
  onMessage: (message: ServerMessage) => void;
  onOpen?: () => void;
  onClose?: () => void;
}

/** Open the persistent channel, answer the nonce challenge, stream events. */
export function openChannel(
  nodeUrl: string,
  identity: Identity,
  haveRows: number,
  callbacks: ChannelCallbacks,
): WebSocket {
  const wsUrl = nodeUrl.replace(/^http/, "ws") + "/ws";
  const socket = new WebSocket(wsUrl);
  socket.onmessage = (event) => {
    const message = JSON.parse(event.data) as ServerMessage & {
      nonce?: string;
    };
    if (message.msg_type === "challenge" && message.nonce) {
      socket.send(
        JSON.stringify(
          makeEnvelope(identity, "hello", {
            nonce: message.nonce,
            have_rows: haveRows,
          }),
        ),
      );
      return;
    }
    if (message.msg_type === "session") {
      callbacks.onOpen?.();
      return;
    }
    callbacks.onMessage(message);
  };
  socket.onclose = () => callbacks.onClose?.();
  return socket;
}
