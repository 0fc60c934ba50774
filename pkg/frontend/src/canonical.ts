/**
 * Canonical binary encodings shared with the server: ledger rows, payloads,
 * workflow transitions, and message envelopes. Byte-compatible with the node
 * so the browser can both re-verify chain rows and produce signatures the
 * server accepts.
 */

export function hexToBytes(hex: string): Uint8Array {
  if (hex.length % 2 !== 0) throw new Error("odd-length hex string");
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    const byte = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
    if (Number.isNaN(byte)) throw new Error("invalid hex digits");
    out[i] = byte;
  }
  return out;
}

export function bytesToHex(bytes: Uint8Array): string {
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function utf8Encode(text: string): Uint8Array {
  return new TextEncoder().encode(text);
}

export function bytesEqual(a: Uint8Array, b: Uint8Array): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) if (a[i] !== b[i]) return false;
  return true;
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

function u32be(value: number): Uint8Array {
  const out = new Uint8Array(4);
  new DataView(out.buffer).setUint32(0, value);
  return out;
}

function u64be(value: number | bigint): Uint8Array {
  const out = new Uint8Array(8);
  new DataView(out.buffer).setBigUint64(0, BigInt(value));
  return out;
}

function chunk(data: Uint8Array): Uint8Array {
  return concat([u32be(data.length), data]);
}

// -- ledger rows -------------------------------------------------------------

export interface LedgerRowFields {
  index: number;
  timestamp: number;
  payloadHex: string;
  signatureHex: string; // scheme-tagged encoding, as persisted
  signerCertId: number;
  prevHashHex: string;
  rowHashHex: string;
}

/** Parse one tab-separated ledger file line. */
export function parseRowLine(line: string): LedgerRowFields {
  const fields = line.replace(/\n$/, "").split("\t");
  if (fields.length !== 7) {
    throw new Error(`expected 7 tab-separated fields, got ${fields.length}`);
  }
  return {
    index: Number(fields[0]),
    timestamp: Number(fields[1]),
    payloadHex: fields[2],
    signatureHex: fields[3],
    signerCertId: Number(fields[4]),
    prevHashHex: fields[5],
    rowHashHex: fields[6],
  };
}

/** The exact byte string the row hash covers. */
export function canonicalRowBytes(
  timestamp: number | bigint,
  payload: Uint8Array,
  signature: Uint8Array,
  prevHash: Uint8Array,
): Uint8Array {
  if (prevHash.length !== 64) throw new Error("prev hash must be 64 bytes");
  return concat([u64be(timestamp), chunk(payload), chunk(signature), prevHash]);
}

// -- payloads ----------------------------------------------------------------

export type DecodedPayload =
  | { kind: "genesis"; chainTitle: string }
  | { kind: "certificate"; certHashHex: string }
  | {
      kind: "transaction";
      txTimestamp: number;
      docCreatedAt: number;
      examinedAt: number;
      metadata: Record<string, string>;
    };

class Reader {
  private pos = 0;
  constructor(private data: Uint8Array) {}

  take(n: number): Uint8Array {
    if (this.pos + n > this.data.length) throw new Error("truncated payload");
    const out = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  u32(): number {
    return new DataView(
      this.take(4).slice().buffer,
    ).getUint32(0);
  }

  u64(): number {
    return Number(new DataView(this.take(8).slice().buffer).getBigUint64(0));
  }

  chunk(): Uint8Array {
    return this.take(this.u32());
  }

  done(): void {
    if (this.pos !== this.data.length) throw new Error("trailing payload bytes");
  }
}

const decoder = new TextDecoder("utf-8", { fatal: true });

/** Decode a row payload by its leading tag byte. */
export function decodePayload(payload: Uint8Array): DecodedPayload {
  if (payload.length === 0) throw new Error("empty payload");
  const tag = payload[0];
  const reader = new Reader(payload.subarray(1));
  if (tag === 0) {
    const title = decoder.decode(reader.chunk());
    reader.done();
    return { kind: "genesis", chainTitle: title };
  }
  if (tag === 2) {
    const hash = reader.take(64);
    reader.done();
    return { kind: "certificate", certHashHex: bytesToHex(hash) };
  }
  if (tag === 1) {
    const txTimestamp = reader.u64();
    const docCreatedAt = reader.u64();
    const count = reader.u32();
    const metadata: Record<string, string> = {};
    for (let i = 0; i < count; i++) {
      const key = decoder.decode(reader.chunk());
      metadata[key] = decoder.decode(reader.chunk());
    }
    reader.chunk(); // creator signature
    const examinedAt = reader.u64();
    reader.chunk(); // examiner signature
    reader.chunk(); // archiver signature
    reader.done();
    return { kind: "transaction", txTimestamp, docCreatedAt, examinedAt, metadata };
  }
  throw new Error(`unknown payload tag ${tag}`);
}

// -- workflow transitions ------------------------------------------------------

export function transitionBytes(
  docId: string,
  status: string,
  timestamp: number,
  contentDigest: Uint8Array,
): Uint8Array {
  const id = utf8Encode(docId);
  const name = utf8Encode(status);
  return concat([chunk(id), chunk(name), u64be(timestamp), contentDigest]);
}

export function appendAuthBytes(
  docId: string,
  contentDigest: Uint8Array,
): Uint8Array {
  return concat([
    utf8Encode("append-auth"),
    Uint8Array.of(0),
    utf8Encode(docId),
    Uint8Array.of(0),
    contentDigest,
  ]);
}

// -- envelopes -------------------------------------------------------------------

type Json = null | boolean | number | string | Json[] | { [key: string]: Json };

/**
 * Stable JSON rendering matching the server's canonical form: keys sorted,
 * compact separators, non-ASCII escaped as \uXXXX.
 */
export function canonicalJson(value: Json): string {
  if (value === null || typeof value === "boolean") return JSON.stringify(value);
  if (typeof value === "number") {
    if (!Number.isInteger(value)) throw new Error("only integers are canonical");
    return String(value);
  }
  if (typeof value === "string") return escapeString(value);
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  const keys = Object.keys(value).sort();
  const body = keys.map((k) => escapeString(k) + ":" + canonicalJson(value[k]));
  return "{" + body.join(",") + "}";
}

function escapeString(text: string): string {
  // mirrors the server's ensure-ascii JSON escaping, including the five
  // short escapes and UTF-16 surrogate pairs for astral characters
  let out = '"';
  for (let i = 0; i < text.length; i++) {
    const unit = text.charCodeAt(i);
    const ch = text[i];
    if (ch === '"') out += '\\"';
    else if (ch === "\\") out += "\\\\";
    else if (ch === "\n") out += "\\n";
    else if (ch === "\r") out += "\\r";
    else if (ch === "\t") out += "\\t";
    else if (ch === "\b") out += "\\b";
    else if (ch === "\f") out += "\\f";
    else if (unit < 0x20 || unit > 0x7e) {
      out += "\\u" + unit.toString(16).padStart(4, "0");
    } else out += ch;
  }
  return out + '"';
}

export function envelopeBytes(
  msgType: string,
  timestamp: number,
  body: Json,
): Uint8Array {
  const ident = utf8Encode(msgType);
  return concat([chunk(ident), u64be(timestamp), utf8Encode(canonicalJson(body))]);
}

/** Wrap raw signature bytes in the scheme-tagged persisted encoding. */
export function tagSignature(raw: Uint8Array, schemeId: string): Uint8Array {
  const ident = utf8Encode(schemeId);
  if (ident.length > 255) throw new Error("scheme id too long");
  return concat([Uint8Array.of(ident.length), ident, raw]);
}

export function untagSignature(tagged: Uint8Array): {
  schemeId: string;
  raw: Uint8Array;
} {
  if (tagged.length === 0) throw new Error("empty signature encoding");
  const n = tagged[0];
  if (tagged.length < 1 + n) throw new Error("truncated signature encoding");
  return {
    schemeId: decoder.decode(tagged.subarray(1, 1 + n)),
    raw: tagged.subarray(1 + n),
  };
}
