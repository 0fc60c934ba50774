import { describe, expect, it } from "vitest";

import {
  bytesToHex,
  canonicalJson,
  canonicalRowBytes,
  decodePayload,
  envelopeBytes,
  hexToBytes,
  parseRowLine,
  tagSignature,
  transitionBytes,
  untagSignature,
  utf8Encode,
} from "../src/canonical.js";
import { streebog512 } from "../src/streebog.js";
import fixtures from "./fixtures.json";

describe("row encoding", () => {
  it("parses the seven tab-separated fields", () => {
    const fields = parseRowLine(fixtures.chain_lines[1]);
    expect(fields.index).toBe(1);
    expect(fields.prevHashHex).toHaveLength(128);
    expect(fields.rowHashHex).toHaveLength(128);
  });

  it("recomputes every row hash from the canonical bytes", () => {
    for (const line of fixtures.chain_lines) {
      const fields = parseRowLine(line);
      const digest = streebog512(
        canonicalRowBytes(
          fields.timestamp,
          hexToBytes(fields.payloadHex),
          hexToBytes(fields.signatureHex),
          hexToBytes(fields.prevHashHex),
        ),
      );
      expect(bytesToHex(digest)).toBe(fields.rowHashHex);
    }
  });

  it("rejects lines with the wrong field count", () => {
    expect(() => parseRowLine("1\t2\t3")).toThrow(/7 tab-separated/);
  });
});

describe("payload decoding", () => {
  it("decodes the genesis payload", () => {
    const fields = parseRowLine(fixtures.chain_lines[0]);
    const payload = decodePayload(hexToBytes(fields.payloadHex));
    expect(payload).toEqual({ kind: "genesis", chainTitle: "fixture ledger" });
  });

  it("decodes final transactions with their metadata", () => {
    const fields = parseRowLine(fixtures.chain_lines[1]);
    const payload = decodePayload(hexToBytes(fields.payloadHex));
    if (payload.kind !== "transaction") throw new Error("wrong kind");
    expect(payload.metadata.title).toBe("Fixture doc 0");
    expect(payload.docCreatedAt).toBeLessThanOrEqual(payload.examinedAt);
    expect(payload.examinedAt).toBeLessThanOrEqual(payload.txTimestamp);
  });

  it("rejects unknown tags and trailing bytes", () => {
    expect(() => decodePayload(Uint8Array.of(9, 1, 2))).toThrow(/unknown/);
    const fields = parseRowLine(fixtures.chain_lines[0]);
    const padded = new Uint8Array(hexToBytes(fields.payloadHex).length + 1);
    padded.set(hexToBytes(fields.payloadHex));
    expect(() => decodePayload(padded)).toThrow(/trailing/);
  });
});

describe("transition bytes", () => {
  it("matches the server encoding byte for byte", () => {
    const t = fixtures.transition;
    const message = transitionBytes(
      t.doc_id, t.status, t.timestamp, hexToBytes(t.content_digest_hex),
    );
    expect(bytesToHex(message)).toBe(t.message_hex);
  });
});

describe("canonical JSON and envelopes", () => {
  it("sorts keys and escapes non-ascii like the server", () => {
    expect(canonicalJson({ b: 1, a: "x" })).toBe('{"a":"x","b":1}');
    expect(canonicalJson({ note: "é漢" })).toBe('{"note":"\\u00e9\\u6f22"}');
    expect(canonicalJson({ s: 'a"b\\c\nd' })).toBe('{"s":"a\\"b\\\\c\\nd"}');
    expect(canonicalJson([1, "two", null, true])).toBe('[1,"two",null,true]');
  });

  it("reproduces the server's signed envelope bytes", () => {
    const envelope = fixtures.envelope;
    const message = envelopeBytes(
      envelope.dict.msg_type,
      envelope.dict.timestamp,
      envelope.dict.body as never,
    );
    expect(bytesToHex(message)).toBe(envelope.signed_bytes_hex);
  });
});

describe("signature tagging", () => {
  it("round-trips the scheme-tagged encoding", () => {
    const raw = utf8Encode("raw-signature-bytes");
    const tagged = tagSignature(raw, "some-scheme");
    const untagged = untagSignature(tagged);
    expect(untagged.schemeId).toBe("some-scheme");
    expect(bytesToHex(untagged.raw)).toBe(bytesToHex(raw));
  });
});
