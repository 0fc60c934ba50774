import { describe, expect, it } from "vitest";

import { bytesToHex, hexToBytes, utf8Encode } from "../src/canonical.js";
import { publicKeyFromPrivate, sign, verify } from "../src/gost_ec.js";
import fixtures from "./fixtures.json";

const keypair = fixtures.keypair;

describe("key derivation", () => {
  it("derives the same public key as the server", () => {
    const publicBytes = publicKeyFromPrivate(hexToBytes(keypair.private_hex));
    expect(bytesToHex(publicBytes)).toBe(keypair.public_hex);
    expect(publicBytes.length).toBe(128);
  });
});

describe("cross-implementation verification", () => {
  it("accepts a signature produced by the server", () => {
    const signed = fixtures.signed_message;
    expect(
      verify(
        hexToBytes(keypair.public_hex),
        hexToBytes(signed.message_hex),
        hexToBytes(signed.signature_hex),
      ),
    ).toBe(true);
  });

  it("produces the exact server signature (shared deterministic nonce)", () => {
    const signed = fixtures.signed_message;
    const ours = sign(
      hexToBytes(keypair.private_hex),
      hexToBytes(signed.message_hex),
    );
    expect(bytesToHex(ours)).toBe(signed.signature_hex);
  });

  it("accepts the server-signed workflow transition", () => {
    const t = fixtures.transition;
    expect(
      verify(
        hexToBytes(keypair.public_hex),
        hexToBytes(t.message_hex),
        hexToBytes(t.signature_hex),
      ),
    ).toBe(true);
  });
});

describe("signature properties", () => {
  const priv = hexToBytes(keypair.private_hex);
  const pub = hexToBytes(keypair.public_hex);

  it("round-trips locally", () => {
    const message = utf8Encode("browser-side message");
    expect(verify(pub, message, sign(priv, message))).toBe(true);
  });

  it("rejects a tampered message", () => {
    const message = utf8Encode("original");
    const signature = sign(priv, message);
    expect(verify(pub, utf8Encode("originaL"), signature)).toBe(false);
  });

  it("rejects malformed inputs without throwing", () => {
    const message = utf8Encode("m");
    const signature = sign(priv, message);
    expect(verify(new Uint8Array(12), message, signature)).toBe(false);
    expect(verify(pub, message, signature.subarray(0, 64))).toBe(false);
    expect(verify(new Uint8Array(128), message, signature)).toBe(false);
  });
});
