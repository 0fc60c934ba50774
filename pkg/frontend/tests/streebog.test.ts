import { describe, expect, it } from "vitest";

import { hexToBytes, bytesToHex } from "../src/canonical.js";
import { streebog512 } from "../src/streebog.js";
import fixtures from "./fixtures.json";

describe("streebog512", () => {
  it("matches the published vectors and the server digests", () => {
    for (const vector of fixtures.hash_vectors) {
      const digest = streebog512(hexToBytes(vector.message_hex));
      expect(bytesToHex(digest)).toBe(vector.digest_hex);
    }
  });

  it("is deterministic and 64 bytes long", () => {
    const message = new TextEncoder().encode("same input");
    const first = streebog512(message);
    expect(first.length).toBe(64);
    expect(bytesToHex(streebog512(message))).toBe(bytesToHex(first));
  });

  it("covers the padding paths around the block size", () => {
    const seen = new Set<string>();
    for (const n of [0, 1, 63, 64, 65, 127, 128]) {
      seen.add(bytesToHex(streebog512(new Uint8Array(n).fill(0x61))));
    }
    expect(seen.size).toBe(7);
  });

  it("changes completely on a single bit flip", () => {
    const message = new TextEncoder().encode("avalanche probe");
    const flipped = Uint8Array.from(message);
    flipped[3] ^= 0x04;
    expect(bytesToHex(streebog512(message))).not.toBe(
      bytesToHex(streebog512(flipped)),
    );
  });
});
