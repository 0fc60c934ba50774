/**
 * Browser-side signing for envelopes and workflow transitions.
 *
 * Same curve and signing equations as the server (512-bit test parameter
 * set), plain double-and-add arithmetic: a session signs a handful of
 * messages, not thousands. The deterministic nonce derivation matches the
 * server byte for byte, so identical inputs produce identical signatures.
 */

import { streebog512 } from "./streebog.js";

export const SCHEME_ID = "gost3410-2012-512-test";
const COORD_BYTES = 64;

const P = BigInt(
  "0x4531ACD1FE0023C7550D267B6B2FEE80922B14B2FFB90F04D4EB7C09B5D2D15D" +
    "F1D852741AF4704A0458047E80E4546D35B8336FAC224DD81664BBF528BE6373",
);
const A = 7n;
const B = BigInt(
  "0x1CFF0806A31116DA29D8CFA54E57EB748BC5F377E49400FDD788B649ECA1AC43" +
    "61834013B2AD7322480A89CA58E0CF74BC9E540C2ADD6897FAD0A3084F302ADC",
);
const Q = BigInt(
  "0x4531ACD1FE0023C7550D267B6B2FEE80922B14B2FFB90F04D4EB7C09B5D2D15D" +
    "A82F2D7ECB1DBAC719905C5EECC423F1D86E25EDBE23C595D644AAF187E6E6DF",
);
const GX = BigInt(
  "0x24D19CC64572EE30F396BF6EBBFD7A6C5213B3B3D7057CC825F91093A68CD762" +
    "FD60611262CD838DC6B60AA7EEE804E28BC849977FAC33B4B530F1B120248A9A",
);
const GY = BigInt(
  "0x2BB312A43BD2CE6E0D020613C857ACDDCFBF061E91E5F2C3F32447C259F39B2C" +
    "83AB156D77F1496BF7EB3351E1EE4E43DC1A18B91B24640B6DBB92CB1ADD371E",
);

type Point = { x: bigint; y: bigint } | null;

function mod(a: bigint, m: bigint): bigint {
  const r = a % m;
  return r < 0n ? r + m : r;
}

function modInverse(a: bigint, m: bigint): bigint {
  let [old_r, r] = [mod(a, m), m];
  let [old_s, s] = [1n, 0n];
  while (r !== 0n) {
    const q = old_r / r;
    [old_r, r] = [r, old_r - q * r];
    [old_s, s] = [s, old_s - q * s];
  }
  return mod(old_s, m);
}

function pointAdd(p1: Point, p2: Point): Point {
  if (p1 === null) return p2;
  if (p2 === null) return p1;
  if (p1.x === p2.x && mod(p1.y + p2.y, P) === 0n) return null;
  let slope: bigint;
  if (p1.x === p2.x && p1.y === p2.y) {
    if (p1.y === 0n) return null;
    slope = mod((3n * p1.x * p1.x + A) * modInverse(2n * p1.y, P), P);
  } else {
    slope = mod((p2.y - p1.y) * modInverse(p2.x - p1.x, P), P);
  }
  const x3 = mod(slope * slope - p1.x - p2.x, P);
  const y3 = mod(slope * (p1.x - x3) - p1.y, P);
  return { x: x3, y: y3 };
}

function pointMultiply(k: bigint, point: Point): Point {
  let result: Point = null;
  let addend = point;
  while (k > 0n) {
    if (k & 1n) result = pointAdd(result, addend);
    addend = pointAdd(addend, addend);
    k >>= 1n;
  }
  return result;
}

export function bytesToBigInt(bytes: Uint8Array): bigint {
  let x = 0n;
  for (const b of bytes) x = (x << 8n) | BigInt(b);
  return x;
}

export function bigIntToBytes(x: bigint, length: number): Uint8Array {
  const out = new Uint8Array(length);
  for (let i = length - 1; i >= 0; i--) {
    out[i] = Number(x & 0xffn);
    x >>= 8n;
  }
  return out;
}

function onCurve(x: bigint, y: bigint): boolean {
  return mod(y * y - (x * x * x + A * x + B), P) === 0n;
}

function messageScalar(message: Uint8Array): bigint {
  const e = mod(bytesToBigInt(streebog512(message)), Q);
  return e === 0n ? 1n : e;
}

function deriveNonce(privateKey: bigint, e: bigint): bigint {
  let counter = 0;
  const priv = bigIntToBytes(privateKey, COORD_BYTES);
  const ebytes = bigIntToBytes(e, COORD_BYTES);
  for (;;) {
    const seed = new Uint8Array(COORD_BYTES * 2 + 4);
    seed.set(priv, 0);
    seed.set(ebytes, COORD_BYTES);
    new DataView(seed.buffer).setUint32(COORD_BYTES * 2, counter);
    const k = mod(bytesToBigInt(streebog512(seed)), Q);
    if (k !== 0n) return k;
    counter += 1;
  }
}

export function publicKeyFromPrivate(privateBytes: Uint8Array): Uint8Array {
  const d = bytesToBigInt(privateBytes);
  const point = pointMultiply(d, { x: GX, y: GY });
  if (point === null) throw new Error("degenerate private key");
  const out = new Uint8Array(2 * COORD_BYTES);
  out.set(bigIntToBytes(point.x, COORD_BYTES), 0);
  out.set(bigIntToBytes(point.y, COORD_BYTES), COORD_BYTES);
  return out;
}

/** Sign message bytes with a raw 64-byte private key; returns r||s. */
export function sign(privateBytes: Uint8Array, message: Uint8Array): Uint8Array {
  const d = bytesToBigInt(privateBytes);
  if (d <= 0n || d >= Q) throw new Error("private key out of range");
  const e = messageScalar(message);
  for (let bump = 0n; ; bump++) {
    const k = deriveNonce(d, e + bump);
    const c = pointMultiply(k, { x: GX, y: GY });
    if (c === null) continue;
    const r = mod(c.x, Q);
    if (r === 0n) continue;
    const s = mod(r * d + k * e, Q);
    if (s === 0n) continue;
    const out = new Uint8Array(2 * COORD_BYTES);
    out.set(bigIntToBytes(r, COORD_BYTES), 0);
    out.set(bigIntToBytes(s, COORD_BYTES), COORD_BYTES);
    return out;
  }
}

/** Verify an r||s signature against a 128-byte public key. */
export function verify(
  publicBytes: Uint8Array,
  message: Uint8Array,
  signature: Uint8Array,
): boolean {
  if (publicBytes.length !== 2 * COORD_BYTES) return false;
  if (signature.length !== 2 * COORD_BYTES) return false;
  const x = bytesToBigInt(publicBytes.subarray(0, COORD_BYTES));
  const y = bytesToBigInt(publicBytes.subarray(COORD_BYTES));
  if (!onCurve(x, y)) return false;
  const r = bytesToBigInt(signature.subarray(0, COORD_BYTES));
  const s = bytesToBigInt(signature.subarray(COORD_BYTES));
  if (r <= 0n || r >= Q || s <= 0n || s >= Q) return false;
  const e = messageScalar(message);
  const v = modInverse(e, Q);
  const z1 = mod(s * v, Q);
  const z2 = mod(-r * v, Q);
  const c = pointAdd(
    pointMultiply(z1, { x: GX, y: GY }),
    pointMultiply(z2, { x, y }),
  );
  if (c === null) return false;
  return mod(c.x, Q) === r;
}
