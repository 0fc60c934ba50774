/**
 * Client-side chain re-verification: recompute every row hash from the
 * canonical encoding and check the backward links, so the explorer can mark
 * rows green or red without trusting the server's own report.
 */

import {
  DecodedPayload,
  LedgerRowFields,
  bytesEqual,
  canonicalRowBytes,
  decodePayload,
  hexToBytes,
  parseRowLine,
} from "./canonical.js";
import { streebog512 } from "./streebog.js";

export interface VerifiedRow {
  fields: LedgerRowFields;
  payload: DecodedPayload | null;
  ok: boolean;
  problem?: string;
}

const ZERO_HASH = "0".repeat(128);

export function verifyRows(lines: string[]): VerifiedRow[] {
  const out: VerifiedRow[] = [];
  let previousHashHex = ZERO_HASH;
  let previousTimestamp = -Infinity;
  lines.forEach((line, index) => {
    let fields: LedgerRowFields;
    try {
      fields = parseRowLine(line);
    } catch (error) {
      out.push({
        fields: {
          index,
          timestamp: 0,
          payloadHex: "",
          signatureHex: "",
          signerCertId: 0,
          prevHashHex: "",
          rowHashHex: "",
        },
        payload: null,
        ok: false,
        problem: `unparsable row: ${(error as Error).message}`,
      });
      previousHashHex = "";
      return;
    }
    const row: VerifiedRow = { fields, payload: null, ok: true };
    try {
      row.payload = decodePayload(hexToBytes(fields.payloadHex));
    } catch (error) {
      row.ok = false;
      row.problem = `undecodable payload: ${(error as Error).message}`;
    }
    if (row.ok && fields.index !== index) {
      row.ok = false;
      row.problem = "index mismatch";
    }
    if (row.ok && fields.prevHashHex !== previousHashHex) {
      row.ok = false;
      row.problem = "previous-hash link broken";
    }
    if (row.ok && fields.timestamp < previousTimestamp) {
      row.ok = false;
      row.problem = "timestamp decreased";
    }
    if (row.ok) {
      const recomputed = streebog512(
        canonicalRowBytes(
          fields.timestamp,
          hexToBytes(fields.payloadHex),
          hexToBytes(fields.signatureHex),
          hexToBytes(fields.prevHashHex),
        ),
      );
      if (!bytesEqual(recomputed, hexToBytes(fields.rowHashHex))) {
        row.ok = false;
        row.problem = "row hash mismatch";
      }
    }
    out.push(row);
    previousHashHex = fields.rowHashHex;
    previousTimestamp = fields.timestamp;
  });
  return out;
}

export function allRowsGreen(rows: VerifiedRow[]): boolean {
  return rows.every((row) => row.ok);
}
