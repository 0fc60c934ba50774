/**
 * End-to-end flow through the browser client code against live services.
 *
 * Needs a running authority and node:
 *   ARCHIVECHAIN_E2E_CA=http://127.0.0.1:8600 \
 *   ARCHIVECHAIN_E2E_NODE=http://127.0.0.1:8601 \
 *   ARCHIVECHAIN_E2E_TOKEN=<ca admin password> npx vitest run tests/e2e.test.ts
 *
 * Skipped when the environment variables are absent so `npm test` stays
 * hermetic.
 */

import { describe, expect, it } from "vitest";

import { CaApi, Identity, NodeApi } from "../src/api.js";
import { hexToBytes } from "../src/canonical.js";
import { ServerMessage } from "../src/state.js";
import { streebog512 } from "../src/streebog.js";
import { allRowsGreen, verifyRows } from "../src/verify.js";

const CA_URL = process.env.ARCHIVECHAIN_E2E_CA;
const NODE_URL = process.env.ARCHIVECHAIN_E2E_NODE;
const CA_PASSWORD = process.env.ARCHIVECHAIN_E2E_TOKEN;

function body(message: ServerMessage): Record<string, unknown> {
  if (message.msg_type === "error") {
    throw new Error(JSON.stringify(message.body));
  }
  return message.body ?? {};
}

describe.skipIf(!CA_URL || !NODE_URL || !CA_PASSWORD)("browser-client e2e", () => {
  it("drives register → role → submit → assign → approve → archive", async () => {
    const ca = new CaApi(CA_URL!);
    const node = new NodeApi(NODE_URL!);
    const suffix = Date.now().toString(36);

    const identities: Record<string, Identity> = {};
    const admin = await ca.login("ca-admin", CA_PASSWORD!);
    for (const [name, role] of [
      ["creator", "User"], ["reviewer", "Expert"], ["keeper", "Administrator"],
    ] as const) {
      const account = await ca.register(`${name}-${suffix}`, "password123", {
        first_name: name, last_name: "E2E", organization: "Browser Org",
        email: `${name}@e2e.test`,
      });
      const assigned = await ca.setRole(
        String(admin.token), Number(account.user_id), role,
      );
      identities[name] = assigned.credentials as unknown as Identity;
    }

    const content = new TextEncoder().encode(`browser submission ${suffix}`);
    const submitted = body(await node.submitDocument(
      identities.creator, content,
      { title: "Browser doc", author: "Creator E2E", organization: "Browser Org" },
    ));
    const docId = String(submitted.doc_id);
    const digest = streebog512(content);
    expect(submitted.status).toBe("Created");

    const assigned = body(await node.assignExpert(
      identities.keeper, docId, identities.reviewer.cert_id, digest,
    ));
    expect(assigned.status).toBe("OnExamination");

    const approved = body(await node.decide(
      identities.reviewer, docId, "Approved", digest,
    ));
    expect(approved.status).toBe("Approved");

    const archived = body(await node.archive(identities.keeper, docId, digest));
    expect(archived.status).toBe("Added");

    // the explorer re-verifies what the server returned
    const lines = await node.chainLines(0);
    const rows = verifyRows(lines);
    expect(allRowsGreen(rows)).toBe(true);
    const last = rows[rows.length - 1];
    expect(last.payload?.kind).toBe("transaction");

    // client-side detection of a doctored response
    const doctoredFields = lines[lines.length - 1].split("\t");
    const payload = hexToBytes(doctoredFields[2]);
    payload[4] ^= 0x01;
    doctoredFields[2] = Array.from(payload, (b) =>
      b.toString(16).padStart(2, "0"),
    ).join("");
    const doctored = [...lines];
    doctored[doctored.length - 1] = doctoredFields.join("\t");
    const doctoredRows = verifyRows(doctored);
    expect(doctoredRows[doctoredRows.length - 1].ok).toBe(false);
  }, 60_000);
});
