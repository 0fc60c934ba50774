// @vitest-environment happy-dom
import { describe, expect, it } from "vitest";

import { DocumentCard, SessionView } from "../src/state.js";
import {
  Actions,
  renderChainExplorer,
  renderCredentialModal,
  renderDashboard,
  renderDocumentCard,
} from "../src/ui.js";
import { verifyRows } from "../src/verify.js";
import { initialState, reduce } from "../src/state.js";
import fixtures from "./fixtures.json";

const noActions: Actions = {
  submitDocument() {},
  assignExpert() {},
  decide() {},
  archive() {},
  setRole() {},
  logout() {},
};

function card(overrides: Partial<DocumentCard> = {}): DocumentCard {
  return {
    doc_id: "doc-ui",
    status: "OnExamination",
    metadata: { title: "UI doc", author: "A", organization: "O" },
    content_digest: "cd".repeat(64),
    creator_cert_id: 2,
    assigned_expert_id: 3,
    deadline: 10_000,
    ledger_index: null,
    transitions: [
      { status: "Created", timestamp: 1, signer_cert_id: 2 },
      { status: "OnExamination", timestamp: 2, signer_cert_id: 4 },
    ],
    ...overrides,
  };
}

const expertSession: SessionView = {
  role: "Expert", certId: 3, token: null,
  nodeConnected: true, caConnected: true,
};

describe("document card controls", () => {
  it("enables decision buttons before the deadline", () => {
    const node = renderDocumentCard(card(), expertSession, 9_000, noActions);
    const buttons = [...node.querySelectorAll("button")];
    expect(buttons).toHaveLength(2);
    expect(buttons.every((b) => !b.disabled)).toBe(true);
    expect(node.textContent).toContain("time left");
  });

  it("disables decision controls exactly at the deadline", () => {
    const node = renderDocumentCard(card(), expertSession, 10_000, noActions);
    const buttons = [...node.querySelectorAll("button")];
    expect(buttons).toHaveLength(2);
    expect(buttons.every((b) => b.disabled)).toBe(true);
    expect(node.textContent).toContain("examination window closed");
  });

  it("renders no decision controls for foreign documents", () => {
    const foreign = card({ assigned_expert_id: 99 });
    const node = renderDocumentCard(foreign, expertSession, 9_000, noActions);
    const buttons = [...node.querySelectorAll("button")];
    expect(buttons.every((b) => b.disabled)).toBe(true);
  });

  it("offers archive only to administrators on approved documents", () => {
    const adminSession: SessionView = { ...expertSession, role: "Administrator" };
    const approved = card({ status: "Approved" });
    const node = renderDocumentCard(approved, adminSession, 0, noActions);
    const labels = [...node.querySelectorAll("button")].map((b) => b.textContent);
    expect(labels).toContain("Transfer to archive");
    const userNode = renderDocumentCard(
      approved, { ...expertSession, role: "User" }, 0, noActions,
    );
    expect(userNode.querySelectorAll("button")).toHaveLength(0);
  });
});

describe("dashboards", () => {
  it("unconfirmed users see the pending notice and nothing else", () => {
    const state = initialState();
    state.session = { ...expertSession, role: "UnconfirmedUser" };
    const node = renderDashboard(state, 0, noActions, [], []);
    expect(node.textContent).toContain("awaits confirmation");
    expect(node.querySelectorAll("button")).toHaveLength(0);
  });

  it("authority administrators see the user table with role selects", () => {
    const state = initialState();
    state.session = { ...expertSession, role: "CAAdministrator" };
    const node = renderDashboard(state, 0, noActions, [], [
      { user_id: 2, username: "ada", role: "User" },
      { user_id: 3, username: "bob", role: "Expert" },
    ]);
    expect(node.querySelectorAll("select")).toHaveLength(2);
    expect(node.textContent).toContain("ada");
  });

  it("experts see their queue", () => {
    let state = initialState();
    state = reduce(state, {
      msg_type: "status_update", body: card() as never,
    });
    state.session = expertSession;
    const node = renderDashboard(state, 0, noActions, [], []);
    expect(node.textContent).toContain("Your review queue");
    expect(node.querySelectorAll("article.card")).toHaveLength(1);
  });
});

describe("chain explorer rendering", () => {
  it("renders a pristine chain fully green", () => {
    const node = renderChainExplorer(verifyRows(fixtures.chain_lines));
    expect(node.querySelectorAll("tr.row-ok")).toHaveLength(
      fixtures.chain_lines.length,
    );
    expect(node.querySelectorAll("tr.row-bad")).toHaveLength(0);
    expect(node.querySelector(".integrity-warning")).toBeNull();
  });

  it("marks a doctored row red with a prominent warning", () => {
    const lines = [...fixtures.chain_lines];
    lines[fixtures.doctored_index] = fixtures.doctored_line;
    const node = renderChainExplorer(verifyRows(lines));
    const bad = node.querySelectorAll("tr.row-bad");
    expect(bad).toHaveLength(1);
    expect(bad[0].textContent).toContain("row hash mismatch");
    expect(node.querySelector(".integrity-warning")?.textContent).toContain(
      "INTEGRITY WARNING",
    );
  });
});

describe("credential modal", () => {
  it("shows the one-time key with a download link", () => {
    let dismissed = false;
    const node = renderCredentialModal(
      { cert_id: "5", private_key: "ab12" },
      () => { dismissed = true; },
    );
    expect(node.textContent).toContain("shown exactly once");
    const link = node.querySelector("a");
    expect(link?.getAttribute("download")).toBe("identity-5.json");
    (node.querySelector("button") as HTMLButtonElement).click();
    expect(dismissed).toBe(true);
  });
});
