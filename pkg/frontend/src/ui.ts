/**
 * DOM rendering. Views are pure functions of the reducer state plus a
 * dispatch table of actions; every control is role- and status-gated through
 * the same predicates the tests exercise, and server errors always surface
 * in the error strip rather than vanishing.
 */

import { DecodedPayload } from "./canonical.js";
import {
  AppState,
  DocumentCard,
  SessionView,
  canArchive,
  canAssign,
  canDecide,
  canManageRoles,
  canSubmit,
  countdownMs,
  formatCountdown,
  visibleDocuments,
} from "./state.js";
import { VerifiedRow } from "./verify.js";

export interface Actions {
  submitDocument(file: File, metadata: Record<string, string>): void;
  assignExpert(docId: string, expertCertId: number): void;
  decide(docId: string, verdict: "Approved" | "Rejected"): void;
  archive(docId: string): void;
  setRole(userId: number, role: string): void;
  logout(): void;
}

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child instanceof Node ? child : document.createTextNode(child));
  }
  return node;
}

function badge(status: string): HTMLElement {
  return el("span", { class: `badge badge-${status.toLowerCase()}` }, [status]);
}

export function renderDocumentCard(
  card: DocumentCard,
  session: SessionView | null,
  now: number,
  actions: Actions,
  expertChoices: { certId: number; label: string }[] = [],
): HTMLElement {
  const children: (Node | string)[] = [
    el("header", {}, [
      el("strong", {}, [card.metadata.title ?? card.doc_id]),
      badge(card.status),
    ]),
    el("p", { class: "meta" }, [
      `${card.metadata.author ?? ""} — ${card.metadata.organization ?? ""}`,
    ]),
    el("p", { class: "digest" }, [`digest ${card.content_digest.slice(0, 16)}…`]),
  ];

  if (card.status === "OnExamination") {
    const remaining = countdownMs(card, now);
    if (remaining !== null) {
      children.push(
        el("p", { class: remaining === 0 ? "deadline over" : "deadline" }, [
          remaining === 0
            ? "examination window closed"
            : `time left ${formatCountdown(remaining)}`,
        ]),
      );
    }
  }

  const controls = el("div", { class: "controls" });
  if (canAssign(session, card) && expertChoices.length > 0) {
    const select = el("select") as HTMLSelectElement;
    for (const choice of expertChoices) {
      select.append(el("option", { value: String(choice.certId) }, [choice.label]));
    }
    const button = el("button", {}, ["Assign expert"]);
    button.onclick = () => actions.assignExpert(card.doc_id, Number(select.value));
    controls.append(select, button);
  }
  if (session && card.status === "OnExamination") {
    const decidable = canDecide(session, card, now);
    for (const verdict of ["Approved", "Rejected"] as const) {
      const button = el("button", decidable ? {} : { disabled: "disabled" }, [
        verdict === "Approved" ? "Approve" : "Reject",
      ]) as HTMLButtonElement;
      button.onclick = () => actions.decide(card.doc_id, verdict);
      if (
        !decidable &&
        session.role === "Expert" &&
        card.assigned_expert_id === session.certId
      ) {
        button.title = "the examination window has closed";
      }
      controls.append(button);
    }
  }
  if (canArchive(session, card)) {
    const button = el("button", {}, ["Transfer to archive"]);
    button.onclick = () => actions.archive(card.doc_id);
    controls.append(button);
  }
  if (controls.childNodes.length > 0) children.push(controls);

  children.push(
    el(
      "ul",
      { class: "transitions" },
      card.transitions.map((t) =>
        el("li", {}, [
          `${t.status} at ${new Date(t.timestamp).toISOString()} ` +
            `(certificate ${t.signer_cert_id})`,
        ]),
      ),
    ),
  );
  return el("article", { class: "card", "data-doc": card.doc_id }, children);
}

function renderSubmitForm(actions: Actions): HTMLElement {
  const file = el("input", { type: "file" }) as HTMLInputElement;
  const title = el("input", { placeholder: "title" }) as HTMLInputElement;
  const author = el("input", { placeholder: "author" }) as HTMLInputElement;
  const organization = el("input", {
    placeholder: "organization",
  }) as HTMLInputElement;
  const button = el("button", {}, ["Upload document"]);
  button.onclick = () => {
    if (file.files && file.files[0]) {
      actions.submitDocument(file.files[0], {
        title: title.value,
        author: author.value,
        organization: organization.value,
      });
    }
  };
  return el("section", { class: "submit-form" }, [
    el("h2", {}, ["Submit a document"]),
    file, title, author, organization, button,
  ]);
}

export function renderDashboard(
  state: AppState,
  now: number,
  actions: Actions,
  expertChoices: { certId: number; label: string }[],
  users: { user_id: number; username: string; role: string }[],
): HTMLElement {
  const session = state.session;
  const root = el("main");
  if (!session) {
    root.append(el("p", {}, ["no active session"]));
    return root;
  }
  if (session.role === "UnconfirmedUser") {
    root.append(
      el("p", { class: "pending" }, [
        "your account awaits confirmation; no application access yet",
      ]),
    );
    return root;
  }
  if (canSubmit(session)) root.append(renderSubmitForm(actions));
  if (canManageRoles(session)) {
    root.append(renderUserTable(users, actions));
    return root;
  }

  const docs = visibleDocuments(state, session);
  const heading =
    session.role === "Expert" ? "Your review queue" : "Documents";
  root.append(el("h2", {}, [heading]));
  if (docs.length === 0) root.append(el("p", {}, ["nothing here yet"]));
  for (const card of docs) {
    root.append(renderDocumentCard(card, session, now, actions, expertChoices));
  }
  return root;
}

function renderUserTable(
  users: { user_id: number; username: string; role: string }[],
  actions: Actions,
): HTMLElement {
  const roles = [
    "UnconfirmedUser", "User", "Expert", "Administrator", "CAAdministrator",
  ];
  const rows = users.map((user) => {
    const select = el("select") as HTMLSelectElement;
    for (const role of roles) {
      const option = el("option", { value: role }, [role]) as HTMLOptionElement;
      option.selected = role === user.role;
      select.append(option);
    }
    const apply = el("button", {}, ["Apply"]);
    apply.onclick = () => actions.setRole(user.user_id, select.value);
    return el("tr", {}, [
      el("td", {}, [String(user.user_id)]),
      el("td", {}, [user.username]),
      el("td", {}, [select]),
      el("td", {}, [apply]),
    ]);
  });
  return el("section", {}, [
    el("h2", {}, ["Registered users"]),
    el("table", { class: "users" }, [
      el("thead", {}, [
        el("tr", {}, [
          el("th", {}, ["id"]), el("th", {}, ["username"]),
          el("th", {}, ["role"]), el("th", {}, [""]),
        ]),
      ]),
      el("tbody", {}, rows),
    ]),
  ]);
}

function describePayload(payload: DecodedPayload | null): string {
  if (payload === null) return "unreadable payload";
  switch (payload.kind) {
    case "genesis":
      return `genesis: ${payload.chainTitle}`;
    case "certificate":
      return `certificate ${payload.certHashHex.slice(0, 16)}…`;
    case "transaction":
      return (
        `${payload.metadata.title ?? "untitled"} ` +
        `(created ${new Date(payload.docCreatedAt).toISOString()}, ` +
        `examined ${new Date(payload.examinedAt).toISOString()})`
      );
  }
}

export function renderChainExplorer(rows: VerifiedRow[]): HTMLElement {
  const table = el("table", { class: "chain" }, [
    el("thead", {}, [
      el("tr", {}, [
        el("th", {}, ["#"]), el("th", {}, ["timestamp"]),
        el("th", {}, ["contents"]), el("th", {}, ["integrity"]),
      ]),
    ]),
    el(
      "tbody",
      {},
      rows.map((row) =>
        el("tr", { class: row.ok ? "row-ok" : "row-bad" }, [
          el("td", {}, [String(row.fields.index)]),
          el("td", {}, [new Date(row.fields.timestamp).toISOString()]),
          el("td", {}, [describePayload(row.payload)]),
          el("td", { class: row.ok ? "verified" : "violated" }, [
            row.ok ? "✓ verified" : `✗ ${row.problem}`,
          ]),
        ]),
      ),
    ),
  ]);
  const warnings = rows.filter((row) => !row.ok);
  const section = el("section", { class: "explorer" }, [
    el("h2", {}, ["Chain explorer"]),
  ]);
  if (warnings.length > 0) {
    section.append(
      el("p", { class: "integrity-warning" }, [
        `INTEGRITY WARNING: ${warnings.length} row(s) failed re-verification`,
      ]),
    );
  }
  section.append(table);
  return section;
}

/** One-time display of freshly issued credentials; never shown again. */
export function renderCredentialModal(
  credentials: Record<string, string>,
  onDismiss: () => void,
): HTMLElement {
  const blob = JSON.stringify(credentials, null, 2);
  const download = el("a", {
    download: `identity-${credentials.cert_id}.json`,
    href: "data:application/json;charset=utf-8," + encodeURIComponent(blob),
  }, ["Download identity file"]);
  const dismiss = el("button", {}, ["I stored it — close"]);
  dismiss.onclick = onDismiss;
  return el("dialog", { class: "credential-modal", open: "open" }, [
    el("h2", {}, ["Certificate issued"]),
    el("p", {}, [
      "This private key is shown exactly once. Download the identity file " +
        "before closing; it cannot be recovered afterwards.",
    ]),
    el("pre", {}, [blob]),
    download,
    dismiss,
  ]);
}

export function renderAlarms(state: AppState): HTMLElement {
  const strip = el("div", { class: "alarms" });
  for (const alarm of state.alarms) {
    strip.append(el("p", { class: "alarm" }, [`⚠ ${alarm}`]));
  }
  for (const error of state.errors.slice(-3)) {
    strip.append(el("p", { class: "error" }, [error]));
  }
  return strip;
}
