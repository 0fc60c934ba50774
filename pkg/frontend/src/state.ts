/**
 * Session state and the event-stream reducer.
 *
 * Every server message (direct response or broadcast) flows through
 * reduce(), so document cards stay consistent no matter how updates
 * interleave; the UI renders only from this state.
 */

export type RoleName =
  | "UnconfirmedUser"
  | "User"
  | "Expert"
  | "Administrator"
  | "CAAdministrator";

export interface SessionView {
  role: RoleName;
  certId: number;
  token: string | null;
  nodeConnected: boolean;
  caConnected: boolean;
}

export interface TransitionView {
  status: string;
  timestamp: number;
  signer_cert_id: number;
}

export interface DocumentCard {
  doc_id: string;
  status: string;
  metadata: Record<string, string>;
  content_digest: string;
  creator_cert_id: number;
  assigned_expert_id: number | null;
  deadline: number | null;
  ledger_index: number | null;
  transitions: TransitionView[];
}

export interface AppState {
  session: SessionView | null;
  documents: Map<string, DocumentCard>;
  chainLines: string[];
  alarms: string[];
  errors: string[];
}

export function initialState(): AppState {
  return {
    session: null,
    documents: new Map(),
    chainLines: [],
    alarms: [],
    errors: [],
  };
}

export interface ServerMessage {
  msg_type: string;
  body?: Record<string, unknown>;
}

export function reduce(state: AppState, message: ServerMessage): AppState {
  const body = message.body ?? {};
  switch (message.msg_type) {
    case "status_update": {
      const card = body as unknown as DocumentCard;
      if (!card.doc_id) return state;
      const documents = new Map(state.documents);
      const existing = documents.get(card.doc_id);
      // a stale broadcast must never roll a card backwards
      if (existing && existing.transitions.length > card.transitions.length) {
        return state;
      }
      documents.set(card.doc_id, card);
      return { ...state, documents };
    }
    case "chain_rows": {
      const from = Number(body.from ?? 0);
      const rows = (body.rows as string[]) ?? [];
      const chainLines = state.chainLines.slice(0, from).concat(rows);
      return { ...state, chainLines };
    }
    case "alarm": {
      const note = String(body.message ?? "integrity alarm");
      return { ...state, alarms: [...state.alarms, note] };
    }
    case "error": {
      const note = `${body.error ?? "Error"}: ${body.message ?? ""}`;
      return { ...state, errors: [...state.errors, note] };
    }
    default:
      return state;
  }
}

// -- role/status gating: which controls may render -----------------------------

export function canSubmit(session: SessionView | null): boolean {
  return session?.role === "User";
}

export function canAssign(
  session: SessionView | null,
  card: DocumentCard,
): boolean {
  return session?.role === "Administrator" && card.status === "Created";
}

export function canDecide(
  session: SessionView | null,
  card: DocumentCard,
  now: number,
): boolean {
  return (
    session?.role === "Expert" &&
    card.status === "OnExamination" &&
    card.assigned_expert_id === session.certId &&
    card.deadline !== null &&
    now < card.deadline
  );
}

export function canArchive(
  session: SessionView | null,
  card: DocumentCard,
): boolean {
  return session?.role === "Administrator" && card.status === "Approved";
}

export function canManageRoles(session: SessionView | null): boolean {
  return session?.role === "CAAdministrator";
}

/** Documents the given session should see on its dashboard. */
export function visibleDocuments(
  state: AppState,
  session: SessionView | null,
): DocumentCard[] {
  const all = [...state.documents.values()];
  if (!session) return [];
  switch (session.role) {
    case "User":
      return all.filter((d) => d.creator_cert_id === session.certId);
    case "Expert":
      return all.filter((d) => d.assigned_expert_id === session.certId);
    case "Administrator":
      return all;
    default:
      return [];
  }
}

/** Remaining examination time, clamped at zero once the deadline hits. */
export function countdownMs(card: DocumentCard, now: number): number | null {
  if (card.deadline === null) return null;
  return Math.max(0, card.deadline - now);
}

export function formatCountdown(ms: number): string {
  const totalSeconds = Math.floor(ms / 1000);
  const hours = Math.floor(totalSeconds / 3600);
  const minutes = Math.floor((totalSeconds % 3600) / 60);
  const seconds = totalSeconds % 60;
  const pad = (n: number) => String(n).padStart(2, "0");
  return `${pad(hours)}:${pad(minutes)}:${pad(seconds)}`;
}
