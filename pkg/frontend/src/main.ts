/**
 * Entry point: wires the API clients, the channel, the reducer, and the
 * views together. State lives in one place; every incoming message reduces
 * into it and triggers a re-render.
 */

import { CaApi, Identity, NodeApi, openChannel, parseIdentity } from "./api.js";
import { certificateRole } from "./api.js";
import { hexToBytes } from "./canonical.js";
import {
  AppState,
  DocumentCard,
  RoleName,
  initialState,
  reduce,
} from "./state.js";
import {
  Actions,
  el,
  renderAlarms,
  renderChainExplorer,
  renderCredentialModal,
  renderDashboard,
} from "./ui.js";
import { verifyRows } from "./verify.js";

const IDENTITY_KEY = "archivechain.identity";
const TOKEN_KEY = "archivechain.token";

let state: AppState = initialState();
let nodeApi: NodeApi | null = null;
let caApi: CaApi | null = null;
let identity: Identity | null = null;
let socket: WebSocket | null = null;
let users: { user_id: number; username: string; role: string }[] = [];
let expertChoices: { certId: number; label: string }[] = [];

function dispatch(message: Parameters<typeof reduce>[1]): void {
  state = reduce(state, message);
  render();
}

function surface(error: unknown): void {
  dispatch({
    msg_type: "error",
    body: { error: "RequestFailed", message: String(error) },
  });
}

function cardDigest(docId: string): Uint8Array {
  const card = state.documents.get(docId);
  if (!card) throw new Error(`unknown document ${docId}`);
  return hexToBytes(card.content_digest);
}

const actions: Actions = {
  submitDocument(file, metadata) {
    if (!nodeApi || !identity) return;
    file.arrayBuffer().then((buffer) =>
      nodeApi!
        .submitDocument(identity!, new Uint8Array(buffer), metadata)
        .then(dispatch)
        .catch(surface),
    );
  },
  assignExpert(docId, expertCertId) {
    if (!nodeApi || !identity) return;
    nodeApi
      .assignExpert(identity, docId, expertCertId, cardDigest(docId))
      .then(dispatch)
      .catch(surface);
  },
  decide(docId, verdict) {
    if (!nodeApi || !identity) return;
    nodeApi
      .decide(identity, docId, verdict, cardDigest(docId))
      .then(dispatch)
      .catch(surface);
  },
  archive(docId) {
    if (!nodeApi || !identity) return;
    nodeApi
      .archive(identity, docId, cardDigest(docId))
      .then(dispatch)
      .then(() => refreshChain())
      .catch(surface);
  },
  setRole(userId, role) {
    const token = sessionStorage.getItem(TOKEN_KEY);
    if (!caApi || !token) return;
    caApi
      .setRole(token, userId, role)
      .then((response) => {
        if (response.credentials) {
          const modal = renderCredentialModal(
            response.credentials as Record<string, string>,
            () => modal.remove(),
          );
          document.body.append(modal);
        }
        return refreshUsers();
      })
      .catch(surface);
  },
  logout() {
    sessionStorage.removeItem(IDENTITY_KEY);
    sessionStorage.removeItem(TOKEN_KEY);
    socket?.close();
    identity = null;
    state = initialState();
    render();
  },
};

async function refreshDocuments(): Promise<void> {
  if (!nodeApi) return;
  const documents = (await nodeApi.documents()) as unknown as DocumentCard[];
  for (const card of documents) {
    state = reduce(state, { msg_type: "status_update", body: card as never });
  }
}

async function refreshChain(): Promise<void> {
  if (!nodeApi) return;
  const lines = await nodeApi.chainLines(0);
  state = reduce(state, {
    msg_type: "chain_rows",
    body: { rows: lines, from: 0 },
  });
}

async function refreshUsers(): Promise<void> {
  const token = sessionStorage.getItem(TOKEN_KEY);
  if (!caApi || !token) return;
  users = (await caApi.users(token)) as never[];
  expertChoices = users
    .filter((user) => user.role === "Expert")
    .map((user) => ({
      certId: (user as never as { active_cert_id: number }).active_cert_id,
      label: user.username,
    }));
  render();
}

function connectChannel(): void {
  if (!nodeApi || !identity) return;
  socket = openChannel(nodeApi.baseUrl, identity, state.chainLines.length, {
    onMessage: dispatch,
    onOpen: () => {
      if (state.session) state.session.nodeConnected = true;
      render();
    },
    onClose: () => {
      if (state.session) state.session.nodeConnected = false;
      render();
    },
  });
}

async function startWithIdentity(text: string): Promise<void> {
  identity = parseIdentity(text);
  sessionStorage.setItem(IDENTITY_KEY, text);
  const role = certificateRole(identity.certificate) as RoleName;
  state.session = {
    role,
    certId: identity.cert_id,
    token: sessionStorage.getItem(TOKEN_KEY),
    nodeConnected: false,
    caConnected: caApi !== null,
  };
  await refreshDocuments().catch(surface);
  await refreshChain().catch(surface);
  connectChannel();
  render();
}

async function loginCaAdmin(username: string, password: string): Promise<void> {
  if (!caApi) return;
  const response = await caApi.login(username, password);
  sessionStorage.setItem(TOKEN_KEY, String(response.token));
  state.session = {
    role: String(response.role) as RoleName,
    certId: Number(response.active_cert_id ?? 0),
    token: String(response.token),
    nodeConnected: false,
    caConnected: true,
  };
  await refreshUsers().catch(surface);
  render();
}

function renderLogin(): HTMLElement {
  const identityInput = el("input", { type: "file" }) as HTMLInputElement;
  identityInput.onchange = () => {
    const file = identityInput.files?.[0];
    if (file) file.text().then(startWithIdentity).catch(surface);
  };
  const username = el("input", { placeholder: "username" }) as HTMLInputElement;
  const password = el("input", {
    placeholder: "password", type: "password",
  }) as HTMLInputElement;
  const loginButton = el("button", {}, ["Log in to the authority"]);
  loginButton.onclick = () =>
    loginCaAdmin(username.value, password.value).catch(surface);
  return el("main", { class: "login" }, [
    el("h1", {}, ["Archive chain"]),
    el("section", {}, [
      el("h2", {}, ["Participants: load your identity file"]),
      identityInput,
    ]),
    el("section", {}, [
      el("h2", {}, ["Authority administrator: password login"]),
      username, password, loginButton,
    ]),
  ]);
}

function render(): void {
  const root = document.getElementById("app");
  if (!root) return;
  root.replaceChildren();
  root.append(renderAlarms(state));
  if (!state.session) {
    root.append(renderLogin());
    return;
  }
  const bar = el("nav", {}, [
    el("span", {}, [
      `${state.session.role} · certificate ${state.session.certId} · ` +
        (state.session.nodeConnected ? "live" : "offline"),
    ]),
  ]);
  const logout = el("button", {}, ["Log out"]);
  logout.onclick = actions.logout;
  bar.append(logout);
  root.append(bar);
  root.append(renderDashboard(state, Date.now(), actions, expertChoices, users));
  if (state.session.role !== "UnconfirmedUser" && state.chainLines.length > 0) {
    root.append(renderChainExplorer(verifyRows(state.chainLines)));
  }
}

function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const nodeUrl = params.get("node") ?? window.location.origin;
  const caUrl = params.get("ca") ?? "http://127.0.0.1:8600";
  nodeApi = new NodeApi(nodeUrl);
  caApi = new CaApi(caUrl);
  const saved = sessionStorage.getItem(IDENTITY_KEY);
  if (saved) startWithIdentity(saved).catch(surface);
  else render();
  // countdown badges tick once a second
  setInterval(() => {
    if (state.session) render();
  }, 1000);
}

boot();
