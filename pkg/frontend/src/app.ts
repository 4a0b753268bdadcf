/** Page controller: settings pane, summary loading, and the Q&A panel.
 * Single-user page state; at most one request in flight at a time. */

import { ApiError, ask, summarize } from "./api.js";
import type { ClientSettings } from "./api.js";
import { renderError, renderSummary, renderTranscriptEntry } from "./render.js";

export interface AppConfig {
  baseUrl?: string;
  apiKey?: string;
  /** Governance switch: hides the Q&A panel entirely. */
  disableQa?: boolean;
}

interface AppState {
  settings: ClientSettings;
  patientId: string;
  loaded: boolean;
  busy: boolean;
}

const SETTINGS_KEY = "ehrsum.settings";

function loadStoredSettings(win: Window): Partial<ClientSettings> {
  try {
    const raw = win.localStorage.getItem(SETTINGS_KEY);
    return raw ? (JSON.parse(raw) as Partial<ClientSettings>) : {};
  } catch {
    return {};
  }
}

export function createApp(win: Window, root: HTMLElement, config: AppConfig = {}): {
  loadSummary(patientId: string): Promise<void>;
  askQuestion(question: string): Promise<void>;
  elements: { summary: HTMLElement; qa: HTMLElement; settings: HTMLElement; status: HTMLElement };
} {
  const doc = win.document;
  const stored = loadStoredSettings(win);
  const state: AppState = {
    settings: {
      baseUrl: config.baseUrl ?? stored.baseUrl ?? "http://127.0.0.1:8000",
      apiKey: config.apiKey ?? stored.apiKey ?? "",
    },
    patientId: "",
    loaded: false,
    busy: false,
  };

  root.innerHTML = "";
  const settingsPane = doc.createElement("form");
  settingsPane.className = "settings-pane";
  settingsPane.innerHTML = `
    <label>Service URL <input name="baseUrl" type="url" required></label>
    <label>API key <input name="apiKey" type="password" required></label>
    <label>Patient id <input name="patientId" type="text" required></label>
    <button type="submit" class="load-button">Load summary</button>
  `;
  const statusArea = doc.createElement("div");
  statusArea.className = "status-area";
  const summaryArea = doc.createElement("div");
  summaryArea.className = "summary-area";
  const qaPane = doc.createElement("div");
  qaPane.className = "qa-pane";
  if (!config.disableQa) {
    qaPane.innerHTML = `
      <form class="qa-form">
        <input name="question" type="text" placeholder="Ask about this summary…">
        <button type="submit" class="ask-button" disabled>Ask</button>
      </form>
      <div class="qa-transcript"></div>
    `;
  }
  root.append(settingsPane, statusArea, summaryArea, qaPane);

  const input = (form: HTMLElement, name: string) =>
    form.querySelector<HTMLInputElement>(`input[name="${name}"]`)!;
  input(settingsPane, "baseUrl").value = state.settings.baseUrl;
  input(settingsPane, "apiKey").value = state.settings.apiKey;

  function persistSettings(): void {
    try {
      win.localStorage.setItem(SETTINGS_KEY, JSON.stringify(state.settings));
    } catch {
      /* storage unavailable: settings live for the session only */
    }
  }

  function setStatus(node: HTMLElement | null): void {
    statusArea.innerHTML = "";
    if (node) statusArea.appendChild(node);
  }

  function syncAskButton(): void {
    const form = qaPane.querySelector<HTMLFormElement>(".qa-form");
    if (!form) return;
    const button = form.querySelector<HTMLButtonElement>(".ask-button")!;
    const question = input(form, "question").value.trim();
    button.disabled = !state.loaded || state.busy || question.length === 0;
  }

  async function loadSummary(patientId: string): Promise<void> {
    if (state.busy) return;
    state.busy = true;
    state.patientId = patientId;
    setStatus(null);
    syncAskButton();
    try {
      const summary = await summarize(state.settings, patientId);
      summaryArea.innerHTML = "";
      summaryArea.appendChild(renderSummary(doc, summary));
      state.loaded = true;
    } catch (err) {
      const apiErr = err instanceof ApiError ? err : new ApiError(0, String(err));
      const retry = apiErr.status === 0 ? () => void loadSummary(patientId) : undefined;
      setStatus(renderError(doc, apiErr.message, retry));
      if (apiErr.status === 401) {
        input(settingsPane, "apiKey").focus();
      }
    } finally {
      state.busy = false;
      syncAskButton();
    }
  }

  async function askQuestion(question: string): Promise<void> {
    if (state.busy || !state.loaded || !question.trim()) return;
    state.busy = true;
    syncAskButton();
    try {
      const answer = await ask(state.settings, state.patientId, question);
      const transcript = qaPane.querySelector<HTMLElement>(".qa-transcript");
      transcript?.prepend(renderTranscriptEntry(doc, question, answer, new Date()));
    } catch (err) {
      const apiErr = err instanceof ApiError ? err : new ApiError(0, String(err));
      setStatus(renderError(doc, apiErr.message));
    } finally {
      state.busy = false;
      syncAskButton();
    }
  }

  settingsPane.addEventListener("submit", (event) => {
    event.preventDefault();
    state.settings = {
      baseUrl: input(settingsPane, "baseUrl").value.trim(),
      apiKey: input(settingsPane, "apiKey").value,
    };
    persistSettings();
    void loadSummary(input(settingsPane, "patientId").value.trim());
  });

  const qaForm = qaPane.querySelector<HTMLFormElement>(".qa-form");
  if (qaForm) {
    input(qaForm, "question").addEventListener("input", syncAskButton);
    qaForm.addEventListener("submit", (event) => {
      event.preventDefault();
      const field = input(qaForm, "question");
      const question = field.value.trim();
      field.value = "";
      void askQuestion(question);
    });
  }

  return {
    loadSummary,
    askQuestion,
    elements: { summary: summaryArea, qa: qaPane, settings: settingsPane, status: statusArea },
  };
}
