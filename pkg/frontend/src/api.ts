/** Thin typed client for the service HTTP/JSON endpoints. */

import type { AskResponse, SummaryDocument } from "./types.js";

export interface ClientSettings {
  baseUrl: string;
  apiKey: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function post<T>(settings: ClientSettings, path: string, body: unknown): Promise<T> {
  let response: Response;
  try {
    response = await fetch(`${settings.baseUrl.replace(/\/$/, "")}${path}`, {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        Authorization: `Bearer ${settings.apiKey}`,
      },
      body: JSON.stringify(body),
    });
  } catch {
    throw new ApiError(0, "Could not reach the summarization service");
  }
  let payload: unknown = null;
  try {
    payload = await response.json();
  } catch {
    /* non-JSON body: fall through to the generic message */
  }
  if (!response.ok) {
    const message =
      payload && typeof payload === "object" && "message" in payload
        ? String((payload as { message: unknown }).message)
        : `Request failed (${response.status})`;
    throw new ApiError(response.status, message);
  }
  return payload as T;
}

export function summarize(settings: ClientSettings, patientId: string): Promise<SummaryDocument> {
  return post<SummaryDocument>(settings, "/summarize", { patient_id: patientId });
}

export function ask(
  settings: ClientSettings,
  patientId: string,
  question: string,
): Promise<AskResponse> {
  return post<AskResponse>(settings, "/ask", { patient_id: patientId, question });
}

export async function health(settings: ClientSettings): Promise<boolean> {
  try {
    const response = await fetch(`${settings.baseUrl.replace(/\/$/, "")}/health`);
    return response.ok;
  } catch {
    return false;
  }
}
