/**
 * Typed client for the emvkit service. Every fetch keeps the raw response
 * text alongside the parsed payload so exports can ship the bytes exactly as
 * served, with no re-serialization on the client.
 */

import { DecompositionPayload, MacroFitPayload, SessionDiagnostics } from "./types.js";
import { ConstraintParams } from "./state.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

export interface Served<T> {
  payload: T;
  rawText: string;
}

export function decompositionUrl(
  base: string,
  sessionId: string,
  c: ConstraintParams,
  format: "json" | "csv" = "json",
): string {
  const params = new URLSearchParams({ kind: c.kind, format });
  if (c.kind === "maturity-slope") {
    params.set("k", String(c.k));
    params.set("a_star", String(c.aStar));
  } else if (c.kind === "vintage-trend-zero") {
    params.set("window", String(c.window));
  }
  return `${base}/sessions/${encodeURIComponent(sessionId)}/${"decomposition"}?${params.toString()}`;
}

export function sweepUrl(base: string, sessionId: string, ks: number[], aStar: number): string {
  const params = new URLSearchParams({ ks: ks.join(","), a_star: String(aStar) });
  return `${base}/sessions/${encodeURIComponent(sessionId)}/sweep?${params.toString()}`;
}

async function request<T>(url: string, init?: RequestInit): Promise<Served<T>> {
  const res = await fetch(url, init);
  const rawText = await res.text();
  if (!res.ok) {
    let message = `HTTP ${res.status}`;
    try {
      const body = JSON.parse(rawText) as { error?: string };
      if (body.error) message = body.error;
    } catch {
      /* non-JSON error body: keep the status line */
    }
    throw new ApiError(message, res.status);
  }
  return { payload: JSON.parse(rawText) as T, rawText };
}

export class EmvkitClient {
  constructor(private readonly base: string = "") {}

  async uploadPanel(csv: string, transform = "identity"): Promise<SessionDiagnostics> {
    const { payload } = await request<SessionDiagnostics>(
      `${this.base}/sessions?transform=${encodeURIComponent(transform)}`,
      { method: "POST", headers: { "content-type": "text/csv" }, body: csv },
    );
    return payload;
  }

  async uploadMacro(sessionId: string, csv: string): Promise<void> {
    await request(`${this.base}/sessions/${encodeURIComponent(sessionId)}/macro`, {
      method: "POST",
      headers: { "content-type": "text/csv" },
      body: csv,
    });
  }

  async fetchDecomposition(
    sessionId: string,
    c: ConstraintParams,
    signal?: AbortSignal,
  ): Promise<Served<DecompositionPayload>> {
    return request<DecompositionPayload>(decompositionUrl(this.base, sessionId, c), { signal });
  }

  /** CSV twin of the displayed decomposition, byte-identical to the CLI output. */
  async fetchDecompositionCsv(sessionId: string, c: ConstraintParams): Promise<string> {
    const res = await fetch(decompositionUrl(this.base, sessionId, c, "csv"));
    if (!res.ok) throw new ApiError(`HTTP ${res.status}`, res.status);
    return res.text();
  }

  async fetchMacroFit(sessionId: string): Promise<Served<MacroFitPayload>> {
    return request<MacroFitPayload>(`${this.base}/sessions/${encodeURIComponent(sessionId)}/macro-fit`);
  }

  async sessionInfo(sessionId: string): Promise<SessionDiagnostics> {
    const { payload } = await request<SessionDiagnostics>(
      `${this.base}/sessions/${encodeURIComponent(sessionId)}`,
    );
    return payload;
  }
}
