/** Thin typed client for the session endpoints. */

import { Diagnostic, PlayEvent, SchemaDoc } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
    public readonly diagnostics: Diagnostic[] = [],
  ) {
    super(message);
  }
}

async function fail(response: Response): Promise<never> {
  let code = "http-error";
  let message = `HTTP ${response.status}`;
  let diagnostics: Diagnostic[] = [];
  try {
    const body = await response.json();
    code = body.code ?? code;
    message = body.message ?? message;
    diagnostics = body.diagnostics ?? [];
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, code, message, diagnostics);
}

export interface CreatedSession {
  sessionId: string;
  events: PlayEvent[];
}

export class Api {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  async createSession(body: {
    schema?: SchemaDoc;
    schema_id?: string;
    config?: Record<string, number>;
  }): Promise<CreatedSession> {
    const response = await this.fetchImpl(`${this.baseUrl}/v1/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (response.status !== 201) await fail(response);
    const created = await response.json();
    return { sessionId: created.session_id, events: created.events };
  }

  async postInput(
    sessionId: string,
    input: { actions: string | null; dialogue: string | null },
  ): Promise<void> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/v1/sessions/${sessionId}/input`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(input),
      },
    );
    if (response.status !== 202) await fail(response);
  }

  async getState(sessionId: string): Promise<Record<string, unknown>> {
    const response = await this.fetchImpl(`${this.baseUrl}/v1/sessions/${sessionId}`);
    if (!response.ok) await fail(response);
    return response.json();
  }

  eventsUrl(sessionId: string): string {
    return `${this.baseUrl}/v1/sessions/${sessionId}/events`;
  }
}
