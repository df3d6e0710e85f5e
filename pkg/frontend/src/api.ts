import { ApiErrorBody, TurnPayload } from "./types";

/** Error carrying the server's structured code alongside the HTTP status. */
export class ServerError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ServerError";
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let code = "unknown_error";
  let message = `request failed with status ${response.status}`;
  try {
    const body = (await response.json()) as ApiErrorBody;
    if (body.error) {
      code = body.error.code;
      message = body.error.message;
    }
  } catch {
    // non-JSON error body; keep the generic message
  }
  throw new ServerError(response.status, code, message);
}

/** Thin typed client for the gpt-acn session API. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  async createSession(): Promise<string> {
    const r = await this.fetchFn(`${this.baseUrl}/session`, { method: "POST" });
    await raiseForStatus(r);
    const body = (await r.json()) as { session_id: string };
    return body.session_id;
  }

  async sendMessage(sessionId: string, text: string): Promise<TurnPayload> {
    const r = await this.fetchFn(`${this.baseUrl}/session/${sessionId}/message`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
    await raiseForStatus(r);
    return (await r.json()) as TurnPayload;
  }

  async getHistory(sessionId: string): Promise<TurnPayload[]> {
    const r = await this.fetchFn(`${this.baseUrl}/session/${sessionId}/history`);
    await raiseForStatus(r);
    const body = (await r.json()) as { turns: TurnPayload[] };
    return body.turns;
  }

  async deleteSession(sessionId: string): Promise<void> {
    const r = await this.fetchFn(`${this.baseUrl}/session/${sessionId}`, {
      method: "DELETE",
    });
    await raiseForStatus(r);
  }
}
