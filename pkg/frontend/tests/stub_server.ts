import { TurnPayload } from "../src/types";

/** In-memory stand-in for `gpt-acn serve`, exposed as a fetch function.
 *
 * Mirrors the real API's contract: session lifecycle, per-session
 * transcripts, structured error bodies, and one in-flight message per
 * session (409 busy).  `respond` supplies the payload for each message so
 * tests control what the "model" says.
 */
export class StubServer {
  sessions = new Map<string, TurnPayload[]>();
  busy = new Set<string>();
  requestLog: string[] = [];
  private nextId = 1;

  constructor(
    private readonly respond: (text: string) => TurnPayload | Promise<TurnPayload>,
  ) {}

  readonly fetch: typeof fetch = async (input, init) => {
    const url = String(input);
    const method = init?.method ?? "GET";
    this.requestLog.push(`${method} ${url}`);

    if (method === "POST" && url.endsWith("/session")) {
      const id = `s${this.nextId++}`;
      this.sessions.set(id, []);
      return json(200, { session_id: id });
    }

    const message = url.match(/\/session\/([^/]+)\/message$/);
    if (method === "POST" && message) {
      const id = message[1];
      const transcript = this.sessions.get(id);
      if (!transcript) return error(404, "session_not_found", `no session ${id}`);
      const body = JSON.parse(String(init?.body ?? "{}")) as { text?: string };
      if (typeof body.text !== "string" || body.text.trim() === "") {
        return error(400, "malformed_body", "body must be {\"text\": ...}");
      }
      if (this.busy.has(id)) {
        return error(409, "busy", "a message for this session is already in flight");
      }
      this.busy.add(id);
      try {
        const turn = await this.respond(body.text);
        transcript.push(turn);
        return json(200, turn);
      } finally {
        this.busy.delete(id);
      }
    }

    const history = url.match(/\/session\/([^/]+)\/history$/);
    if (method === "GET" && history) {
      const transcript = this.sessions.get(history[1]);
      if (!transcript) return error(404, "session_not_found", `no session ${history[1]}`);
      return json(200, { turns: transcript });
    }

    const session = url.match(/\/session\/([^/]+)$/);
    if (method === "DELETE" && session) {
      if (!this.sessions.delete(session[1])) {
        return error(404, "session_not_found", `no session ${session[1]}`);
      }
      return json(200, { deleted: true });
    }

    return error(404, "unknown_route", `${method} ${url}`);
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function error(status: number, code: string, message: string): Response {
  return json(status, { error: { code, message } });
}
