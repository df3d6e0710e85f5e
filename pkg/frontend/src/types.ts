/** Shapes of the JSON HTTP API exposed by `gpt-acn serve`. */

/** Per-token generation diagnostics for the response line. */
export interface TurnDiagnostics {
  /** Copy-gate value g_c per generated token, in [0, 1]. */
  gate: number[];
  /** g_c times the copy mass of the emitted token: how much of the token's
   *  probability came from pointing at the context. */
  copy_share: number[];
  /** Decoded text of each generated token, when the server provides it. */
  tokens?: string[];
}

/** One completed exchange as returned by POST /session/{id}/message. */
export interface TurnPayload {
  user: string;
  /** domain -> slot -> value */
  belief: Record<string, Record<string, string>>;
  db: { count: number; records: Record<string, string>[] };
  /** [domain, act type, slot, value] per dialogue act */
  action: [string, string, string, string][];
  response: string;
  diagnostics?: TurnDiagnostics;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}
