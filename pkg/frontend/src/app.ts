import { ApiClient, ServerError } from "./api";
import { renderTurn } from "./render";

/** Single-page chat client.
 *
 * The UI is a pure view over the server's session state: every mutation
 * goes through the API, and reloading the transcript from /history is
 * idempotent.  At most one message per session is in flight; the input is
 * disabled while waiting.
 */
export class ChatApp {
  private sessionId: string | null = null;
  private inFlight = false;

  private readonly transcript: HTMLElement;
  private readonly banner: HTMLElement;
  private readonly sessionLabel: HTMLElement;
  private readonly input: HTMLInputElement;
  private readonly sendButton: HTMLButtonElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    const doc = root.ownerDocument;
    root.innerHTML = "";

    const header = doc.createElement("header");
    this.sessionLabel = doc.createElement("span");
    this.sessionLabel.className = "session-id";
    header.appendChild(this.sessionLabel);
    for (const [label, cls, handler] of [
      ["new chat", "new-chat", () => this.newChat()],
      ["reload history", "reload-history", () => this.reloadHistory()],
      ["delete session", "delete-session", () => this.deleteSession()],
    ] as const) {
      const button = doc.createElement("button");
      button.textContent = label;
      button.className = cls;
      button.addEventListener("click", () => void handler());
      header.appendChild(button);
    }
    root.appendChild(header);

    this.banner = doc.createElement("div");
    this.banner.className = "banner";
    this.banner.hidden = true;
    root.appendChild(this.banner);

    this.transcript = doc.createElement("main");
    this.transcript.className = "transcript";
    root.appendChild(this.transcript);

    const form = doc.createElement("form");
    this.input = doc.createElement("input");
    this.input.type = "text";
    this.input.placeholder = "say something…";
    this.sendButton = doc.createElement("button");
    this.sendButton.type = "submit";
    this.sendButton.textContent = "send";
    form.appendChild(this.input);
    form.appendChild(this.sendButton);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.send();
    });
    root.appendChild(form);
  }

  /** Create the first session; call once after construction. */
  async init(): Promise<void> {
    await this.newChat();
  }

  get currentSessionId(): string | null {
    return this.sessionId;
  }

  async newChat(): Promise<void> {
    this.clearBanner();
    try {
      this.sessionId = await this.api.createSession();
    } catch (error) {
      this.showError(error);
      return;
    }
    this.transcript.innerHTML = "";
    this.sessionLabel.textContent = `session ${this.sessionId}`;
  }

  async send(): Promise<void> {
    const text = this.input.value.trim();
    if (!text || this.sessionId === null || this.inFlight) return;
    this.clearBanner();
    this.setBusy(true);
    try {
      const turn = await this.api.sendMessage(this.sessionId, text);
      this.transcript.appendChild(
        renderTurn(turn, this.root.ownerDocument),
      );
      this.input.value = "";
    } catch (error) {
      this.showError(error);
    } finally {
      this.setBusy(false);
    }
  }

  async reloadHistory(): Promise<void> {
    if (this.sessionId === null) return;
    this.clearBanner();
    try {
      const turns = await this.api.getHistory(this.sessionId);
      this.transcript.innerHTML = "";
      for (const turn of turns) {
        this.transcript.appendChild(renderTurn(turn, this.root.ownerDocument));
      }
    } catch (error) {
      this.showError(error);
    }
  }

  async deleteSession(): Promise<void> {
    if (this.sessionId === null) return;
    this.clearBanner();
    try {
      await this.api.deleteSession(this.sessionId);
    } catch (error) {
      this.showError(error);
    }
  }

  private setBusy(busy: boolean): void {
    this.inFlight = busy;
    this.input.disabled = busy;
    this.sendButton.disabled = busy;
  }

  private showError(error: unknown): void {
    const text =
      error instanceof ServerError
        ? `${error.code}: ${error.message}`
        : `request failed: ${String(error)}`;
    this.banner.textContent = text;
    this.banner.hidden = false;
  }

  private clearBanner(): void {
    this.banner.hidden = true;
    this.banner.textContent = "";
  }
}
