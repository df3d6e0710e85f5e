import { TurnPayload } from "./types";

/** A token is shown as copied when this share of its probability mass came
 *  from pointing at the context. */
export const COPY_HIGHLIGHT_THRESHOLD = 0.5;

/** How many database records the summary shows at most. */
export const DB_RECORDS_SHOWN = 3;

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderBelief(doc: Document, belief: TurnPayload["belief"]): HTMLElement {
  const domains = Object.keys(belief).sort();
  if (domains.length === 0) {
    return el(doc, "div", "belief belief-empty", "belief: none");
  }
  const table = el(doc, "table", "belief");
  const head = table.createTHead().insertRow();
  for (const col of ["domain", "slot", "value"]) {
    head.appendChild(el(doc, "th", undefined, col));
  }
  const body = table.createTBody();
  for (const domain of domains) {
    for (const slot of Object.keys(belief[domain]).sort()) {
      const row = body.insertRow();
      row.insertCell().textContent = domain;
      row.insertCell().textContent = slot;
      row.insertCell().textContent = belief[domain][slot];
    }
  }
  return table;
}

function renderDb(doc: Document, db: TurnPayload["db"]): HTMLElement {
  const box = el(doc, "div", "db-summary");
  const n = db.count;
  box.appendChild(el(doc, "span", "db-count", `${n} match${n === 1 ? "" : "es"}`));
  const list = el(doc, "ul", "db-records");
  for (const record of db.records.slice(0, DB_RECORDS_SHOWN)) {
    const parts = Object.entries(record).map(([k, v]) => `${k}: ${v}`);
    list.appendChild(el(doc, "li", undefined, parts.join(", ")));
  }
  if (db.records.length > DB_RECORDS_SHOWN) {
    list.appendChild(el(doc, "li", "db-more",
      `… and ${db.records.length - DB_RECORDS_SHOWN} more`));
  }
  box.appendChild(list);
  return box;
}

function renderActions(doc: Document, action: TurnPayload["action"]): HTMLElement {
  if (action.length === 0) {
    return el(doc, "div", "actions actions-empty", "no action");
  }
  const list = el(doc, "ul", "actions");
  for (const [domain, act, slot, value] of action) {
    const text = [domain, act, slot, value].filter((p) => p !== "").join(" ");
    list.appendChild(el(doc, "li", undefined, text));
  }
  return list;
}

function renderResponse(doc: Document, turn: TurnPayload): HTMLElement {
  const line = el(doc, "div", "response-line");
  line.appendChild(el(doc, "span", "speaker", "system"));
  const d = turn.diagnostics;
  const haveTokens =
    d !== undefined &&
    d.tokens !== undefined &&
    d.tokens.length === d.copy_share.length &&
    d.tokens.length === d.gate.length;
  if (!haveTokens) {
    // no usable per-token diagnostics: degrade to the plain transcript
    line.appendChild(el(doc, "span", "response-text", turn.response));
    return line;
  }
  const text = el(doc, "span", "response-text");
  d.tokens!.forEach((token, i) => {
    const copied = d.copy_share[i] > COPY_HIGHLIGHT_THRESHOLD;
    const span = el(doc, "span", copied ? "tok copied" : "tok", token);
    span.title = `gate ${d.gate[i].toFixed(3)}, copy share ${d.copy_share[i].toFixed(3)}`;
    text.appendChild(span);
  });
  line.appendChild(text);
  return line;
}

/** Render one exchange: user line, pipeline internals, response. */
export function renderTurn(turn: TurnPayload, doc: Document = document): HTMLElement {
  const root = el(doc, "article", "turn");

  const userLine = el(doc, "div", "user-line");
  userLine.appendChild(el(doc, "span", "speaker", "you"));
  userLine.appendChild(el(doc, "span", undefined, turn.user));
  root.appendChild(userLine);

  const pipeline = el(doc, "div", "pipeline");
  pipeline.appendChild(renderBelief(doc, turn.belief));
  pipeline.appendChild(renderDb(doc, turn.db));
  pipeline.appendChild(renderActions(doc, turn.action));
  root.appendChild(pipeline);

  root.appendChild(renderResponse(doc, turn));
  return root;
}
