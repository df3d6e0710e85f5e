import { describe, expect, it } from "vitest";

import { COPY_HIGHLIGHT_THRESHOLD, renderTurn } from "../src/render";
import { TurnPayload } from "../src/types";
import recorded from "./fixture_message.json";

const fixture = recorded as TurnPayload;

describe("renderTurn on a recorded /message payload", () => {
  it("matches the golden DOM snapshot", () => {
    const el = renderTurn(fixture, document);
    expect(el.outerHTML).toMatchSnapshot();
  });

  it("renders one belief row per slot, in order", () => {
    const el = renderTurn(fixture, document);
    const rows = [...el.querySelectorAll(".belief tbody tr")].map((row) =>
      [...row.children].map((cell) => cell.textContent),
    );
    const expected: string[][] = [];
    for (const domain of Object.keys(fixture.belief).sort()) {
      for (const slot of Object.keys(fixture.belief[domain]).sort()) {
        expected.push([domain, slot, fixture.belief[domain][slot]]);
      }
    }
    expect(rows).toEqual(expected);
  });

  it("shows the db count and at most three records", () => {
    const el = renderTurn(fixture, document);
    expect(el.querySelector(".db-count")?.textContent).toBe(
      `${fixture.db.count} matches`,
    );
    const items = el.querySelectorAll(".db-records li:not(.db-more)");
    expect(items.length).toBe(Math.min(3, fixture.db.records.length));
  });

  it("lists every dialogue act", () => {
    const el = renderTurn(fixture, document);
    const items = [...el.querySelectorAll(".actions li")].map(
      (li) => li.textContent,
    );
    expect(items).toEqual(
      fixture.action.map((act) => act.filter((p) => p !== "").join(" ")),
    );
  });

  it("reassembles the response text from diagnostic tokens", () => {
    const el = renderTurn(fixture, document);
    const text = el.querySelector(".response-text")?.textContent ?? "";
    expect(text).toContain(fixture.response);
  });
});

describe("copy highlighting", () => {
  const base: TurnPayload = {
    user: "hi",
    belief: {},
    db: { count: 0, records: [] },
    action: [],
    response: "alpha beta",
    diagnostics: {
      gate: [0.9, 0.2],
      copy_share: [0.9, 0.1],
      tokens: ["alpha ", "beta"],
    },
  };

  it("highlights tokens above the threshold and only those", () => {
    const el = renderTurn(base, document);
    const tokens = [...el.querySelectorAll(".tok")];
    expect(tokens.map((t) => t.classList.contains("copied"))).toEqual([
      true,
      false,
    ]);
  });

  it("treats the threshold itself as not copied", () => {
    const turn: TurnPayload = {
      ...base,
      diagnostics: {
        gate: [0.5],
        copy_share: [COPY_HIGHLIGHT_THRESHOLD],
        tokens: ["alpha"],
      },
    };
    const el = renderTurn(turn, document);
    expect(el.querySelector(".tok.copied")).toBeNull();
  });

  it("degrades to a plain transcript without diagnostics", () => {
    const turn: TurnPayload = { ...base, diagnostics: undefined };
    const el = renderTurn(turn, document);
    expect(el.querySelector(".tok")).toBeNull();
    expect(el.querySelector(".response-text")?.textContent).toBe("alpha beta");
  });

  it("ignores diagnostics whose arrays disagree in length", () => {
    const turn: TurnPayload = {
      ...base,
      diagnostics: { gate: [0.9], copy_share: [0.9, 0.1], tokens: ["alpha "] },
    };
    const el = renderTurn(turn, document);
    expect(el.querySelector(".tok")).toBeNull();
    expect(el.querySelector(".response-text")?.textContent).toBe("alpha beta");
  });

  it("renders an empty belief and missing action gracefully", () => {
    const el = renderTurn({ ...base, diagnostics: undefined }, document);
    expect(el.querySelector(".belief-empty")?.textContent).toBe("belief: none");
    expect(el.querySelector(".actions-empty")?.textContent).toBe("no action");
  });
});
