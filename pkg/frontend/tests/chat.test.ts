import { beforeEach, describe, expect, it, vi } from "vitest";

import { buildChatView, renderResponse, renderTurn } from "../src/chat";
import { parseCsv } from "../src/csv";
import type { AgentResponse } from "../src/types";

const FIXTURE: AgentResponse = {
  text: "The most frequent topic is bug; details attached.",
  status: "answered",
  artifacts: [
    { kind: "table", path: "topic_counts.csv", url: "/artifacts/tok1", caption: "" },
    { kind: "image", path: "issue_river.png", url: "/artifacts/tok2", caption: "top topics" },
    { kind: "hologram", path: "weird.bin", url: "/artifacts/tok3", caption: "" },
  ],
  code_shown: "counts = df['topics'].value_counts()\ncounts",
};

beforeEach(() => {
  document.body.innerHTML = "";
  vi.restoreAllMocks();
});

function mockFetchCsv(body: string): void {
  vi.stubGlobal(
    "fetch",
    vi.fn(async () => new Response(body, { status: 200 })),
  );
}

describe("chat response rendering", () => {
  it("renders table, image and code from a fixture response", async () => {
    mockFetchCsv("topic,count\r\nbug,4\r\nui,2\r\n");
    const container = document.createElement("div");
    document.body.appendChild(container);
    await renderResponse(container, FIXTURE);

    const grid = container.querySelector("table.data-grid");
    expect(grid).not.toBeNull();
    const headers = [...grid!.querySelectorAll("th")].map((n) => n.textContent);
    expect(headers).toEqual(["topic", "count"]);
    expect(grid!.querySelectorAll("tr")).toHaveLength(3);

    const img = container.querySelector<HTMLImageElement>(".artifact-image img");
    expect(img).not.toBeNull();
    expect(img!.getAttribute("src")).toBe("/artifacts/tok2");
    expect(img!.getAttribute("alt")).toBe("top topics");

    const code = container.querySelector(".code-block code");
    expect(code).not.toBeNull();
    expect(code!.textContent).toContain("value_counts");

    const badge = container.querySelector(".badge");
    expect(badge!.textContent).toBe("answered");
  });

  it("shows an explicit placeholder for unsupported artifact kinds", async () => {
    mockFetchCsv("a,b\r\n1,2\r\n");
    const container = document.createElement("div");
    await renderResponse(container, FIXTURE);
    const placeholder = container.querySelector(".artifact-unsupported");
    expect(placeholder).not.toBeNull();
    expect(placeholder!.textContent).toContain("hologram");
    expect(placeholder!.textContent).toContain("weird.bin");
  });

  it("renders a clarification turn as an inline prompt", async () => {
    const container = document.createElement("div");
    await renderResponse(container, {
      text: "Which month do you mean?",
      status: "clarification_needed",
      artifacts: [],
      code_shown: null,
    });
    const prompt = container.querySelector(".clarification-prompt");
    expect(prompt).not.toBeNull();
    expect(prompt!.textContent).toBe("Which month do you mean?");
  });

  it("marks failed turns with an error badge and diagnostic", async () => {
    const container = document.createElement("div");
    await renderResponse(container, {
      text: "The replan budget is exhausted",
      status: "failed",
      artifacts: [],
      code_shown: null,
    });
    const bubble = container.querySelector(".agent-response");
    expect(bubble!.className).toContain("status-failed");
    expect(bubble!.textContent).toContain("replan budget");
  });

  it("renders history turns as user + response pairs", async () => {
    const container = document.createElement("div");
    await renderTurn(container, {
      user: "How many rows?",
      response: { text: "10 rows.", status: "answered", artifacts: [], code_shown: null },
    });
    expect(container.querySelector(".user-turn")!.textContent).toBe("How many rows?");
    expect(container.querySelector(".response-text")!.textContent).toBe("10 rows.");
  });
});

describe("chat input", () => {
  it("submits trimmed questions and ignores empty input", () => {
    const root = document.createElement("div");
    const seen: string[] = [];
    const view = buildChatView(root, (q) => seen.push(q));
    view.input.value = "  What changed in April?  ";
    view.root.querySelector("form")!.dispatchEvent(new Event("submit"));
    view.input.value = "   ";
    view.root.querySelector("form")!.dispatchEvent(new Event("submit"));
    expect(seen).toEqual(["What changed in April?"]);
  });
});

describe("csv parsing", () => {
  it("handles quotes, embedded commas and newlines", () => {
    const rows = parseCsv('a,b\r\n"x, y","line1\nline2"\r\n"he said ""hi""",z\r\n');
    expect(rows).toEqual([
      ["a", "b"],
      ["x, y", "line1\nline2"],
      ['he said "hi"', "z"],
    ]);
  });
});
