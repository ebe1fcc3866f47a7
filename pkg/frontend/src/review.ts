import type { Decision, TopicCandidate } from "./types";

export interface ReviewView {
  root: HTMLElement;
  submit: HTMLButtonElement;
  /** Current decision document; complete only when every row decided. */
  decisions(): Record<string, Decision> | null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** The review table: one row per candidate with an accept / reject /
 * rename control. Submit stays disabled until every row has a decision;
 * the submitted document is exactly {topic: "accept"|"reject"|"rename:X"}. */
export function buildReviewView(
  root: HTMLElement,
  candidates: TopicCandidate[],
  onSubmit: (decisions: Record<string, Decision>) => void,
): ReviewView {
  root.innerHTML = "";
  const table = el("table", "review-table");
  const head = el("tr");
  for (const title of ["topic", "count", "origin", "decision", "rename to"]) {
    head.appendChild(el("th", undefined, title));
  }
  table.appendChild(head);

  interface RowControl {
    candidate: TopicCandidate;
    select: HTMLSelectElement;
    rename: HTMLInputElement;
  }
  const rows: RowControl[] = [];

  const otherPhrases = el("datalist");
  otherPhrases.id = "review-phrases";
  for (const candidate of candidates) {
    const option = el("option");
    option.setAttribute("value", candidate.display);
    otherPhrases.appendChild(option);
  }

  for (const candidate of candidates) {
    const tr = el("tr", "review-row");
    tr.dataset.topic = candidate.normalized;
    tr.appendChild(el("td", "phrase", candidate.display));
    tr.appendChild(el("td", "count", String(candidate.count)));
    tr.appendChild(el("td", "origin", candidate.origin));

    const select = el("select", "decision");
    for (const [value, label] of [
      ["", "choose…"],
      ["accept", "accept"],
      ["reject", "reject"],
      ["rename", "rename / merge into"],
    ]) {
      const option = el("option", undefined, label);
      option.setAttribute("value", value);
      select.appendChild(option);
    }
    const selectCell = el("td");
    selectCell.appendChild(select);
    tr.appendChild(selectCell);

    const rename = el("input", "rename-input");
    rename.setAttribute("type", "text");
    rename.setAttribute("list", "review-phrases");
    rename.disabled = true;
    const renameCell = el("td");
    renameCell.appendChild(rename);
    tr.appendChild(renameCell);

    select.addEventListener("change", () => {
      rename.disabled = select.value !== "rename";
      refresh();
    });
    rename.addEventListener("input", refresh);

    rows.push({ candidate, select, rename });
    table.appendChild(tr);
  }

  const submit = el("button", "review-submit", "Submit review");
  submit.setAttribute("type", "button");
  submit.disabled = true;

  function collect(): Record<string, Decision> | null {
    const decisions: Record<string, Decision> = {};
    for (const { candidate, select, rename } of rows) {
      if (select.value === "accept" || select.value === "reject") {
        decisions[candidate.normalized] = select.value;
      } else if (select.value === "rename") {
        const target = rename.value.trim();
        if (!target) return null;
        decisions[candidate.normalized] = `rename:${target}`;
      } else {
        return null;
      }
    }
    return decisions;
  }

  function refresh(): void {
    submit.disabled = collect() === null;
  }

  submit.addEventListener("click", () => {
    const decisions = collect();
    if (decisions !== null) onSubmit(decisions);
  });

  root.appendChild(otherPhrases);
  root.appendChild(table);
  root.appendChild(submit);
  return { root, submit, decisions: collect };
}
