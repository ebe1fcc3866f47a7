import type { AgentResponse, Artifact, Turn } from "./types";
import { parseCsv } from "./csv";

const KNOWN_KINDS = new Set(["table", "image", "file"]);

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

async function renderTableArtifact(
  container: HTMLElement,
  artifact: Artifact,
  resolveUrl: (url: string) => string,
): Promise<void> {
  const wrapper = el("div", "artifact artifact-table");
  wrapper.dataset.path = artifact.path;
  try {
    const response = await fetch(resolveUrl(artifact.url));
    if (!response.ok) throw new Error(`${response.status}`);
    const rows = parseCsv(await response.text()).slice(0, 51);
    const table = el("table", "data-grid");
    rows.forEach((cells, rowIndex) => {
      const tr = el("tr");
      for (const cell of cells) {
        tr.appendChild(el(rowIndex === 0 ? "th" : "td", undefined, cell));
      }
      table.appendChild(tr);
    });
    wrapper.appendChild(table);
  } catch (error) {
    const link = el("a", "artifact-link", `download ${artifact.path}`);
    link.setAttribute("href", resolveUrl(artifact.url));
    wrapper.appendChild(link);
  }
  if (artifact.caption) wrapper.appendChild(el("figcaption", "caption", artifact.caption));
  container.appendChild(wrapper);
}

function renderImageArtifact(
  container: HTMLElement,
  artifact: Artifact,
  resolveUrl: (url: string) => string,
): void {
  const figure = el("figure", "artifact artifact-image");
  figure.dataset.path = artifact.path;
  const img = el("img");
  img.setAttribute("src", resolveUrl(artifact.url));
  img.setAttribute("alt", artifact.caption || artifact.path);
  figure.appendChild(img);
  if (artifact.caption) figure.appendChild(el("figcaption", "caption", artifact.caption));
  container.appendChild(figure);
}

function renderFileArtifact(
  container: HTMLElement,
  artifact: Artifact,
  resolveUrl: (url: string) => string,
): void {
  const wrapper = el("div", "artifact artifact-file");
  wrapper.dataset.path = artifact.path;
  const link = el("a", "artifact-link", artifact.path);
  link.setAttribute("href", resolveUrl(artifact.url));
  link.setAttribute("download", artifact.path);
  wrapper.appendChild(link);
  container.appendChild(wrapper);
}

export async function renderResponse(
  container: HTMLElement,
  response: AgentResponse,
  resolveUrl: (url: string) => string = (u) => u,
): Promise<HTMLElement> {
  const bubble = el("div", `agent-response status-${response.status}`);
  const badge = el("span", "badge", response.status.replace("_", " "));
  bubble.appendChild(badge);
  bubble.appendChild(el("p", "response-text", response.text));

  if (response.status === "clarification_needed") {
    const prompt = el("div", "clarification-prompt", response.text);
    prompt.setAttribute("role", "note");
    bubble.appendChild(prompt);
  }

  for (const artifact of response.artifacts) {
    if (artifact.kind === "table") {
      await renderTableArtifact(bubble, artifact, resolveUrl);
    } else if (artifact.kind === "image") {
      renderImageArtifact(bubble, artifact, resolveUrl);
    } else if (artifact.kind === "file") {
      renderFileArtifact(bubble, artifact, resolveUrl);
    } else {
      const placeholder = el(
        "div",
        "artifact artifact-unsupported",
        `unsupported artifact kind "${artifact.kind}": ${artifact.path}`,
      );
      placeholder.dataset.path = artifact.path;
      bubble.appendChild(placeholder);
    }
  }

  if (response.code_shown) {
    const details = el("details", "code-block");
    details.appendChild(el("summary", undefined, "show code"));
    const pre = el("pre");
    pre.appendChild(el("code", undefined, response.code_shown));
    details.appendChild(pre);
    bubble.appendChild(details);
  }
  container.appendChild(bubble);
  return bubble;
}

export async function renderTurn(
  container: HTMLElement,
  turn: Turn,
  resolveUrl: (url: string) => string = (u) => u,
): Promise<void> {
  const user = el("div", "user-turn", turn.user);
  container.appendChild(user);
  await renderResponse(container, turn.response, resolveUrl);
}

export interface ChatView {
  root: HTMLElement;
  input: HTMLTextAreaElement;
  send: HTMLButtonElement;
  log: HTMLElement;
}

export function buildChatView(
  root: HTMLElement,
  onSend: (question: string) => void,
): ChatView {
  root.innerHTML = "";
  const log = el("div", "chat-log");
  const form = el("form", "chat-input");
  const input = el("textarea");
  input.setAttribute("placeholder", "Ask about the feedback…");
  const send = el("button", undefined, "Ask");
  send.setAttribute("type", "submit");
  form.appendChild(input);
  form.appendChild(send);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const question = input.value.trim();
    if (!question || send.disabled) return;
    input.value = "";
    onSend(question);
  });
  root.appendChild(log);
  root.appendChild(form);
  return { root, input, send, log };
}
