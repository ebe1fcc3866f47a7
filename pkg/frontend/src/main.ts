import { ApiClient } from "./api";
import { buildChatView, renderResponse, renderTurn } from "./chat";
import { pollJob } from "./poll";
import { buildReviewView } from "./review";

const api = new ApiClient("");

function statusLine(text: string): void {
  const node = document.getElementById("status");
  if (node) node.textContent = text;
}

async function startChat(root: HTMLElement): Promise<void> {
  let sessionId: string | null = null;
  const view = buildChatView(root, async (question) => {
    view.send.disabled = true; // one in-flight turn per session
    try {
      if (sessionId === null) {
        sessionId = (await api.createSession()).id;
        statusLine(`session ${sessionId}`);
      }
      const user = document.createElement("div");
      user.className = "user-turn";
      user.textContent = question;
      view.log.appendChild(user);
      const response = await api.ask(sessionId, question);
      await renderResponse(view.log, response, (u) => api.artifactUrl(u));
      if (response.status === "clarification_needed") {
        view.input.focus();
      }
    } catch (error) {
      statusLine(String(error));
    } finally {
      view.send.disabled = false;
      view.log.scrollTop = view.log.scrollHeight;
    }
  });

  // restore an existing conversation when the page reloads mid-session
  const params = new URLSearchParams(window.location.search);
  const existing = params.get("session");
  if (existing) {
    sessionId = existing;
    for (const turn of await api.history(existing)) {
      await renderTurn(view.log, turn, (u) => api.artifactUrl(u));
    }
  }
}

async function startReview(root: HTMLElement): Promise<void> {
  const { candidates } = await api.candidates();
  if (candidates.length === 0) {
    root.textContent =
      "No candidate topics yet; run topic modeling round one first.";
    return;
  }
  buildReviewView(root, candidates, async (decisions) => {
    statusLine("submitting review…");
    try {
      const result = await api.submitReview(decisions, true);
      statusLine(
        `review applied: ${result.accepted.length} accepted,` +
          ` ${result.refined.length} refined topics; starting round two…`,
      );
      const { job_id } = await api.startRoundTwo();
      const job = await pollJob(api, job_id, (j) =>
        statusLine(`round two ${j.status}: ${(j.progress * 100).toFixed(0)}%`),
      );
      statusLine(
        job.status === "done"
          ? "round two finished"
          : `round two ${job.status}: ${job.error ?? ""}`,
      );
    } catch (error) {
      statusLine(String(error));
    }
  });
}

function activate(tab: string): void {
  document.querySelectorAll<HTMLElement>(".view").forEach((v) => {
    v.style.display = v.id === `view-${tab}` ? "block" : "none";
  });
}

export function boot(): void {
  const chatRoot = document.getElementById("view-chat");
  const reviewRoot = document.getElementById("view-review");
  if (!chatRoot || !reviewRoot) return;
  void startChat(chatRoot);
  document.getElementById("tab-chat")?.addEventListener("click", () => activate("chat"));
  document.getElementById("tab-review")?.addEventListener("click", () => {
    activate("review");
    void startReview(reviewRoot);
  });
  activate("chat");
}

if (typeof document !== "undefined" && document.getElementById("view-chat")) {
  boot();
}
