// Application shell: hash router, screen controllers, event delegation.
// All analytical data is fetched from the review service; this file only
// orchestrates calls and re-renders.

import { ApiClient, ApiError } from "./api.js";
import {
  AnnotationSession,
  splitLines,
  type PagerState,
  nextOffset,
  prevOffset,
} from "./state.js";
import type { AnnotationsPayload, CodeItem, ThemeNode } from "./types.js";
import {
  annotateView,
  banner,
  classificationView,
  codesView,
  dashboardView,
  feedbackView,
  loadingView,
  mappingView,
  noticeBanner,
  progressPanel,
  runListView,
  themesView,
} from "./views.js";

const client = new ApiClient("");
const app = document.getElementById("app")!;
const flash = document.getElementById("flash")!;

interface Route {
  runId: string | null;
  screen: string;
}

function parseRoute(hash: string): Route {
  const parts = hash.replace(/^#\/?/, "").split("/").filter(Boolean);
  if (parts[0] === "run" && parts[1]) {
    return { runId: decodeURIComponent(parts[1]), screen: parts[2] ?? "dashboard" };
  }
  return { runId: null, screen: "runs" };
}

// -- per-screen state ---------------------------------------------------------

const PAGE_SIZE = 100;

const codesState = {
  round: undefined as number | undefined,
  offset: 0,
  filter: "",
  compareRound: null as number | null,
  includeText: false,
};

const assignState = { offset: 0, filter: "" };

let annotateRound: number | undefined;
let annotateBlinded = false;
let session: AnnotationSession | null = null;
let poller: { stop: () => void } | null = null;

function showError(err: unknown): void {
  if (err instanceof ApiError) {
    const label = err.unreachable
      ? err.message
      : `${err.status} ${err.code}: ${err.message}`;
    flash.innerHTML = banner(label);
  } else {
    flash.innerHTML = banner(String(err));
  }
}

function clearFlash(): void {
  flash.innerHTML = "";
}

// -- progress polling -----------------------------------------------------------

function startPolling(runId: string): void {
  poller?.stop();
  let cursor = -1;
  let stopped = false;
  const panel = () => document.getElementById("progress-panel");
  const tick = async (): Promise<void> => {
    while (!stopped) {
      try {
        const progress = await client.getProgress(runId, cursor, 20);
        cursor = progress.version;
        const target = panel();
        if (target) target.innerHTML = progressPanel(progress.active);
        if (progress.active?.finished || progress.active?.error) {
          await render();
          return;
        }
        if (!progress.active) return;
      } catch (err) {
        if (err instanceof ApiError && err.unreachable) {
          showError(err);
          return;
        }
        return;
      }
    }
  };
  void tick();
  poller = { stop: () => (stopped = true) };
}

// -- screen renderers --------------------------------------------------------------

async function renderRuns(): Promise<void> {
  const { runs } = await client.listRuns();
  app.innerHTML = runListView(runs);
}

async function renderDashboard(runId: string): Promise<void> {
  const run = await client.getRun(runId);
  app.innerHTML = dashboardView(run);
  const panel = document.getElementById("progress-panel");
  if (panel) panel.innerHTML = progressPanel(run.active_stage);
  if (run.active_stage && !run.active_stage.finished) startPolling(runId);
}

async function renderCodes(runId: string): Promise<void> {
  const page = await client.listCodes(runId, {
    round: codesState.round,
    offset: codesState.offset,
    limit: PAGE_SIZE,
    q: codesState.filter,
    includeText: codesState.includeText,
  });
  codesState.round = page.round;
  let compareWith: CodeItem[] | null = null;
  if (codesState.compareRound !== null && codesState.compareRound !== page.round) {
    const ids = page.items.map((i) => i.id);
    const other = await client.listCodes(runId, {
      round: codesState.compareRound,
      offset: 0,
      limit: Math.max(PAGE_SIZE * 10, 1000),
    });
    const wanted = new Set(ids);
    compareWith = other.items.filter((i) => wanted.has(i.id));
  }
  const pager: PagerState = { offset: page.offset, limit: page.limit, total: page.total };
  app.innerHTML = codesView(runId, {
    page,
    pager,
    filter: codesState.filter,
    compareWith,
    compareRound: codesState.compareRound,
    includeText: codesState.includeText,
  });
}

async function renderFeedback(runId: string): Promise<void> {
  const run = await client.getRun(runId);
  app.innerHTML = feedbackView(runId, run.rounds.length);
}

async function loadAnnotations(runId: string): Promise<AnnotationsPayload | null> {
  try {
    return await client.getAnnotations(runId, annotateRound);
  } catch {
    return null;
  }
}

async function renderAnnotate(runId: string): Promise<void> {
  const codesProbe = await client.listCodes(runId, { round: annotateRound, limit: 1 });
  annotateRound = codesProbe.round;
  const annotations = await loadAnnotations(runId);
  app.innerHTML = annotateView(runId, {
    round: codesProbe.round,
    rounds: codesProbe.rounds.length ? codesProbe.rounds : [codesProbe.round],
    blinded: annotateBlinded,
    running: session !== null,
    current: session?.current ?? null,
    done: session?.progress.done ?? 0,
    total: session?.progress.total ?? 0,
    pendingCount: session?.pendingCount ?? 0,
    annotations,
  });
  document.getElementById("annotate-card")?.focus();
}

async function renderThemes(runId: string): Promise<void> {
  const payload = await client.getThemes(runId);
  app.innerHTML = themesView(runId, payload);
}

async function renderClassification(runId: string): Promise<void> {
  const page = await client.getAssignments(runId, {
    offset: assignState.offset,
    limit: PAGE_SIZE,
    q: assignState.filter,
  });
  let evaluation = null;
  try {
    evaluation = await client.getEvaluation(runId, 3, page.round);
  } catch {
    evaluation = null;
  }
  app.innerHTML = classificationView(runId, {
    page,
    pager: { offset: page.offset, limit: page.limit, total: page.total },
    filter: assignState.filter,
    evaluation,
  });
}

async function renderMapping(runId: string): Promise<void> {
  try {
    const payload = await client.getMapping(runId);
    app.innerHTML = mappingView(runId, payload.flows);
  } catch (err) {
    if (err instanceof ApiError && err.status === 422) {
      app.innerHTML = mappingView(runId, []);
      flash.innerHTML = noticeBanner(err.message);
      return;
    }
    throw err;
  }
}

async function render(): Promise<void> {
  clearFlash();
  const route = parseRoute(location.hash);
  try {
    if (!route.runId) {
      app.innerHTML = loadingView("runs");
      await renderRuns();
      return;
    }
    const runId = route.runId;
    switch (route.screen) {
      case "dashboard":
        await renderDashboard(runId);
        break;
      case "codes":
        await renderCodes(runId);
        break;
      case "feedback":
        await renderFeedback(runId);
        break;
      case "annotate":
        await renderAnnotate(runId);
        break;
      case "themes":
        await renderThemes(runId);
        break;
      case "classification":
        await renderClassification(runId);
        break;
      case "mapping":
        await renderMapping(runId);
        break;
      default:
        await renderDashboard(runId);
    }
  } catch (err) {
    showError(err);
  }
}

// -- actions ------------------------------------------------------------------------

async function flushSession(runId: string): Promise<void> {
  if (!session) return;
  if (session.shouldFlush) {
    const batch = session.drain();
    if (batch.length) await client.postAnnotations(runId, batch);
  }
  if (session.progress.finished) {
    const batch = session.drain();
    if (batch.length) await client.postAnnotations(runId, batch);
    session = null;
    await render();
  }
}

async function startAnnotation(runId: string): Promise<void> {
  const all: CodeItem[] = [];
  let offset = 0;
  for (;;) {
    const page = await client.listCodes(runId, {
      round: annotateRound,
      offset,
      limit: PAGE_SIZE,
    });
    all.push(...page.items);
    offset += PAGE_SIZE;
    if (offset >= page.total) break;
  }
  session = new AnnotationSession(all, annotateBlinded, 10);
  await render();
}

async function handleVerdictKey(runId: string, key: string): Promise<void> {
  if (!session) return;
  if (!session.recordKey(key)) return;
  await flushSession(runId);
  if (session) await render();
}

function collectEditedThemes(): ThemeNode[] | null {
  const tree = document.getElementById("theme-tree");
  if (!tree) return null;
  const labels = [...tree.querySelectorAll<HTMLInputElement>("input.theme-label")];
  const themes: ThemeNode[] = [];
  for (const input of labels) {
    const subs = [...(input.parentElement?.querySelectorAll("li.sub") ?? [])].map(
      (li) => li.textContent ?? "",
    );
    themes.push({ label: input.value.trim(), sub_themes: subs });
  }
  return themes;
}

async function handleAction(runId: string, action: string, el: HTMLElement): Promise<void> {
  switch (action) {
    case "reload":
      await render();
      return;
    case "start-stage": {
      const stage = el.dataset.stage as "code" | "collate" | "merge" | "classify";
      const roundInput = document.getElementById("stage-round") as HTMLInputElement | null;
      const round = roundInput ? Number(roundInput.value) : undefined;
      try {
        await client.startStage(runId, stage, { round });
        startPolling(runId);
        flash.innerHTML = noticeBanner(`${stage} started`);
      } catch (err) {
        showError(err); // 409s (busy, unapproved) surface verbatim here
      }
      return;
    }
    case "codes-prev":
    case "codes-next": {
      const page = await client.listCodes(runId, {
        round: codesState.round,
        offset: codesState.offset,
        limit: PAGE_SIZE,
        q: codesState.filter,
      });
      const pager: PagerState = { offset: page.offset, limit: PAGE_SIZE, total: page.total };
      codesState.offset = action === "codes-next" ? nextOffset(pager) : prevOffset(pager);
      await render();
      return;
    }
    case "assign-prev":
    case "assign-next": {
      const page = await client.getAssignments(runId, {
        offset: assignState.offset,
        limit: PAGE_SIZE,
        q: assignState.filter,
      });
      const pager: PagerState = { offset: page.offset, limit: PAGE_SIZE, total: page.total };
      assignState.offset = action === "assign-next" ? nextOffset(pager) : prevOffset(pager);
      await render();
      return;
    }
    case "submit-feedback": {
      const positive = splitLines(
        (document.getElementById("fb-positive") as HTMLTextAreaElement).value,
      );
      const negative = splitLines(
        (document.getElementById("fb-negative") as HTMLTextAreaElement).value,
      );
      const exemplars = splitLines(
        (document.getElementById("fb-exemplars") as HTMLTextAreaElement).value,
      );
      const rerun = (document.getElementById("fb-rerun") as HTMLInputElement).checked;
      try {
        const result = await client.postFeedback(runId, { positive, negative, exemplars, rerun });
        const target = document.getElementById("feedback-result");
        if (target) {
          target.innerHTML = noticeBanner(
            `feedback recorded as round ${result.round}` +
              (result.rerun_started ? "; re-coding started" : ""),
          );
        }
        if (result.rerun_started) startPolling(runId);
      } catch (err) {
        showError(err);
      }
      return;
    }
    case "start-annotation":
      await startAnnotation(runId);
      return;
    case "verdict":
      await handleVerdictKey(runId, el.dataset.verdict ?? "");
      return;
    case "approve-themes":
    case "approve-themes-edited": {
      try {
        const edited = action === "approve-themes-edited" ? collectEditedThemes() : null;
        await client.approveThemes(runId, edited ? { themes: edited } : {});
        flash.innerHTML = noticeBanner("theme set approved; classification unlocked");
        await render();
      } catch (err) {
        showError(err);
      }
      return;
    }
    default:
      return;
  }
}

// -- wiring ------------------------------------------------------------------------

app.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  const route = parseRoute(location.hash);
  if (target.dataset.action === "reload" || route.runId) {
    event.preventDefault();
    void handleAction(route.runId ?? "", target.dataset.action!, target);
  }
});

flash.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  event.preventDefault();
  void render();
});

app.addEventListener("change", (event) => {
  const target = event.target as HTMLElement;
  const route = parseRoute(location.hash);
  if (!route.runId) return;
  const action = target.dataset.action;
  if (action === "codes-round") {
    codesState.round = Number((target as HTMLSelectElement).value);
    codesState.offset = 0;
    void render();
  } else if (action === "codes-compare") {
    const value = (target as HTMLSelectElement).value;
    codesState.compareRound = value ? Number(value) : null;
    void render();
  } else if (action === "codes-text") {
    codesState.includeText = (target as HTMLInputElement).checked;
    void render();
  } else if (action === "annotate-round") {
    annotateRound = Number((target as HTMLSelectElement).value);
    void render();
  } else if (action === "annotate-blinded") {
    annotateBlinded = (target as HTMLInputElement).checked;
    void render();
  }
});

let filterTimer: ReturnType<typeof setTimeout> | undefined;
app.addEventListener("input", (event) => {
  const target = event.target as HTMLInputElement;
  if (target.dataset.action !== "codes-filter" && target.dataset.action !== "assign-filter") return;
  clearTimeout(filterTimer);
  filterTimer = setTimeout(() => {
    if (target.dataset.action === "codes-filter") {
      codesState.filter = target.value;
      codesState.offset = 0;
    } else {
      assignState.filter = target.value;
      assignState.offset = 0;
    }
    void render();
  }, 250);
});

document.addEventListener("keydown", (event) => {
  if (!session) return;
  if (event.key in { "1": 1, "2": 1, "3": 1 }) {
    const route = parseRoute(location.hash);
    if (route.runId && route.screen === "annotate") {
      event.preventDefault();
      void handleVerdictKey(route.runId, event.key);
    }
  }
});

window.addEventListener("hashchange", () => {
  session = null;
  poller?.stop();
  void render();
});

void render();
