// HTML builders for every screen. Pure string-in, string-out so they can be
// tested without a DOM; main.ts owns event wiring via delegation.

import { esc, joinRounds, pageLabel, type PagerState } from "./state.js";
import { ribbonPath, sankeyLayout } from "./sankey.js";
import type {
  AnnotationsPayload,
  AssignmentsPage,
  CodeItem,
  CodesPage,
  EvaluationPayload,
  Flow,
  RunDetail,
  RunSummary,
  Tally,
  ThemesPayload,
} from "./types.js";

export function banner(message: string, retryAction = "reload"): string {
  return `<div class="banner error" role="alert">
    <span>${esc(message)}</span>
    <button data-action="${esc(retryAction)}">Retry</button>
  </div>`;
}

export function noticeBanner(message: string): string {
  return `<div class="banner notice">${esc(message)}</div>`;
}

const NAV_SCREENS: [string, string][] = [
  ["dashboard", "Dashboard"],
  ["codes", "Codes"],
  ["feedback", "Feedback"],
  ["annotate", "Annotate"],
  ["themes", "Themes"],
  ["classification", "Classification"],
  ["mapping", "Mapping"],
];

export function runNav(runId: string, active: string): string {
  const links = NAV_SCREENS.map(([screen, label]) => {
    const cls = screen === active ? "active" : "";
    return `<a class="${cls}" href="#/run/${encodeURIComponent(runId)}/${screen}">${label}</a>`;
  });
  return `<nav class="run-nav"><a href="#/">All runs</a>${links.join("")}</nav>`;
}

export function runListView(runs: RunSummary[]): string {
  const rows = runs.map(
    (run) => `<tr>
      <td><a href="#/run/${encodeURIComponent(run.run_id)}/dashboard">${esc(run.run_id)}</a></td>
      <td>${run.n_points}</td>
      <td>${run.rounds.join(", ")}</td>
      <td>${run.approved_rounds.length ? run.approved_rounds.join(", ") : "none"}</td>
    </tr>`,
  );
  const table = runs.length
    ? `<table class="list">
        <thead><tr><th>Run</th><th>Data points</th><th>Rounds</th><th>Approved</th></tr></thead>
        <tbody>${rows.join("")}</tbody>
      </table>`
    : `<p class="empty">No runs yet. Create one with the CLI (<code>themekit ingest ...</code>).</p>`;
  return `<section class="screen"><h1>Runs</h1>${table}</section>`;
}

function tallyBlock(tally: Tally | null): string {
  if (!tally || tally.empty) return `<p class="empty">No annotations yet.</p>`;
  return `<table class="mini">
    <tr><th>not how</th><td>${tally.counts.not_how}</td><td>${tally.percentages.not_how.toFixed(1)}%</td></tr>
    <tr><th>not what</th><td>${tally.counts.not_what}</td><td>${tally.percentages.not_what.toFixed(1)}%</td></tr>
    <tr><th>ok</th><td>${tally.counts.ok}</td><td>${tally.percentages.ok.toFixed(1)}%</td></tr>
    <tr class="total"><th>not ok</th><td>${tally.counts.not_how + tally.counts.not_what}</td><td>${tally.not_ok_pct.toFixed(1)}%</td></tr>
  </table>`;
}

export function dashboardView(run: RunDetail): string {
  const contexts = Object.entries(run.contexts)
    .sort(([a], [b]) => Number(a) - Number(b))
    .map(([round, ctx]) => {
      const requirements = ctx.custom_requirements.length
        ? `<ol>${ctx.custom_requirements.map((r) => `<li>${esc(r)}</li>`).join("")}</ol>`
        : "<p class='empty'>none</p>";
      return `<details ${Number(round) === run.rounds.length ? "open" : ""}>
        <summary>Round ${esc(round)} context</summary>
        <p>${ctx.research_questions.map(esc).join("<br>")}</p>
        <h4>Custom requirements</h4>${requirements}
        ${ctx.positive_exemplars.length ? `<h4>Exemplars</h4><ul>${ctx.positive_exemplars.map((e) => `<li>${esc(e)}</li>`).join("")}</ul>` : ""}
      </details>`;
    })
    .join("");
  const stages = run.stages.length
    ? `<ul class="stages">${run.stages
        .map((s) => `<li>${esc(s.stage)} r${s.round}: ${s.next_batch_index} batches committed</li>`)
        .join("")}</ul>`
    : "<p class='empty'>No stages run yet.</p>";
  const stageButtons = ["code", "collate", "merge", "classify"]
    .map((stage) => `<button data-action="start-stage" data-stage="${stage}">${stage}</button>`)
    .join("");
  return `<section class="screen">
    ${runNav(run.run_id, "dashboard")}
    <h1>${esc(run.run_id)}</h1>
    <p>${run.n_points} data points; dataset digest <code>${esc(run.dataset_digest.slice(0, 12))}</code></p>
    <div id="progress-panel" class="progress"></div>
    <div class="stage-controls">
      <label>round <input id="stage-round" type="number" min="1" value="${run.rounds.length}" size="3"></label>
      ${stageButtons}
    </div>
    <h2>Stage progress</h2>${stages}
    <h2>Analysis context</h2>${contexts}
  </section>`;
}

export function progressPanel(active: RunDetail["active_stage"]): string {
  if (!active) return "";
  if (active.error) {
    return `<div class="banner error">stage ${esc(active.stage)} failed: ${esc(active.error)}</div>`;
  }
  if (active.finished) {
    return `<div class="banner notice">stage ${esc(active.stage)} (round ${active.round}) finished</div>`;
  }
  const pct = active.total > 0 ? Math.round((100 * active.done) / active.total) : 0;
  return `<div class="banner progress-live">
    ${esc(active.stage)} round ${active.round}: batch ${active.done}/${active.total}
    <progress max="100" value="${pct}"></progress>
  </div>`;
}

export interface CodesViewModel {
  page: CodesPage;
  pager: PagerState;
  filter: string;
  compareWith: CodeItem[] | null;
  compareRound: number | null;
  includeText: boolean;
}

export function codesView(runId: string, model: CodesViewModel): string {
  const { page, pager, filter, compareWith, compareRound } = model;
  const roundOptions = page.rounds
    .map((r) => `<option value="${r}" ${r === page.round ? "selected" : ""}>round ${r}</option>`)
    .join("");
  const compareOptions = ["<option value=''>no comparison</option>"]
    .concat(
      page.rounds
        .filter((r) => r !== page.round)
        .map((r) => `<option value="${r}" ${r === compareRound ? "selected" : ""}>vs round ${r}</option>`),
    )
    .join("");

  let table: string;
  if (compareWith) {
    const rows = joinRounds(page.items, compareWith)
      .map(
        (row) => `<tr>
          <td class="id">${esc(row.id)}</td>
          <td>${esc(row.left?.code ?? "")}</td>
          <td>${esc(row.right?.code ?? "")}</td>
        </tr>`,
      )
      .join("");
    table = `<table class="list codes">
      <thead><tr><th>id</th><th>round ${page.round}</th><th>round ${compareRound}</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>`;
  } else {
    const rows = page.items
      .map(
        (item) => `<tr>
          <td class="id">${esc(item.id)}</td>
          <td>${esc(item.code)}</td>
          ${model.includeText ? `<td class="doc">${esc(item.text ?? "")}</td>` : ""}
        </tr>`,
      )
      .join("");
    table = `<table class="list codes">
      <thead><tr><th>id</th><th>code</th>${model.includeText ? "<th>document</th>" : ""}</tr></thead>
      <tbody>${rows}</tbody>
    </table>`;
  }

  return `<section class="screen">
    ${runNav(runId, "codes")}
    <h1>Code review</h1>
    <div class="toolbar">
      <select id="codes-round" data-action="codes-round">${roundOptions}</select>
      <select id="codes-compare" data-action="codes-compare">${compareOptions}</select>
      <input id="codes-filter" type="search" placeholder="filter by substring"
             value="${esc(filter)}" data-action="codes-filter">
      <label><input id="codes-text" type="checkbox" data-action="codes-text"
             ${model.includeText ? "checked" : ""}> show documents</label>
      <span class="pager">
        <button data-action="codes-prev" ${pager.offset === 0 ? "disabled" : ""}>&larr;</button>
        ${esc(pageLabel(pager))}
        <button data-action="codes-next"
          ${pager.offset + pager.limit >= pager.total ? "disabled" : ""}>&rarr;</button>
      </span>
    </div>
    ${table}
  </section>`;
}

export function feedbackView(runId: string, lastRound: number): string {
  return `<section class="screen">
    ${runNav(runId, "feedback")}
    <h1>Feedback composer</h1>
    <p>Feedback is appended to the run's custom requirements and (optionally)
       triggers re-coding as round ${lastRound + 1}.</p>
    <form id="feedback-form">
      <label>Focus on (one per line)
        <textarea id="fb-positive" rows="4" placeholder="modus operandi"></textarea></label>
      <label>Do not encode (one per line)
        <textarea id="fb-negative" rows="4" placeholder="value of stolen goods"></textarea></label>
      <label>Exemplary codes (one per line)
        <textarea id="fb-exemplars" rows="3"></textarea></label>
      <label><input type="checkbox" id="fb-rerun" checked> regenerate codes now</label>
      <button data-action="submit-feedback">Submit feedback</button>
    </form>
    <div id="feedback-result"></div>
  </section>`;
}

export interface AnnotateViewModel {
  round: number;
  rounds: number[];
  blinded: boolean;
  running: boolean;
  current: CodeItem | null;
  done: number;
  total: number;
  pendingCount: number;
  annotations: AnnotationsPayload | null;
}

export function annotateView(runId: string, model: AnnotateViewModel): string {
  const roundOptions = model.rounds
    .map((r) => `<option value="${r}" ${r === model.round ? "selected" : ""}>round ${r}</option>`)
    .join("");
  let workspace: string;
  if (model.running && model.current) {
    const roundCell = model.blinded
      ? "<em>hidden (blinded)</em>"
      : `round ${model.current.round}`;
    workspace = `<div class="annotate-card" tabindex="0" id="annotate-card">
      <p class="progress-line">${model.done + 1} / ${model.total}</p>
      <p class="code-under-review">${esc(model.current.code)}</p>
      <p class="meta">${esc(model.current.id)} &middot; ${roundCell}</p>
      <p class="keys">
        <button data-action="verdict" data-verdict="1"><b>1</b> does not say how</button>
        <button data-action="verdict" data-verdict="2"><b>2</b> does not say what</button>
        <button data-action="verdict" data-verdict="3"><b>3</b> ok</button>
      </p>
      <p class="hint">Keys 1 / 2 / 3 work too. ${model.pendingCount} verdicts pending upload.</p>
    </div>`;
  } else if (model.running) {
    workspace = `<div class="banner notice">Annotation pass finished; verdicts uploaded.</div>`;
  } else {
    workspace = `<button data-action="start-annotation">Start annotation pass</button>`;
  }
  return `<section class="screen">
    ${runNav(runId, "annotate")}
    <h1>Quality annotation</h1>
    <div class="toolbar">
      <select id="annotate-round" data-action="annotate-round">${roundOptions}</select>
      <label><input type="checkbox" id="annotate-blinded" data-action="annotate-blinded"
        ${model.blinded ? "checked" : ""} ${model.running ? "disabled" : ""}> blind rounds during the pass</label>
    </div>
    ${workspace}
    <h2>Tally so far</h2>
    ${tallyBlock(model.annotations?.tally ?? null)}
  </section>`;
}

export function themesView(runId: string, payload: ThemesPayload): string {
  const source = payload.approved ?? payload.merged;
  let tree: string;
  if (!source) {
    tree = `<p class="empty">No merged theme set yet; run collate and merge first.</p>`;
  } else {
    tree = `<ul class="theme-tree" id="theme-tree">${source.themes
      .map(
        (theme, i) => `<li>
          <input class="theme-label" data-theme-index="${i}" value="${esc(theme.label)}">
          <ul>${theme.sub_themes.map((s) => `<li class="sub">${esc(s)}</li>`).join("")}</ul>
        </li>`,
      )
      .join("")}</ul>`;
  }
  const status = payload.approved
    ? `<p class="ok">Approved for round ${payload.round}. Classification is unlocked.</p>`
    : `<p class="warn">Not approved yet; classification stays locked (409).</p>`;
  return `<section class="screen">
    ${runNav(runId, "themes")}
    <h1>Theme review</h1>
    ${status}
    ${tree}
    ${source && !payload.approved
      ? `<button data-action="approve-themes">Approve</button>
         <button data-action="approve-themes-edited">Approve with edited labels</button>`
      : ""}
    <h2>Candidate themes (${payload.candidates.length})</h2>
    <ul class="candidates">${payload.candidates
      .map((c) => `<li>${esc(c.label)} <span class="count">(${c.members.length})</span></li>`)
      .join("")}</ul>
  </section>`;
}

export interface ClassificationViewModel {
  page: AssignmentsPage;
  pager: PagerState;
  filter: string;
  evaluation: EvaluationPayload | null;
}

export function classificationView(runId: string, model: ClassificationViewModel): string {
  const rows = model.page.items
    .map(
      (item) => `<tr>
        <td class="id">${esc(item.id)}</td>
        <td>${item.themes.map((t, i) => `<span class="rank rank-${i + 1}">${esc(t)}</span>`).join(" ")}</td>
        <td>${esc(item.gold_theme ?? "")}</td>
      </tr>`,
    )
    .join("");
  const recall = model.evaluation?.recall;
  const recallBlock = recall
    ? `<table class="mini"><thead><tr><th>theme</th><th>R@1</th><th>R@${recall.k}</th><th>n</th></tr></thead>
       <tbody>${Object.entries(recall.per_theme)
         .map(
           ([theme, row]) => `<tr><td>${esc(theme)}</td><td>${row.r_at_1.toFixed(2)}</td>
             <td>${(row[`r_at_${recall.k}`] ?? 0).toFixed(2)}</td><td>${row.support}</td></tr>`,
         )
         .join("")}
       <tr class="total"><td>overall</td><td>${recall.overall.r_at_1.toFixed(2)}</td>
         <td>${(recall.overall[`r_at_${recall.k}`] ?? 0).toFixed(2)}</td><td>${recall.overall.support}</td></tr>
       </tbody></table>`
    : `<p class="empty">${esc(model.evaluation?.recall_unavailable ?? "No evaluation available yet.")}</p>`;
  return `<section class="screen">
    ${runNav(runId, "classification")}
    <h1>Classification browser</h1>
    <div class="toolbar">
      <input id="assign-filter" type="search" placeholder="filter by id or theme"
             value="${esc(model.filter)}" data-action="assign-filter">
      <span class="pager">
        <button data-action="assign-prev" ${model.pager.offset === 0 ? "disabled" : ""}>&larr;</button>
        ${esc(pageLabel(model.pager))}
        <button data-action="assign-next"
          ${model.pager.offset + model.pager.limit >= model.pager.total ? "disabled" : ""}>&rarr;</button>
      </span>
    </div>
    <table class="list">
      <thead><tr><th>id</th><th>ranked themes</th><th>gold</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
    <h2>Recall (computed by the service)</h2>
    ${recallBlock}
  </section>`;
}

export function mappingView(runId: string, flows: Flow[]): string {
  const layout = sankeyLayout(flows);
  const ribbons = layout.links
    .map(
      (link) => `<path class="ribbon" d="${ribbonPath(link)}">
        <title>${esc(link.source)} → ${esc(link.target)}: ${link.weight}</title></path>`,
    )
    .join("");
  const nodes = layout.nodes
    .map(
      (node) => `<g>
        <rect class="node ${node.side}" x="${node.x}" y="${node.y}"
              width="${node.width}" height="${Math.max(node.height, 1)}"></rect>
        <text class="label ${node.side}" x="${node.side === "left" ? node.x + node.width + 6 : node.x - 6}"
              y="${node.y + Math.max(node.height, 1) / 2 + 4}"
              text-anchor="${node.side === "left" ? "start" : "end"}">${esc(node.name)} (${node.total})</text>
      </g>`,
    )
    .join("");
  const svg = flows.length
    ? `<svg viewBox="0 0 ${layout.width} ${layout.height}" class="sankey" role="img">
        ${ribbons}${nodes}
      </svg>
      <p class="hint">Expert themes on the left, discovered themes on the right;
         ribbon thickness is the number of shared data points.</p>`
    : `<p class="empty">No mapping yet: classification outputs and gold labels are both required.</p>`;
  return `<section class="screen">
    ${runNav(runId, "mapping")}
    <h1>Expert vs. discovered themes</h1>
    ${svg}
  </section>`;
}

export function loadingView(what: string): string {
  return `<section class="screen"><p class="loading">Loading ${esc(what)}...</p></section>`;
}
