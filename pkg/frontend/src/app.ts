/**
 * Constraint explorer: upload a panel once, then drag the k slider and watch
 * the three effect curves re-identify live. Every displayed number comes from
 * the service unmodified; exports ship the served bytes.
 */

import { ApiError, EmvkitClient, Served } from "./api.js";
import { renderPanel, PanelSeries, OverlaySeries } from "./charts.js";
import { DebouncedFetcher } from "./debounce.js";
import { extractPlotted } from "./scaling.js";
import {
  clampK,
  constraintLabel,
  initialState,
  K_SLIDER,
  MAX_PINS,
  pin,
  setConstraint,
  setSession,
  togglePanel,
  toggleOverlay,
  unpin,
  ViewState,
} from "./state.js";
import { DecompositionPayload, PinnedDecomposition } from "./types.js";

const DEBOUNCE_MS = 250;

const client = new EmvkitClient("");
let state: ViewState = initialState();
let current: Served<DecompositionPayload> | null = null;
let overlaySeries: OverlaySeries | null = null;

const $ = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

function banner(message: string | null, kind: "error" | "info" = "error"): void {
  const box = $("banner");
  if (!message) {
    box.hidden = true;
    return;
  }
  box.hidden = false;
  box.className = `banner ${kind}`;
  box.textContent = message;
}

const fetcher = new DebouncedFetcher<Served<DecompositionPayload>>(
  DEBOUNCE_MS,
  (served) => {
    current = served;
    banner(null);
    render();
  },
  (err) => {
    if (err instanceof ApiError && err.status === 404) {
      state = setSession(state, null);
      syncSessionUi();
      banner("session not found on the server - upload the panel again", "info");
      return;
    }
    banner(err instanceof Error ? err.message : String(err));
  },
);

function requestDecomposition(immediate = false): void {
  const sid = state.sessionId;
  if (!sid) return;
  const constraint = { ...state.constraint };
  const run = (signal: AbortSignal) => client.fetchDecomposition(sid, constraint, signal);
  if (immediate) fetcher.fire(run);
  else fetcher.schedule(run);
}

function render(): void {
  const host = $("charts");
  host.replaceChildren();
  if (!current) return;
  const payload = current.payload;
  $("provenance").textContent = `showing: ${constraintLabel(payload.constraint)} (gamma ${payload.gamma_applied.toPrecision(4)})`;

  const plotted = extractPlotted(payload);
  const pinnedPlots = state.pinned.map((p) => ({ label: p.label, plotted: extractPlotted(p.payload) }));

  const panels: [keyof typeof plotted, string, string][] = [
    ["exogenous", "Exogenous effects", "time (month)"],
    ["maturity", "Maturity effects", "age (months on book)"],
    ["vintage", "Vintage effects", "vintage"],
  ];
  for (const [key, title, xLabel] of panels) {
    if (!state.showPanels[key]) continue;
    const series: PanelSeries[] = [
      { label: constraintLabel(payload.constraint), points: plotted[key] },
      ...pinnedPlots.map((p) => ({ label: `pin: ${p.label}`, points: p.plotted[key] })),
    ];
    const overlay = key === "exogenous" && state.overlayEnabled && overlaySeries ? overlaySeries : undefined;
    host.appendChild(renderPanel(title, xLabel, series, overlay));
  }
  renderPins();
}

function renderPins(): void {
  const list = $("pin-list");
  list.replaceChildren();
  state.pinned.forEach((p, i) => {
    const li = document.createElement("li");
    li.textContent = p.label + " ";
    const btn = document.createElement("button");
    btn.textContent = "unpin";
    btn.addEventListener("click", () => {
      state = unpin(state, i);
      render();
    });
    li.appendChild(btn);
    list.appendChild(li);
  });
  ($("pin") as HTMLButtonElement).disabled = state.pinned.length >= MAX_PINS;
}

function download(name: string, text: string, mime: string): void {
  const blob = new Blob([text], { type: mime });
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = name;
  a.click();
  URL.revokeObjectURL(url);
}

function syncSessionUi(): void {
  const sid = state.sessionId;
  $("session-label").textContent = sid ? `session ${sid}` : "no session";
  window.location.hash = sid ? `#${sid}` : "";
  ($("controls") as HTMLFieldSetElement).disabled = !sid;
}

function syncConstraintInputs(): void {
  const c = state.constraint;
  ($("kind") as HTMLSelectElement).value = c.kind;
  ($("k-slider") as HTMLInputElement).value = String(c.k);
  $("k-value").textContent = c.k.toFixed(3);
  ($("a-star") as HTMLInputElement).value = String(c.aStar);
  ($("window") as HTMLInputElement).value = String(c.window);
}

async function handleUpload(): Promise<void> {
  const text = ($("panel-csv") as HTMLTextAreaElement).value;
  const transform = ($("transform") as HTMLSelectElement).value;
  if (!text.trim()) {
    banner("paste panel CSV (age,time,value[,weight]) before uploading", "info");
    return;
  }
  try {
    const info = await client.uploadPanel(text, transform);
    state = setSession(state, info.session_id);
    const r2 = info.diagnostics ? ` (R^2 ${info.diagnostics.r_squared.toFixed(3)})` : "";
    banner(`panel fitted: ${info.diagnostics?.n_obs ?? "?"} cells${r2}`, "info");
    syncSessionUi();
    requestDecomposition(true);
  } catch (err) {
    banner(err instanceof Error ? err.message : String(err));
  }
}

async function handleMacroUpload(): Promise<void> {
  const sid = state.sessionId;
  const text = ($("macro-csv") as HTMLTextAreaElement).value;
  if (!sid || !text.trim()) return;
  try {
    await client.uploadMacro(sid, text);
    const served = await client.fetchMacroFit(sid);
    const implied = served.payload.semiparametric.implied_time_effects;
    overlaySeries = {
      label: "implied macro effects",
      x: implied.map((e) => e.time),
      values: implied.map((e) => e.value),
    };
    banner("macro covariates uploaded; overlay available", "info");
    render();
  } catch (err) {
    banner(err instanceof Error ? err.message : String(err));
  }
}

function wire(): void {
  $("upload").addEventListener("click", () => void handleUpload());
  $("macro-upload").addEventListener("click", () => void handleMacroUpload());

  const kindSel = $("kind") as HTMLSelectElement;
  kindSel.addEventListener("change", () => {
    state = setConstraint(state, { kind: kindSel.value });
    requestDecomposition(true);
  });

  const slider = $("k-slider") as HTMLInputElement;
  slider.min = String(K_SLIDER.min);
  slider.max = String(K_SLIDER.max);
  slider.step = String(K_SLIDER.step);
  slider.addEventListener("input", () => {
    state = setConstraint(state, { k: clampK(Number(slider.value)) });
    $("k-value").textContent = state.constraint.k.toFixed(3);
    requestDecomposition();
  });

  ($("a-star") as HTMLInputElement).addEventListener("change", (ev) => {
    state = setConstraint(state, { aStar: Number((ev.target as HTMLInputElement).value) });
    requestDecomposition(true);
  });
  ($("window") as HTMLInputElement).addEventListener("change", (ev) => {
    state = setConstraint(state, { window: Number((ev.target as HTMLInputElement).value) });
    requestDecomposition(true);
  });

  for (const key of ["exogenous", "maturity", "vintage"] as const) {
    ($(`show-${key}`) as HTMLInputElement).addEventListener("change", () => {
      state = togglePanel(state, key);
      render();
    });
  }
  ($("overlay") as HTMLInputElement).addEventListener("change", () => {
    state = toggleOverlay(state);
    render();
  });

  $("pin").addEventListener("click", () => {
    if (!current) return;
    const item: PinnedDecomposition = {
      label: constraintLabel(current.payload.constraint),
      payload: current.payload,
      rawJson: current.rawText,
    };
    const next = pin(state, item);
    if (next === null) {
      banner(`pin limit of ${MAX_PINS} reached - unpin something first`, "info");
      return;
    }
    state = next;
    render();
  });

  $("export-json").addEventListener("click", () => {
    if (current) download("decomposition.json", current.rawText, "application/json");
  });
  $("export-csv").addEventListener("click", () => {
    const sid = state.sessionId;
    if (!sid) return;
    void client
      .fetchDecompositionCsv(sid, state.constraint)
      .then((csv) => download("decomposition.csv", csv, "text/csv"))
      .catch((err: unknown) => banner(err instanceof Error ? err.message : String(err)));
  });
}

async function restoreFromHash(): Promise<void> {
  const sid = window.location.hash.replace(/^#/, "");
  if (!sid) return;
  try {
    const info = await client.sessionInfo(sid);
    if (info.status === "ready") {
      state = setSession(state, sid);
      syncSessionUi();
      requestDecomposition(true);
    }
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      banner("session from the URL no longer exists - upload the panel again", "info");
    }
  }
}

wire();
syncSessionUi();
syncConstraintInputs();
void restoreFromHash();
