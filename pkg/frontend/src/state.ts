/**
 * View state for the constraint explorer, with pure update functions so the
 * pin/selection logic is unit-testable without a DOM.
 */

import { PinnedDecomposition } from "./types.js";

export const MAX_PINS = 4;

/** Default k slider range covers the published sweep {0, -0.01, -0.02} with room. */
export const K_SLIDER = { min: -0.03, max: 0.01, step: 0.001 };

export interface ConstraintParams {
  kind: string;
  k: number;
  aStar: number;
  window: number;
}

export interface ViewState {
  sessionId: string | null;
  constraint: ConstraintParams;
  showPanels: { exogenous: boolean; maturity: boolean; vintage: boolean };
  overlayEnabled: boolean;
  pinned: PinnedDecomposition[];
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    constraint: { kind: "maturity-slope", k: 0, aStar: 60, window: 18 },
    showPanels: { exogenous: true, maturity: true, vintage: true },
    overlayEnabled: false,
    pinned: [],
  };
}

export function setSession(state: ViewState, sessionId: string | null): ViewState {
  return { ...state, sessionId, pinned: [] };
}

export function setConstraint(state: ViewState, patch: Partial<ConstraintParams>): ViewState {
  return { ...state, constraint: { ...state.constraint, ...patch } };
}

export function togglePanel(state: ViewState, panel: keyof ViewState["showPanels"]): ViewState {
  return {
    ...state,
    showPanels: { ...state.showPanels, [panel]: !state.showPanels[panel] },
  };
}

export function toggleOverlay(state: ViewState): ViewState {
  return { ...state, overlayEnabled: !state.overlayEnabled };
}

/** Pin the current decomposition; refuses (returning null) once the pin budget is used. */
export function pin(state: ViewState, item: PinnedDecomposition): ViewState | null {
  if (state.pinned.length >= MAX_PINS) {
    return null;
  }
  return { ...state, pinned: [...state.pinned, item] };
}

export function unpin(state: ViewState, index: number): ViewState {
  return { ...state, pinned: state.pinned.filter((_, i) => i !== index) };
}

/** Clamp a slider value onto the configured k grid. */
export function clampK(value: number): number {
  const clamped = Math.min(K_SLIDER.max, Math.max(K_SLIDER.min, value));
  const steps = Math.round((clamped - K_SLIDER.min) / K_SLIDER.step);
  return Number((K_SLIDER.min + steps * K_SLIDER.step).toFixed(6));
}

/** Human label used for pins and provenance tags, derived from served constraint info. */
export function constraintLabel(info: { kind: string; k?: number; a_star?: number; window?: number } | null): string {
  if (!info) return "unconstrained";
  if (info.kind === "maturity-slope") return `slope k=${info.k} beyond A*=${info.a_star}`;
  if (info.kind === "vintage-trend-zero") {
    return info.window !== undefined ? `zero trend, last ${info.window} vintages` : "zero vintage trend";
  }
  return info.kind;
}
