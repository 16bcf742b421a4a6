/** Payload shapes served by the emvkit HTTP API. */

export interface BlockEntry {
  value: number;
  se?: number;
}

export interface MaturityEntry extends BlockEntry {
  age: number;
}

export interface ExogenousEntry extends BlockEntry {
  time: number;
}

export interface VintageEntry extends BlockEntry {
  vintage: number;
}

export interface ConstraintInfo {
  kind: string;
  k?: number;
  a_star?: number;
  window?: number;
  vintages?: number[];
}

export interface DecompositionPayload {
  constraint: ConstraintInfo | null;
  gamma_applied: number;
  intercept: number;
  maturity: MaturityEntry[];
  exogenous: ExogenousEntry[];
  vintage: VintageEntry[];
}

export interface SessionDiagnostics {
  session_id: string;
  status: "pending" | "ready" | "failed";
  error?: string;
  diagnostics?: {
    n_obs: number;
    dof: number;
    r_squared: number;
    residual_ss: number;
  };
}

export interface MacroFitPayload {
  semiparametric: {
    implied_time_effects: { time: number; value: number }[];
    macro_coefficients: { name: string; value: number }[];
    diagnostics: { r_squared: number; collinearity_diagnostic: number };
  };
  comparable_nonparametric: DecompositionPayload;
  nonparametric_r_squared: number;
}

/** A decomposition pinned for side-by-side comparison, kept with its raw served bytes. */
export interface PinnedDecomposition {
  label: string;
  payload: DecompositionPayload;
  rawJson: string;
}
