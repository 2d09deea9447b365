/** Explorer control state and its translation into generate requests.
 *
 * Slider values are clamped to their declared ranges on every update and
 * every request carries an explicit seed, so a request can always be
 * replayed from what the screen showed.
 */

import { Condition, EditOp, GenerateRequest, Sampler } from "./types.js";

export type EditMode = "perturb" | "interpolate" | "pca" | "attribute";

export const LAMBDA_RANGE: readonly [number, number] = [0, 0.8];
/** Marked on the slider: retention degrades noticeably past this strength. */
export const LAMBDA_TICK = 0.4;
export const ALPHA_RANGE: readonly [number, number] = [0, 1];
export const ALPHA_STEP = 0.1;
export const PCA_STRENGTH_RANGE: readonly [number, number] = [-50, 50];
export const PCA_STRENGTH_DEFAULT = -25;
export const DEFAULT_STEPS = 50;

export interface ControlState {
  refId: string | null;
  otherRefId: string | null;
  mode: EditMode;
  lambda: number;
  noiseSeed: number;
  alpha: number;
  bankId: string | null;
  bankSize: number;
  pcaComponent: number;
  pcaStrength: number;
  matrixId: string | null;
  attribute: string | null;
  attributeScale: number;
  attributeMode: "mean-add" | "diff";
  sampler: Sampler;
  steps: number;
  seed: number;
  autoRegenerate: boolean;
}

export function initialState(): ControlState {
  return {
    refId: null,
    otherRefId: null,
    mode: "perturb",
    lambda: 0,
    noiseSeed: 0,
    alpha: 1,
    bankId: null,
    bankSize: 0,
    pcaComponent: 1,
    pcaStrength: PCA_STRENGTH_DEFAULT,
    matrixId: null,
    attribute: null,
    attributeScale: 1,
    attributeMode: "mean-add",
    sampler: "ddim",
    steps: DEFAULT_STEPS,
    seed: 0,
    autoRegenerate: true,
  };
}

function clamp(value: number, [lo, hi]: readonly [number, number]): number {
  return Math.min(hi, Math.max(lo, value));
}

/** Apply a partial update, clamping sliders to their declared ranges. */
export function updateState(state: ControlState, patch: Partial<ControlState>): ControlState {
  const next = { ...state, ...patch };
  next.lambda = clamp(next.lambda, LAMBDA_RANGE);
  next.alpha = clamp(next.alpha, ALPHA_RANGE);
  next.pcaStrength = clamp(next.pcaStrength, PCA_STRENGTH_RANGE);
  if (next.bankSize > 0) {
    next.pcaComponent = Math.round(clamp(next.pcaComponent, [1, next.bankSize]));
  }
  next.steps = Math.max(1, Math.round(next.steps));
  next.seed = Math.max(0, Math.round(next.seed));
  next.noiseSeed = Math.max(0, Math.round(next.noiseSeed));
  return next;
}

/** The edit ops the current mode contributes; [] when the mode's inputs
 * are incomplete (e.g. interpolate without a second reference). */
export function buildOps(state: ControlState): EditOp[] {
  switch (state.mode) {
    case "perturb":
      return [{ op: "perturb", lambda: state.lambda, noise_seed: state.noiseSeed }];
    case "interpolate":
      return state.otherRefId
        ? [{ op: "interpolate", other_ref: state.otherRefId, alpha: state.alpha }]
        : [];
    case "pca":
      return state.bankId
        ? [
            {
              op: "pca",
              bank_id: state.bankId,
              K: state.pcaComponent,
              alpha: state.pcaStrength,
            },
          ]
        : [];
    case "attribute":
      return state.matrixId && state.attribute
        ? [
            {
              op: "attr",
              matrix_id: state.matrixId,
              attribute: state.attribute,
              scale: state.attributeScale,
              mode: state.attributeMode,
            },
          ]
        : [];
  }
}

export function buildRequest(state: ControlState): GenerateRequest {
  if (!state.refId) throw new Error("no reference selected");
  const condition: Condition = { ref_id: state.refId, ops: buildOps(state) };
  return {
    condition,
    sampler: state.sampler,
    steps: state.steps,
    seed: state.seed,
  };
}

/** Baseline request for the selected reference: no ops at all. */
export function baselineRequest(state: ControlState): GenerateRequest {
  if (!state.refId) throw new Error("no reference selected");
  return {
    condition: { ref_id: state.refId, ops: [] },
    sampler: state.sampler,
    steps: state.steps,
    seed: state.seed,
  };
}

/** Requests for an interpolation sweep, one per strip cell left to right:
 * alpha ascends 0 -> 1, so the leftmost cell is the other reference and
 * the rightmost is the current one, matching the CLI grid layout. */
export function interpolationSweepRequests(
  state: ControlState,
  points = 11,
): GenerateRequest[] {
  if (!state.refId) throw new Error("no reference selected");
  if (!state.otherRefId) throw new Error("interpolate needs a second reference");
  if (points < 2) throw new Error("a sweep needs at least 2 points");
  const requests: GenerateRequest[] = [];
  for (let i = 0; i < points; i++) {
    const alpha = i / (points - 1);
    requests.push({
      condition: {
        ref_id: state.refId,
        ops: [{ op: "interpolate", other_ref: state.otherRefId, alpha }],
      },
      sampler: state.sampler,
      steps: state.steps,
      seed: state.seed,
    });
  }
  return requests;
}

/** Requests for a perturbation sweep over a ladder of strengths. */
export function perturbationSweepRequests(
  state: ControlState,
  lambdas: readonly number[] = [0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8],
): GenerateRequest[] {
  if (!state.refId) throw new Error("no reference selected");
  return lambdas.map((lambda) => ({
    condition: {
      ref_id: state.refId as string,
      ops: [{ op: "perturb", lambda, noise_seed: state.noiseSeed }],
    },
    sampler: state.sampler,
    steps: state.steps,
    seed: state.seed,
  }));
}
