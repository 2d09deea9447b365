import { describe, expect, it } from "vitest";

import {
  ALPHA_RANGE,
  LAMBDA_RANGE,
  PCA_STRENGTH_DEFAULT,
  PCA_STRENGTH_RANGE,
  baselineRequest,
  buildOps,
  buildRequest,
  initialState,
  interpolationSweepRequests,
  perturbationSweepRequests,
  updateState,
} from "../src/state.js";

describe("control state", () => {
  it("starts with documented defaults", () => {
    const s = initialState();
    expect(s.lambda).toBe(0);
    expect(s.pcaStrength).toBe(PCA_STRENGTH_DEFAULT);
    expect(s.steps).toBe(50);
    expect(s.seed).toBe(0);
    expect(s.sampler).toBe("ddim");
    expect(s.autoRegenerate).toBe(true);
  });

  it("clamps sliders to their declared ranges", () => {
    let s = initialState();
    s = updateState(s, { lambda: 9, alpha: -2, pcaStrength: 1000 });
    expect(s.lambda).toBe(LAMBDA_RANGE[1]);
    expect(s.alpha).toBe(ALPHA_RANGE[0]);
    expect(s.pcaStrength).toBe(PCA_STRENGTH_RANGE[1]);
    s = updateState(s, { lambda: -0.5 });
    expect(s.lambda).toBe(LAMBDA_RANGE[0]);
  });

  it("keeps the pca component within the bank", () => {
    let s = updateState(initialState(), { bankId: "b0", bankSize: 4 });
    s = updateState(s, { pcaComponent: 11 });
    expect(s.pcaComponent).toBe(4);
    s = updateState(s, { pcaComponent: 0 });
    expect(s.pcaComponent).toBe(1);
  });

  it("every request carries an explicit seed", () => {
    const s = updateState(initialState(), { refId: "r0", seed: 17 });
    expect(buildRequest(s).seed).toBe(17);
    expect(baselineRequest(s).seed).toBe(17);
    for (const r of perturbationSweepRequests(s)) expect(r.seed).toBe(17);
  });

  it("builds the op for the active mode only", () => {
    let s = updateState(initialState(), { refId: "r0", lambda: 0.3, noiseSeed: 5 });
    expect(buildOps(s)).toEqual([{ op: "perturb", lambda: 0.3, noise_seed: 5 }]);
    s = updateState(s, { mode: "pca", bankId: "b1", bankSize: 3, pcaComponent: 2 });
    expect(buildOps(s)).toEqual([
      { op: "pca", bank_id: "b1", K: 2, alpha: PCA_STRENGTH_DEFAULT },
    ]);
  });

  it("interpolate contributes nothing until a second reference exists", () => {
    let s = updateState(initialState(), { refId: "r0", mode: "interpolate" });
    expect(buildOps(s)).toEqual([]);
    s = updateState(s, { otherRefId: "r1", alpha: 0.4 });
    expect(buildOps(s)).toEqual([{ op: "interpolate", other_ref: "r1", alpha: 0.4 }]);
  });

  it("baseline request has no ops", () => {
    const s = updateState(initialState(), { refId: "r0", lambda: 0.7 });
    expect(baselineRequest(s).condition).toEqual({ ref_id: "r0", ops: [] });
  });

  it("interpolation sweep ascends alpha with the other reference first", () => {
    const s = updateState(initialState(), { refId: "a", otherRefId: "b" });
    const requests = interpolationSweepRequests(s, 11);
    expect(requests).toHaveLength(11);
    const alphas = requests.map(
      (r) => (r.condition as { ops: { alpha: number }[] }).ops[0].alpha,
    );
    expect(alphas[0]).toBe(0);
    expect(alphas[10]).toBe(1);
    for (let i = 1; i < alphas.length; i++) expect(alphas[i]).toBeGreaterThan(alphas[i - 1]);
  });

  it("perturbation sweep uses the default strength ladder", () => {
    const s = updateState(initialState(), { refId: "a" });
    const lambdas = perturbationSweepRequests(s).map(
      (r) => (r.condition as { ops: { lambda: number }[] }).ops[0].lambda,
    );
    expect(lambdas).toEqual([0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8]);
  });

  it("refuses to build requests without a reference", () => {
    expect(() => buildRequest(initialState())).toThrow("no reference");
  });
});
