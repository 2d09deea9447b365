/** Wire types for the generation service's HTTP contract. */

export type Sampler = "ddpm" | "ddim";

export interface PerturbOp {
  op: "perturb";
  lambda: number;
  noise_seed: number;
}

export interface InterpolateOp {
  op: "interpolate";
  other_ref: string;
  alpha: number;
}

export interface PcaOp {
  op: "pca";
  bank_id: string;
  K: number;
  alpha: number;
}

export interface AttrOp {
  op: "attr";
  matrix_id: string;
  attribute: string;
  scale: number;
  mode: "mean-add" | "diff";
}

export type EditOp = PerturbOp | InterpolateOp | PcaOp | AttrOp;

export interface ConditionRef {
  ref_id: string;
  ops: EditOp[];
}

export type Condition = number[] | ConditionRef;

export interface GenerateRequest {
  condition: Condition;
  sampler: Sampler;
  steps: number;
  seed: number;
}

/** Decoded X-Repdiff-Provenance response header. */
export interface Provenance {
  condition: number[];
  source: string;
  sampler: Sampler;
  steps: number;
  seed: number;
}

export interface MetaResponse {
  checkpoint: Record<string, unknown>;
  cond_dim: number;
  samplers: Sampler[];
  encoders: string[];
}

export interface EmbeddingsResponse {
  matrix_id: string;
  n: number;
  d: number;
  attributes: string[];
}

export interface PcaFitResponse {
  bank_id: string;
  explained_variances: number[];
}

export interface ReferenceResponse {
  ref_id: string;
}

export interface ReferenceMetadata {
  ref_id: string;
  source: string;
  dim: number;
  vector: number[];
}
