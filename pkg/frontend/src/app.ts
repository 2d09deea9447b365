/** Single-page explorer: reference picker, edit panel with debounced
 * sliders, sweep strips, and a provenance readout. All numeric work and
 * request plumbing live in the imported modules; this file only wires
 * them to the DOM.
 */

import { ApiClient, GeneratedImage } from "./api.js";
import { DEBOUNCE_MS, trailingDebounce } from "./debounce.js";
import { exportStripPng } from "./grid.js";
import { decodePng } from "./png.js";
import { LatestOnly } from "./sequence.js";
import {
  ALPHA_RANGE,
  ALPHA_STEP,
  ControlState,
  EditMode,
  LAMBDA_RANGE,
  LAMBDA_TICK,
  PCA_STRENGTH_RANGE,
  baselineRequest,
  buildRequest,
  initialState,
  interpolationSweepRequests,
  perturbationSweepRequests,
  updateState,
} from "./state.js";
import { GenerateRequest } from "./types.js";

const api = new ApiClient();
let state: ControlState = initialState();
const gate = new LatestOnly<GeneratedImage>();
let baselineBlob: Uint8Array | null = null;
let detachedImageUrl: string | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function pngUrl(bytes: Uint8Array): string {
  const blob = new Blob([bytes as unknown as BlobPart], { type: "image/png" });
  return URL.createObjectURL(blob);
}

function showImage(img: HTMLImageElement, bytes: Uint8Array): void {
  if (detachedImageUrl && img.id === "preview") URL.revokeObjectURL(detachedImageUrl);
  const url = pngUrl(bytes);
  if (img.id === "preview") detachedImageUrl = url;
  img.src = url;
}

function setStatus(text: string, isError = false): void {
  const bar = el<HTMLDivElement>("status");
  bar.textContent = text;
  bar.className = isError ? "status error" : "status";
}

function renderProvenance(result: GeneratedImage): void {
  const strip = el<HTMLDivElement>("provenance");
  if (!result.provenance) {
    strip.textContent = "";
    return;
  }
  const p = result.provenance;
  const norm = Math.sqrt(p.condition.reduce((s, v) => s + v * v, 0));
  strip.textContent =
    `|C| = ${norm.toFixed(4)} - ${p.sampler}/${p.steps} seed ${p.seed} - ${p.source}`;
}

async function regenerate(): Promise<void> {
  if (!state.refId) return;
  const request = buildRequest(state);
  setStatus("generating...");
  try {
    await gate.run(
      () => api.generate(request),
      (result) => {
        showImage(el<HTMLImageElement>("preview"), result.blob);
        renderProvenance(result);
        const identical =
          baselineBlob !== null &&
          baselineBlob.length === result.blob.length &&
          baselineBlob.every((b, i) => b === result.blob[i]);
        setStatus(identical ? "identical to baseline" : "done");
      },
    );
  } catch (err) {
    setStatus(`generation failed: ${(err as Error).message}`, true);
  }
}

const debouncedRegenerate = trailingDebounce(() => {
  if (state.autoRegenerate) void regenerate();
}, DEBOUNCE_MS);

function apply(patch: Partial<ControlState>): void {
  state = updateState(state, patch);
  syncControls();
  debouncedRegenerate();
}

async function selectReference(refId: string): Promise<void> {
  state = updateState(state, { refId });
  const meta = await api.referenceMetadata(refId);
  el<HTMLSpanElement>("ref-label").textContent = `${refId} (${meta.source})`;
  const result = await api.generate(baselineRequest(state));
  baselineBlob = result.blob;
  showImage(el<HTMLImageElement>("baseline"), result.blob);
  syncControls();
  void regenerate();
}

async function loadEmbeddings(file: File): Promise<void> {
  const bytes = new Uint8Array(await file.arrayBuffer());
  const info = await api.uploadEmbeddings(bytes);
  state = updateState(state, { matrixId: info.matrix_id });
  setStatus(`loaded ${info.n} x ${info.d} embeddings`);

  const attrSelect = el<HTMLSelectElement>("attribute");
  attrSelect.innerHTML = "";
  for (const name of info.attributes) {
    const option = document.createElement("option");
    option.value = name;
    option.textContent = name;
    attrSelect.appendChild(option);
  }
  if (info.attributes.length) {
    state = updateState(state, { attribute: info.attributes[0] });
  }

  const picker = el<HTMLDivElement>("reference-grid");
  picker.innerHTML = "";
  const rows = Math.min(info.n, 24);
  for (let row = 0; row < rows; row++) {
    const ref = await api.referenceFromRow(info.matrix_id, row);
    const thumb = document.createElement("button");
    thumb.className = "ref-thumb";
    thumb.textContent = `row ${row}`;
    thumb.addEventListener("click", () => void selectReference(ref.ref_id));
    if (!state.otherRefId && row === 1) state = updateState(state, { otherRefId: ref.ref_id });
    picker.appendChild(thumb);
  }

  const bank = await api.fitPca(info.matrix_id, Math.min(8, Math.max(1, info.n - 1)));
  state = updateState(state, { bankId: bank.bank_id, bankSize: bank.explained_variances.length });
  renderVarianceBars(bank.explained_variances);
  syncControls();
}

function renderVarianceBars(variances: number[]): void {
  const host = el<HTMLDivElement>("variance-bars");
  host.innerHTML = "";
  const top = Math.max(...variances, 1e-12);
  variances.forEach((value, i) => {
    const barRow = document.createElement("div");
    barRow.className = "bar-row";
    const label = document.createElement("span");
    label.textContent = `V${i + 1}`;
    const bar = document.createElement("div");
    bar.className = "bar";
    bar.style.width = `${Math.max(2, (100 * value) / top)}%`;
    bar.title = value.toPrecision(4);
    barRow.append(label, bar);
    host.appendChild(barRow);
  });
}

async function runSweep(requests: GenerateRequest[], captions: string[]): Promise<void> {
  setStatus(`sweeping ${requests.length} cells...`);
  const cells = [];
  for (const request of requests) {
    const result = await api.generate(request);
    cells.push(decodePng(result.blob));
  }
  const strip = exportStripPng(cells);
  showImage(el<HTMLImageElement>("strip"), strip);
  el<HTMLDivElement>("strip-captions").textContent = captions.join("  |  ");
  const download = el<HTMLAnchorElement>("strip-download");
  download.href = pngUrl(strip);
  download.download = "strip.png";
  download.hidden = false;
  setStatus("sweep done");
}

function syncControls(): void {
  el<HTMLInputElement>("lambda").value = String(state.lambda);
  el<HTMLSpanElement>("lambda-value").textContent = state.lambda.toFixed(2);
  el<HTMLInputElement>("alpha").value = String(state.alpha);
  el<HTMLSpanElement>("alpha-value").textContent = state.alpha.toFixed(1);
  el<HTMLInputElement>("pca-strength").value = String(state.pcaStrength);
  el<HTMLSpanElement>("pca-strength-value").textContent = String(state.pcaStrength);
  el<HTMLInputElement>("pca-component").max = String(Math.max(1, state.bankSize));
  el<HTMLInputElement>("pca-component").value = String(state.pcaComponent);
  el<HTMLInputElement>("seed").value = String(state.seed);
  el<HTMLInputElement>("auto-regenerate").checked = state.autoRegenerate;
  for (const mode of ["perturb", "interpolate", "pca", "attribute"] as EditMode[]) {
    el<HTMLButtonElement>(`tab-${mode}`).classList.toggle("active", state.mode === mode);
    el<HTMLDivElement>(`panel-${mode}`).hidden = state.mode !== mode;
  }
  const interpolateReady = Boolean(state.refId && state.otherRefId);
  el<HTMLButtonElement>("tab-interpolate").disabled = !interpolateReady;
  el<HTMLButtonElement>("sweep-interpolate").disabled = !interpolateReady;
}

function wire(): void {
  const lambda = el<HTMLInputElement>("lambda");
  lambda.min = String(LAMBDA_RANGE[0]);
  lambda.max = String(LAMBDA_RANGE[1]);
  lambda.step = "0.01";
  el<HTMLSpanElement>("lambda-tick").textContent = `tick: ${LAMBDA_TICK}`;
  lambda.addEventListener("input", () => apply({ lambda: Number(lambda.value) }));

  const alpha = el<HTMLInputElement>("alpha");
  alpha.min = String(ALPHA_RANGE[0]);
  alpha.max = String(ALPHA_RANGE[1]);
  alpha.step = String(ALPHA_STEP);
  alpha.addEventListener("input", () => apply({ alpha: Number(alpha.value) }));

  const strength = el<HTMLInputElement>("pca-strength");
  strength.min = String(PCA_STRENGTH_RANGE[0]);
  strength.max = String(PCA_STRENGTH_RANGE[1]);
  strength.step = "1";
  strength.addEventListener("input", () => apply({ pcaStrength: Number(strength.value) }));

  const component = el<HTMLInputElement>("pca-component");
  component.min = "1";
  component.addEventListener("input", () => apply({ pcaComponent: Number(component.value) }));

  el<HTMLSelectElement>("attribute").addEventListener("change", (ev) =>
    apply({ attribute: (ev.target as HTMLSelectElement).value }),
  );
  el<HTMLInputElement>("attribute-scale").addEventListener("input", (ev) =>
    apply({ attributeScale: Number((ev.target as HTMLInputElement).value) }),
  );
  el<HTMLSelectElement>("attribute-mode").addEventListener("change", (ev) =>
    apply({ attributeMode: (ev.target as HTMLSelectElement).value as "mean-add" | "diff" }),
  );

  el<HTMLInputElement>("seed").addEventListener("change", (ev) =>
    apply({ seed: Number((ev.target as HTMLInputElement).value) }),
  );
  el<HTMLInputElement>("auto-regenerate").addEventListener("change", (ev) =>
    apply({ autoRegenerate: (ev.target as HTMLInputElement).checked }),
  );
  el<HTMLButtonElement>("regenerate").addEventListener("click", () => void regenerate());

  for (const mode of ["perturb", "interpolate", "pca", "attribute"] as EditMode[]) {
    el<HTMLButtonElement>(`tab-${mode}`).addEventListener("click", () => apply({ mode }));
  }

  el<HTMLInputElement>("embeddings-file").addEventListener("change", (ev) => {
    const input = ev.target as HTMLInputElement;
    if (input.files?.length) void loadEmbeddings(input.files[0]);
  });

  el<HTMLButtonElement>("sweep-perturb").addEventListener("click", () => {
    const requests = perturbationSweepRequests(state);
    const captions = requests.map((r) => {
      const ops = (r.condition as { ops: { lambda?: number }[] }).ops;
      return `lambda=${ops[0]?.lambda ?? 0}`;
    });
    void runSweep(requests, captions);
  });
  el<HTMLButtonElement>("sweep-interpolate").addEventListener("click", () => {
    const requests = interpolationSweepRequests(state);
    const captions = requests.map((_, i) => `alpha=${(i / (requests.length - 1)).toFixed(1)}`);
    void runSweep(requests, captions);
  });

  void api
    .meta()
    .then((meta) => {
      setStatus(`checkpoint loaded - condition dim ${meta.cond_dim}`);
      el<HTMLDivElement>("disabled-overlay").hidden = true;
    })
    .catch(() => {
      setStatus("no checkpoint loaded - start the service with one", true);
      el<HTMLDivElement>("disabled-overlay").hidden = false;
    });

  syncControls();
}

document.addEventListener("DOMContentLoaded", wire);
