/** Typed client for the generation service. The fetch function is
 * injectable so tests can run the full client against a mock transport.
 */

import {
  EmbeddingsResponse,
  GenerateRequest,
  MetaResponse,
  PcaFitResponse,
  Provenance,
  ReferenceMetadata,
  ReferenceResponse,
} from "./types.js";

export const PROVENANCE_HEADER = "X-Repdiff-Provenance";

export interface GeneratedImage {
  /** Raw PNG bytes exactly as the service sent them. */
  blob: Uint8Array;
  provenance: Provenance | null;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body.detail ?? body);
  } catch {
    return response.statusText || `HTTP ${response.status}`;
  }
}

function decodeProvenance(header: string | null): Provenance | null {
  if (!header) return null;
  const json =
    typeof atob === "function"
      ? atob(header)
      : Buffer.from(header, "base64").toString("utf-8");
  return JSON.parse(json) as Provenance;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return (await response.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return (await response.json()) as T;
  }

  meta(): Promise<MetaResponse> {
    return this.getJson("/api/meta");
  }

  loadCheckpoint(path: string): Promise<{ checkpoint_id: string }> {
    return this.postJson("/api/checkpoint", { path });
  }

  async generate(request: GenerateRequest): Promise<GeneratedImage> {
    const response = await this.fetchFn(this.baseUrl + "/api/generate", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    const blob = new Uint8Array(await response.arrayBuffer());
    return {
      blob,
      provenance: decodeProvenance(response.headers.get(PROVENANCE_HEADER)),
    };
  }

  async uploadEmbeddings(bytes: Uint8Array): Promise<EmbeddingsResponse> {
    const response = await this.fetchFn(this.baseUrl + "/api/embeddings", {
      method: "POST",
      headers: { "Content-Type": "application/octet-stream" },
      body: bytes as unknown as BodyInit,
    });
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return (await response.json()) as EmbeddingsResponse;
  }

  fitPca(matrixId: string, k: number): Promise<PcaFitResponse> {
    return this.postJson("/api/directions/pca", { matrix_id: matrixId, K: k });
  }

  referenceFromRow(matrixId: string, row: number): Promise<ReferenceResponse> {
    return this.postJson("/api/reference", { matrix_id: matrixId, row });
  }

  referenceMetadata(refId: string): Promise<ReferenceMetadata> {
    return this.getJson(`/api/reference/${refId}`);
  }
}
