/** Typed client for the segmentation server; the UI's only network surface. */

import type { MaskRle } from "./rle.js";

export interface CaseInfo {
  case_id: string;
  labeled: boolean;
  shape: [number, number, number];
  num_labels: number;
  uncertainty?: number;
}

export interface UiClick {
  label: number;
  z: number;
  y: number;
  x: number;
}

export interface ClickSetPayload {
  num_labels: number;
  clicks: UiClick[];
}

export interface SegmentResponse {
  mask: MaskRle;
  dice_per_label?: Record<string, number>;
}

export interface NextCase {
  case_id: string;
  score: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init)
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && body.detail) detail = String(body.detail);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    if (resp.status === 204) return undefined as T;
    return (await resp.json()) as T;
  }

  cases(): Promise<CaseInfo[]> {
    return this.json("/api/cases");
  }

  sliceUrl(caseId: string, axis: string, index: number): string {
    return `${this.base}/api/cases/${caseId}/slice?axis=${axis}&index=${index}`;
  }

  segment(caseId: string, payload: ClickSetPayload): Promise<SegmentResponse> {
    return this.json(`/api/cases/${caseId}/segment`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  nextCase(key: string): Promise<NextCase> {
    return this.json(`/api/next?key=${key}`);
  }

  saveLabels(caseId: string, mask: MaskRle): Promise<void> {
    return this.json(`/api/cases/${caseId}/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(mask),
    });
  }
}
