/** UI state machine: the click list is the single source of truth, every
 * interaction resends the full list, and slice navigation never touches
 * clicks or the overlay. At most one segment request is in flight; newer
 * requests coalesce to the latest click list. */

import { ApiClient, CaseInfo, ClickSetPayload, UiClick } from "./api.js";
import { DecodedMask, decodeMask } from "./rle.js";
import { Axis, axisExtent, canvasPointToVoxel, Voxel } from "./slicing.js";

export interface StateSnapshot {
  caseInfo: CaseInfo | null;
  axis: Axis;
  index: number;
  activeLabel: number;
  clicks: UiClick[];
  overlay: DecodedMask | null;
  dice: Record<string, number> | null;
  opacity: number;
  zoom: number;
  busy: boolean;
  notice: string;
}

export class ViewerState {
  caseInfo: CaseInfo | null = null;
  axis: Axis = "z";
  index = 0;
  activeLabel = 1;
  clicks: UiClick[] = [];
  overlay: DecodedMask | null = null;
  dice: Record<string, number> | null = null;
  opacity = 0.45;
  zoom = 8;
  notice = "";

  private inFlight = false;
  private pending = false;
  private listeners: (() => void)[] = [];

  constructor(private api: ApiClient) {}

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  snapshot(): StateSnapshot {
    return {
      caseInfo: this.caseInfo,
      axis: this.axis,
      index: this.index,
      activeLabel: this.activeLabel,
      clicks: [...this.clicks],
      overlay: this.overlay,
      dice: this.dice,
      opacity: this.opacity,
      zoom: this.zoom,
      busy: this.inFlight,
      notice: this.notice,
    };
  }

  /** Exactly what will be POSTed: mirrors the on-screen click list. */
  clickPayload(): ClickSetPayload {
    return {
      num_labels: this.caseInfo ? this.caseInfo.num_labels : 0,
      clicks: [...this.clicks],
    };
  }

  loadCase(info: CaseInfo): void {
    this.caseInfo = info;
    this.axis = "z";
    this.index = Math.floor(info.shape[0] / 2);
    this.activeLabel = Math.min(this.activeLabel, info.num_labels) || 1;
    this.clicks = [];
    this.overlay = null;
    this.dice = null;
    this.notice = "";
    this.emit();
  }

  setAxis(axis: Axis): void {
    if (!this.caseInfo) return;
    this.axis = axis;
    this.index = Math.min(this.index, axisExtent(this.caseInfo.shape, axis) - 1);
    this.emit();
  }

  setIndex(index: number): void {
    if (!this.caseInfo) return;
    const extent = axisExtent(this.caseInfo.shape, this.axis);
    this.index = Math.max(0, Math.min(extent - 1, index));
    this.emit();
  }

  setActiveLabel(label: number): void {
    this.activeLabel = label;
    this.emit();
  }

  setOpacity(opacity: number): void {
    this.opacity = opacity;
    this.emit();
  }

  /** Map a canvas-relative CSS point to a voxel and place the active-label
   * click there; out-of-image positions are ignored with a visual cue. */
  placeClickAt(cssX: number, cssY: number): Voxel | null {
    if (!this.caseInfo) return null;
    const voxel = canvasPointToVoxel(
      cssX, cssY, this.caseInfo.shape, this.axis, this.index, this.zoom
    );
    if (voxel === null) {
      this.notice = "click outside the image";
      this.emit();
      return null;
    }
    this.clicks.push({ label: this.activeLabel, ...voxel });
    void this.requestSegment();
    return voxel;
  }

  autoSegment(): Promise<void> {
    this.clicks = [];
    return this.requestSegment();
  }

  undoClick(): Promise<void> {
    this.clicks.pop();
    return this.requestSegment();
  }

  clearClicks(): Promise<void> {
    this.clicks = [];
    return this.requestSegment();
  }

  /** Single-in-flight segment request; interactions arriving while busy
   * coalesce into one trailing request with the latest click list. */
  async requestSegment(): Promise<void> {
    if (!this.caseInfo) return;
    if (this.inFlight) {
      this.pending = true;
      return;
    }
    this.inFlight = true;
    this.notice = "";
    this.emit();
    try {
      const resp = await this.api.segment(this.caseInfo.case_id, this.clickPayload());
      this.overlay = decodeMask(resp.mask);
      this.dice = resp.dice_per_label ?? null;
    } catch (err) {
      this.notice = err instanceof Error ? err.message : String(err);
    } finally {
      this.inFlight = false;
      this.emit();
      if (this.pending) {
        this.pending = false;
        void this.requestSegment();
      }
    }
  }

  async fetchNextCase(key: string, allCases: CaseInfo[]): Promise<void> {
    try {
      const next = await this.api.nextCase(key);
      const info = allCases.find((c) => c.case_id === next.case_id);
      if (info) this.loadCase(info);
      else this.notice = `unknown case ${next.case_id}`;
    } catch (err) {
      this.notice = err instanceof Error ? err.message : String(err);
    }
    this.emit();
  }

  async saveOverlayAsLabels(): Promise<boolean> {
    if (!this.caseInfo || !this.overlay) return false;
    const { encodeMask } = await import("./rle.js");
    try {
      await this.api.saveLabels(this.caseInfo.case_id, encodeMask(this.overlay));
      this.caseInfo.labeled = true;
      this.notice = "labels saved";
      this.emit();
      return true;
    } catch (err) {
      this.notice = err instanceof Error ? err.message : String(err);
      this.emit();
      return false;
    }
  }
}
