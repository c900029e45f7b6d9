/** DOM wiring for the slice viewer. All segmentation logic lives in
 * ViewerState; this module renders snapshots and forwards events. */

import { ApiClient, CaseInfo } from "./api.js";
import { extractSlice, labelColor, sliceToRgba } from "./overlay.js";
import { axisExtent, planeSize, voxelOnSlice, voxelToCanvasPoint } from "./slicing.js";
import { ViewerState } from "./viewstate.js";

export interface AppHandles {
  state: ViewerState;
  root: HTMLElement;
  baseCanvas: HTMLCanvasElement;
  overlayCanvas: HTMLCanvasElement;
  refreshCases: () => Promise<CaseInfo[]>;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = ""
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

export function createApp(root: HTMLElement, api: ApiClient): AppHandles {
  const state = new ViewerState(api);
  let cases: CaseInfo[] = [];

  const caseSelect = el("select", { id: "case-select" });
  const axisButtons = (["z", "y", "x"] as const).map((a) =>
    el("button", { "data-axis": a, class: "axis" }, a)
  );
  const slider = el("input", { type: "range", min: "0", max: "0", value: "0", id: "slice" });
  const sliceLabel = el("span", { class: "slice-label" }, "-");
  const labelPalette = el("div", { id: "labels" });
  const opacity = el("input", {
    type: "range", min: "0", max: "100", value: "45", id: "opacity",
  });
  const autoBtn = el("button", { id: "auto" }, "auto segment");
  const undoBtn = el("button", { id: "undo" }, "undo click");
  const clearBtn = el("button", { id: "clear" }, "clear clicks");
  const saveBtn = el("button", { id: "save" }, "accept & save");
  const nextBtn = el("button", { id: "next" }, "next uncertain");
  const dicePanel = el("div", { id: "dice" });
  const noticePanel = el("div", { id: "notice" });
  const clickList = el("div", { id: "click-list" });

  const stage = el("div", { id: "stage" });
  const baseCanvas = el("canvas", { id: "base" });
  const overlayCanvas = el("canvas", { id: "overlay" });
  stage.append(baseCanvas, overlayCanvas);

  const toolbar = el("div", { id: "toolbar" });
  toolbar.append(caseSelect, ...axisButtons, slider, sliceLabel, autoBtn, undoBtn,
                 clearBtn, saveBtn, nextBtn);
  const side = el("div", { id: "side" });
  side.append(labelPalette, el("label", {}, "overlay"), opacity, dicePanel, clickList,
              noticePanel);
  root.append(toolbar, stage, side);

  function rebuildPalette() {
    labelPalette.replaceChildren();
    if (!state.caseInfo) return;
    for (let lab = 1; lab <= state.caseInfo.num_labels; lab++) {
      const [r, g, b] = labelColor(lab);
      const btn = el("button", { class: "label-btn", "data-label": String(lab) }, `label ${lab}`);
      btn.style.borderColor = `rgb(${r},${g},${b})`;
      btn.onclick = () => state.setActiveLabel(lab);
      labelPalette.append(btn);
    }
    const bg = el("button", { class: "label-btn hollow", "data-label": "0" }, "background");
    bg.onclick = () => state.setActiveLabel(0);
    labelPalette.append(bg);
  }

  function drawBase() {
    if (!state.caseInfo) return;
    const { rows, cols } = planeSize(state.caseInfo.shape, state.axis);
    baseCanvas.width = cols;
    baseCanvas.height = rows;
    for (const c of [baseCanvas, overlayCanvas]) {
      c.style.width = `${cols * state.zoom}px`;
      c.style.height = `${rows * state.zoom}px`;
    }
    const img = new Image();
    img.onload = () => {
      const ctx = baseCanvas.getContext("2d");
      if (ctx) {
        ctx.imageSmoothingEnabled = false;
        ctx.drawImage(img, 0, 0);
      }
    };
    img.src = api.sliceUrl(state.caseInfo.case_id, state.axis, state.index);
  }

  function drawOverlay() {
    if (!state.caseInfo) return;
    const { rows, cols } = planeSize(state.caseInfo.shape, state.axis);
    overlayCanvas.width = cols;
    overlayCanvas.height = rows;
    const ctx = overlayCanvas.getContext("2d");
    if (!ctx) return; // non-canvas environment: state still holds the overlay
    ctx.clearRect(0, 0, cols, rows);
    if (state.overlay) {
      const plane = extractSlice(state.overlay, state.axis, state.index);
      ctx.putImageData(new ImageData(sliceToRgba(plane, state.opacity), cols, rows), 0, 0);
    }
    // clicks on this slice: filled squares for labels, hollow for background
    for (const c of state.clicks) {
      if (!voxelOnSlice(state.axis, state.index, c)) continue;
      const { cssX, cssY } = voxelToCanvasPoint(c, state.axis, 1.0);
      const [r, g, b] = c.label > 0 ? labelColor(c.label) : [255, 255, 255];
      ctx.strokeStyle = `rgb(${r},${g},${b})`;
      ctx.lineWidth = 0.2;
      if (c.label > 0) {
        ctx.fillStyle = `rgb(${r},${g},${b})`;
        ctx.fillRect(cssX - 0.5, cssY - 0.5, 1, 1);
      }
      ctx.strokeRect(cssX - 1, cssY - 1, 2, 2);
    }
  }

  let paletteLabels = -1;

  function render() {
    const want = state.caseInfo ? state.caseInfo.num_labels : -1;
    if (want !== paletteLabels) {
      paletteLabels = want;
      rebuildPalette();
    }
    const extent = state.caseInfo ? axisExtent(state.caseInfo.shape, state.axis) : 1;
    slider.max = String(extent - 1);
    slider.value = String(state.index);
    sliceLabel.textContent = state.caseInfo ? `${state.axis}=${state.index}` : "-";
    for (const b of axisButtons) {
      b.classList.toggle("active", b.dataset.axis === state.axis);
    }
    for (const b of labelPalette.querySelectorAll("button")) {
      b.classList.toggle("active", Number(b.dataset.label) === state.activeLabel);
    }
    dicePanel.replaceChildren();
    if (state.dice) {
      for (const [lab, val] of Object.entries(state.dice)) {
        dicePanel.append(el("div", {}, `dice label ${lab}: ${val.toFixed(3)}`));
      }
    }
    clickList.replaceChildren(
      el("div", {}, `clicks: ${state.clicks.length}`),
      ...state.clicks.map((c, i) =>
        el("div", { class: "click-row" }, `${i + 1}. label ${c.label} @ (${c.z},${c.y},${c.x})`)
      )
    );
    noticePanel.textContent = state.notice;
    drawBase();
    drawOverlay();
  }

  state.onChange(render);

  caseSelect.onchange = () => {
    const info = cases.find((c) => c.case_id === caseSelect.value);
    if (info) state.loadCase(info);
  };
  for (const b of axisButtons) {
    b.onclick = () => state.setAxis(b.dataset.axis as "z" | "y" | "x");
  }
  slider.oninput = () => state.setIndex(Number(slider.value));
  opacity.oninput = () => state.setOpacity(Number(opacity.value) / 100);
  autoBtn.onclick = () => void state.autoSegment();
  undoBtn.onclick = () => void state.undoClick();
  clearBtn.onclick = () => void state.clearClicks();
  saveBtn.onclick = () => void state.saveOverlayAsLabels().then(() => refreshCases());
  nextBtn.onclick = () => void state.fetchNextCase("combined", cases);

  overlayCanvas.addEventListener("click", (ev: MouseEvent) => {
    const rect = overlayCanvas.getBoundingClientRect();
    state.placeClickAt(ev.clientX - rect.left, ev.clientY - rect.top);
  });

  async function refreshCases(): Promise<CaseInfo[]> {
    cases = await api.cases();
    caseSelect.replaceChildren(
      ...cases.map((c) =>
        el("option", { value: c.case_id },
           `${c.case_id}${c.labeled ? " [labeled]" : ""}` +
           (c.uncertainty !== undefined ? ` (u=${c.uncertainty.toExponential(2)})` : ""))
      )
    );
    return cases;
  }

  return { state, root, baseCanvas, overlayCanvas, refreshCases };
}

export async function boot(root: HTMLElement, baseUrl = ""): Promise<AppHandles> {
  const api = new ApiClient(baseUrl);
  const app = createApp(root, api);
  const cases = await app.refreshCases();
  if (cases.length) app.state.loadCase(cases[0]);
  return app;
}
