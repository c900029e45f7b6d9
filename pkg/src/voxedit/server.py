"""HTTP service for the slice-viewer UI and scripts: dataset listing, slice
images, stateless click-driven segmentation, label persistence, and the
uncertainty-ranked annotation queue.

The model and dataset index are loaded once at startup and treated as
immutable; label writes go through a single lock. Segmentation is stateless:
every request carries its full ClickSet, so identical requests are
byte-identical responses.
"""

from __future__ import annotations

import io
import json
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import evaluate, network, rle, volio
from .guidance import Click, ClickSet
from .tensorops import LabelMap, Volume


class ServerState:
    def __init__(self, data_root: str | Path, model_path: str | Path, rank_path=None):
        self.data_root = Path(data_root)
        self.records = {r.case_id: r for r in volio.scan_dataset(self.data_root)}
        self.num_labels = next(iter(self.records.values())).num_labels if self.records else 0
        self.params = network.load_params(model_path)
        if self.records and self.params.config.num_classes != self.num_labels + 1:
            raise ValueError(
                f"model predicts {self.params.config.num_classes - 1} labels, "
                f"dataset declares {self.num_labels}"
            )
        self.scores: dict[str, evaluate.UncertaintyScore] = {}
        if rank_path is not None:
            ranking = json.loads(Path(rank_path).read_text())
            for entry in ranking["ranking"]:
                self.scores[entry["case_id"]] = evaluate.UncertaintyScore(
                    entry["case_id"], entry["epistemic"], entry["aleatoric"]
                )
        self._volumes: dict[str, Volume] = {}
        self._labels: dict[str, LabelMap] = {}
        self._write_lock = threading.Lock()
        self.ready = True

    def volume(self, case_id: str) -> Volume:
        if case_id not in self._volumes:
            self._volumes[case_id] = volio.load_volume(self.records[case_id].image_path)
        return self._volumes[case_id]

    def labels(self, case_id: str) -> LabelMap | None:
        rec = self.records[case_id]
        if not rec.labeled:
            return None
        if case_id not in self._labels:
            self._labels[case_id] = volio.load_labels(rec.label_path)
        return self._labels[case_id]


def _slice_plane(data: np.ndarray, axis: str, index: int) -> np.ndarray:
    if axis == "z":
        return data[index]
    if axis == "y":
        return data[:, index]
    return data[:, :, index]


_AXIS_DIM = {"z": 0, "y": 1, "x": 2}


def create_app(data_root, model_path, rank_path=None, ui_dir=None) -> FastAPI:
    app = FastAPI(title="voxedit")
    state = ServerState(data_root, model_path, rank_path)
    app.state.voxedit = state

    def error(status: int, detail, **extra):
        return JSONResponse({"detail": detail, **extra}, status_code=status)

    @app.get("/api/cases")
    def list_cases():
        if not state.ready:
            return error(503, "dataset still loading")
        out = []
        for case_id in sorted(state.records):
            rec = state.records[case_id]
            header = volio._read_sidecar(rec.image_path)
            entry = {
                "case_id": case_id,
                "labeled": rec.labeled,
                "shape": [header["depth"], header["height"], header["width"]],
                "num_labels": rec.num_labels,
            }
            if case_id in state.scores:
                entry["uncertainty"] = state.scores[case_id].combined
            out.append(entry)
        return out

    @app.get("/api/cases/{case_id}/slice")
    def get_slice(case_id: str, axis: str = "z", index: int = 0):
        if case_id not in state.records:
            return error(404, f"unknown case {case_id}")
        if axis not in _AXIS_DIM:
            return error(400, f"axis must be one of z, y, x (got {axis!r})")
        vol = state.volume(case_id)
        extent = vol.shape[_AXIS_DIM[axis]]
        if not 0 <= index < extent:
            return error(400, f"index {index} out of range for axis {axis} (0..{extent - 1})")
        plane = _slice_plane(vol.data[0], axis, index)
        lo, hi = float(vol.data[0].min()), float(vol.data[0].max())
        degenerate = hi <= lo
        if degenerate:
            px = np.zeros(plane.shape, dtype=np.uint8)
        else:
            px = np.clip((plane - lo) / (hi - lo) * 255.0, 0, 255).astype(np.uint8)
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(px, mode="L").save(buf, format="PNG")
        return Response(
            content=buf.getvalue(),
            media_type="image/png",
            headers={
                "X-Window-Min": repr(lo),
                "X-Window-Max": repr(hi),
                "X-Degenerate-Window": "1" if degenerate else "0",
            },
        )

    @app.post("/api/cases/{case_id}/segment")
    async def segment(case_id: str, request: Request):
        if case_id not in state.records:
            return error(404, f"unknown case {case_id}")
        body = await request.json()
        vol = state.volume(case_id)
        L = state.records[case_id].num_labels
        try:
            clicks = ClickSet.from_json({"num_labels": body.get("num_labels", L), **body})
        except (KeyError, TypeError, ValueError) as e:
            return error(422, f"malformed ClickSet: {e}")
        if clicks.num_labels != L:
            return error(422, f"num_labels {clicks.num_labels} does not match case ({L})")
        for c in clicks.clicks:
            if not 0 <= c.label <= L or not c.in_bounds(vol.shape):
                return error(
                    422,
                    "click out of bounds",
                    click={"label": c.label, "z": c.z, "y": c.y, "x": c.x},
                )
        pred = evaluate.predict_with_clicks(state.params, vol, clicks)
        payload = {"mask": rle.encode_labelmap(pred)}
        gt = state.labels(case_id)
        if gt is not None:
            payload["dice_per_label"] = {
                str(k): evaluate.dice(pred, gt, k) for k in range(1, L + 1)
            }
        return payload

    @app.get("/api/next")
    def next_case(key: str = evaluate.KEY_COMBINED):
        if key not in evaluate.RANK_KEYS:
            return error(400, f"key must be one of {evaluate.RANK_KEYS}")
        if not state.scores:
            return error(409, "no ranking computed; POST /api/rank first")
        pool = [s for cid, s in state.scores.items()
                if cid in state.records and not state.records[cid].labeled]
        if not pool:
            return error(404, "unlabeled pool exhausted")
        order = evaluate.rank_unlabeled(pool, key)
        top = order[0]
        return {"case_id": top, "score": state.scores[top].value(key)}

    @app.post("/api/cases/{case_id}/labels")
    async def post_labels(case_id: str, request: Request):
        if case_id not in state.records:
            return error(404, f"unknown case {case_id}")
        body = await request.json()
        rec = state.records[case_id]
        try:
            mask = rle.decode_labelmap(body, num_labels=rec.num_labels)
        except rle.RleError as e:
            return error(422, str(e))
        vol_header = volio._read_sidecar(rec.image_path)
        case_shape = (vol_header["depth"], vol_header["height"], vol_header["width"])
        if tuple(mask.shape) != case_shape:
            return error(409, f"mask shape {tuple(mask.shape)} != case shape {case_shape}")
        with state._write_lock:
            label_path = state.data_root / "labels" / f"{case_id}.lab"
            volio.save_labels(mask, label_path)
            rec.label_path = label_path
            state._labels.pop(case_id, None)
        return Response(status_code=204)

    @app.post("/api/rank")
    async def compute_rank(request: Request):
        body = await request.json() if int(request.headers.get("content-length") or 0) else {}
        passes = int(body.get("passes", 10))
        seed = int(body.get("seed", 0))
        unlabeled = [cid for cid, r in state.records.items() if not r.labeled]
        if not unlabeled:
            return error(409, "no unlabeled cases to rank")
        with state._write_lock:
            for cid in unlabeled:
                state.scores[cid] = evaluate.score_case(
                    state.params, cid, state.volume(cid), passes, seed
                )
        order = evaluate.rank_unlabeled(
            [state.scores[c] for c in unlabeled], evaluate.KEY_COMBINED
        )
        return {"ranking": [state.scores[c].to_json() for c in order]}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/")
        def index():
            return {"service": "voxedit", "ui": "not built", "api": "/api/cases"}

    return app
