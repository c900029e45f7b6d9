"""Run-length encoding of label maps over the fixed (z, y, x) linearization;
the wire format for segmentation masks.

    {"shape": [d, h, w], "labels": {"1": [[start, len], ...], ...}}
"""

from __future__ import annotations

import numpy as np

from .tensorops import LabelMap, Shape3D


class RleError(ValueError):
    """Malformed or inconsistent run-length payload."""


def encode_labelmap(m: LabelMap) -> dict:
    flat = m.labels.ravel()
    labels: dict[str, list[list[int]]] = {}
    for k in range(1, m.num_labels + 1):
        idx = np.flatnonzero(flat == k)
        if idx.size == 0:
            continue
        breaks = np.flatnonzero(np.diff(idx) > 1)
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks, [idx.size - 1]])
        labels[str(k)] = [
            [int(idx[s]), int(idx[e] - idx[s] + 1)] for s, e in zip(starts, ends)
        ]
    return {"shape": list(m.shape), "labels": labels}


def decode_labelmap(d: dict, num_labels: int | None = None) -> LabelMap:
    """Validates bounds, per-label ordering, and global non-overlap."""
    try:
        shape = Shape3D(*(int(v) for v in d["shape"]))
    except (KeyError, TypeError, ValueError) as e:
        raise RleError(f"bad shape field: {e}") from e
    shape.validate()
    n_vox = shape.voxels
    raw = d.get("labels", {})
    if not isinstance(raw, dict):
        raise RleError("labels must be an object keyed by label value")

    all_runs: list[tuple[int, int, int]] = []  # (start, length, label)
    max_label = 0
    for key, runs in raw.items():
        try:
            label = int(key)
        except ValueError as e:
            raise RleError(f"label key {key!r} is not an integer") from e
        if label < 1:
            raise RleError(f"label {label} must be >= 1")
        max_label = max(max_label, label)
        prev_end = -1
        for run in runs:
            if not (isinstance(run, (list, tuple)) and len(run) == 2):
                raise RleError(f"run {run!r} must be a [start, len] pair")
            start, length = int(run[0]), int(run[1])
            if length < 1:
                raise RleError(f"run at {start} has non-positive length {length}")
            if start < 0 or start + length > n_vox:
                raise RleError(f"run [{start}, {length}] escapes {n_vox} voxels")
            if start <= prev_end:
                raise RleError(f"runs of label {label} are unsorted or overlap at {start}")
            prev_end = start + length - 1
            all_runs.append((start, length, label))

    all_runs.sort()
    prev_end = -1
    for start, length, label in all_runs:
        if start <= prev_end:
            raise RleError(f"overlapping runs around voxel {start}")
        prev_end = start + length - 1

    L = num_labels if num_labels is not None else max(max_label, 1)
    if max_label > L:
        raise RleError(f"label {max_label} exceeds num_labels={L}")
    flat = np.zeros(n_vox, dtype=np.uint8)
    for start, length, label in all_runs:
        flat[start : start + length] = label
    return LabelMap(shape, flat.reshape(tuple(shape)), L)
