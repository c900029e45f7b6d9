"""Volume/label file formats, dataset index, and the synthetic case generator.

File format is deliberately dependency-free: a JSON sidecar header next to a
raw little-endian payload, so any language can parse it.

    X.vol  + X.vol.json   {"version":1,"channels":C,"depth":D,"height":H,"width":W,"dtype":"f32le"}
    X.lab  + X.lab.json   {"version":1,"depth":D,"height":H,"width":W,"num_labels":L,"dtype":"u8"}

Dataset layout: <root>/images/<case_id>.vol, <root>/labels/<case_id>.lab,
optional <root>/dataset.json manifest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensorops import LabelMap, SeededRng, Shape3D, Volume


class FormatError(ValueError):
    """Header/payload inconsistency in a .vol/.lab file."""


@dataclass
class CaseRecord:
    case_id: str
    image_path: Path
    label_path: Path | None
    num_labels: int

    @property
    def labeled(self) -> bool:
        return self.label_path is not None


@dataclass
class SynthConfig:
    """Knobs for the ellipsoidal-blob phantom generator."""

    shape: Shape3D = Shape3D(32, 32, 32)
    num_labels: int = 1
    blobs_per_label: tuple[int, int] = (1, 1)
    intensity_offsets: tuple[float, ...] | None = None  # default: 1.0, 1.5, 2.0, ...
    noise_std: float = 0.8
    min_blob_radius: int = 2
    max_blob_radius: int = 5

    def __post_init__(self):
        self.shape = Shape3D(*self.shape).validate()
        if self.num_labels < 1:
            raise ValueError("num_labels must be >= 1")
        if self.min_blob_radius < 1:
            raise ValueError("min_blob_radius must be >= 1")
        if self.max_blob_radius < self.min_blob_radius:
            raise ValueError("max_blob_radius < min_blob_radius")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.intensity_offsets is None:
            self.intensity_offsets = tuple(1.0 + 0.5 * k for k in range(self.num_labels))
        self.intensity_offsets = tuple(float(v) for v in self.intensity_offsets)
        if len(self.intensity_offsets) != self.num_labels:
            raise ValueError("need one intensity offset per label")
        if any(abs(o) < self.noise_std for o in self.intensity_offsets):
            raise ValueError("offsets must differ from background by >= noise_std")

    def to_json(self) -> dict:
        return {
            "shape": list(self.shape),
            "num_labels": self.num_labels,
            "blobs_per_label": list(self.blobs_per_label),
            "intensity_offsets": list(self.intensity_offsets),
            "noise_std": self.noise_std,
            "min_blob_radius": self.min_blob_radius,
            "max_blob_radius": self.max_blob_radius,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SynthConfig":
        return cls(
            shape=Shape3D(*d["shape"]),
            num_labels=d["num_labels"],
            blobs_per_label=tuple(d["blobs_per_label"]),
            intensity_offsets=tuple(d["intensity_offsets"]),
            noise_std=d["noise_std"],
            min_blob_radius=d["min_blob_radius"],
            max_blob_radius=d["max_blob_radius"],
        )


def _write_sidecar(path: Path, header: dict) -> None:
    Path(str(path) + ".json").write_text(json.dumps(header, sort_keys=True) + "\n")


def _read_sidecar(path: Path) -> dict:
    side = Path(str(path) + ".json")
    if not side.exists():
        raise FormatError(f"missing sidecar header {side}")
    return json.loads(side.read_text())


def save_volume(v: Volume, path: str | Path) -> None:
    path = Path(path)
    v.require_finite("volume payload")
    header = {
        "version": 1,
        "channels": v.channels,
        "depth": v.shape.depth,
        "height": v.shape.height,
        "width": v.shape.width,
        "dtype": "f32le",
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(v.data.astype("<f4").tobytes())
    _write_sidecar(path, header)


def load_volume(path: str | Path) -> Volume:
    path = Path(path)
    h = _read_sidecar(path)
    if h.get("version") != 1:
        raise FormatError(f"unsupported volume version {h.get('version')}")
    if h.get("dtype") != "f32le":
        raise FormatError(f"unsupported dtype {h.get('dtype')}")
    shape = Shape3D(h["depth"], h["height"], h["width"])
    expected = h["channels"] * shape.voxels * 4
    payload = path.read_bytes()
    if len(payload) != expected:
        raise FormatError(f"payload is {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(h["channels"], *shape)
    return Volume(shape, data.copy())


def save_labels(m: LabelMap, path: str | Path) -> None:
    path = Path(path)
    header = {
        "version": 1,
        "depth": m.shape.depth,
        "height": m.shape.height,
        "width": m.shape.width,
        "num_labels": m.num_labels,
        "dtype": "u8",
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(m.labels.tobytes())
    _write_sidecar(path, header)


def load_labels(path: str | Path) -> LabelMap:
    path = Path(path)
    h = _read_sidecar(path)
    if h.get("version") != 1:
        raise FormatError(f"unsupported label version {h.get('version')}")
    if h.get("dtype") != "u8":
        raise FormatError(f"unsupported dtype {h.get('dtype')}")
    shape = Shape3D(h["depth"], h["height"], h["width"])
    payload = path.read_bytes()
    if len(payload) != shape.voxels:
        raise FormatError(f"payload is {len(payload)} bytes, header implies {shape.voxels}")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(tuple(shape))
    top = int(labels.max()) if labels.size else 0
    if top > h["num_labels"]:
        raise FormatError(f"label value {top} exceeds declared num_labels={h['num_labels']}")
    return LabelMap(shape, labels.copy(), h["num_labels"])


def generate_synthetic_case(cfg: SynthConfig, rng: SeededRng) -> tuple[Volume, LabelMap]:
    """Ellipsoidal blobs per label (later labels overwrite earlier), image =
    per-label intensity offset over zero background plus Gaussian noise."""
    d, h, w = cfg.shape
    if 2 * cfg.min_blob_radius + 1 > min(cfg.shape):
        raise ValueError(
            f"cannot place a blob of radius {cfg.min_blob_radius} inside {tuple(cfg.shape)}"
        )
    zz, yy, xx = np.meshgrid(
        np.arange(d), np.arange(h), np.arange(w), indexing="ij"
    )
    for _ in range(64):
        labels = np.zeros((d, h, w), dtype=np.uint8)
        for k in range(1, cfg.num_labels + 1):
            lo, hi = cfg.blobs_per_label
            n_blobs = int(rng.integers(lo, hi + 1))
            for _b in range(n_blobs):
                semi = rng.uniform(cfg.min_blob_radius, cfg.max_blob_radius, size=3)
                margins = [min(math.ceil(s), (dim - 1) // 2) for s, dim in zip(semi, (d, h, w))]
                center = [
                    float(rng.uniform(m, dim - 1 - m)) for m, dim in zip(margins, (d, h, w))
                ]
                ell = (
                    ((zz - center[0]) / semi[0]) ** 2
                    + ((yy - center[1]) / semi[1]) ** 2
                    + ((xx - center[2]) / semi[2]) ** 2
                ) <= 1.0
                labels[ell] = k
        if all(np.any(labels == k) for k in range(1, cfg.num_labels + 1)):
            break
    else:
        raise ValueError("could not generate a case with every label nonempty")

    image = np.zeros((d, h, w), dtype=np.float32)
    for k in range(1, cfg.num_labels + 1):
        image[labels == k] = cfg.intensity_offsets[k - 1]
    if cfg.noise_std > 0:
        image = image + rng.normal(0.0, cfg.noise_std, size=image.shape).astype(np.float32)
    vol = Volume(cfg.shape, image[None].astype(np.float32))
    return vol, LabelMap(cfg.shape, labels, cfg.num_labels)


MANIFEST_NAME = "dataset.json"


def write_manifest(root: str | Path, cfg: SynthConfig, case_ids: list[str], unlabeled: list[str]) -> None:
    root = Path(root)
    manifest = {
        "version": 1,
        "num_labels": cfg.num_labels,
        "synth": cfg.to_json(),
        "cases": case_ids,
        "unlabeled": unlabeled,
    }
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def scan_dataset(root: str | Path) -> list[CaseRecord]:
    """Index <root>/images and <root>/labels into CaseRecords, sorted by case_id.

    num_labels comes from the manifest when present, else from the maximum
    declared across label sidecars.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} does not exist")
    images_dir = root / "images"
    labels_dir = root / "labels"
    manifest_labels = None
    mpath = root / MANIFEST_NAME
    if mpath.exists():
        manifest_labels = json.loads(mpath.read_text()).get("num_labels")

    cases: dict[str, Path] = {}
    if images_dir.is_dir():
        for p in sorted(images_dir.iterdir()):
            if p.name.endswith(".json") or p.is_dir():
                continue
            case_id = p.name.rsplit(".", 1)[0]
            if case_id in cases:
                raise ValueError(f"duplicate case_id {case_id!r} ({cases[case_id].name}, {p.name})")
            cases[case_id] = p

    label_sidecar_max = 0
    records = []
    for case_id in sorted(cases):
        label_path = labels_dir / f"{case_id}.lab"
        has_label = label_path.exists()
        if has_label:
            lh = _read_sidecar(label_path)
            label_sidecar_max = max(label_sidecar_max, int(lh["num_labels"]))
        records.append(
            CaseRecord(
                case_id=case_id,
                image_path=cases[case_id],
                label_path=label_path if has_label else None,
                num_labels=0,  # filled below
            )
        )
    num_labels = manifest_labels if manifest_labels is not None else label_sidecar_max
    if records and not num_labels:
        raise ValueError("cannot determine num_labels: no manifest and no labeled cases")
    for r in records:
        r.num_labels = int(num_labels)
    return records
