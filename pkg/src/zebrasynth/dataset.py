"""Dataset assembly: train/val splitting, COCO JSON and YOLO txt export,
annotation parsing for evaluation inputs.

Single class setup: category id 1, name "zebra". All writes go through a
temp-file-then-rename so a crashed export never leaves a partial file.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import atomic_write_text

log = logging.getLogger(__name__)

CATEGORY_ID = 1
CATEGORY_NAME = "zebra"


class DatasetError(ValueError):
    """Malformed annotation data or files."""


@dataclass(frozen=True)
class Annotation:
    """One ground-truth box, COCO-style xywh in absolute pixels."""

    image_id: str | int
    x: float
    y: float
    w: float
    h: float
    instance_id: int | None = None

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise DatasetError(f"box sides must be positive, got w={self.w} h={self.h}")

    @property
    def xyxy(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.w, self.y + self.h)


@dataclass(frozen=True)
class ImageRecord:
    image_id: str | int
    file_name: str
    width: int
    height: int
    meta: dict = field(default_factory=dict, compare=False)


@dataclass(eq=False)
class DatasetManifest:
    name: str
    images: list[ImageRecord]
    split: dict  # image_id -> "train" | "val"
    seed: int | None = None
    config_digest: str | None = None

    def subset(self, part: str) -> list[ImageRecord]:
        return [rec for rec in self.images if self.split.get(rec.image_id) == part]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "images": [
                {
                    "id": rec.image_id,
                    "file_name": rec.file_name,
                    "width": rec.width,
                    "height": rec.height,
                    "split": self.split.get(rec.image_id),
                    "meta": rec.meta,
                }
                for rec in self.images
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        images = []
        split = {}
        for rec in data.get("images", []):
            images.append(
                ImageRecord(
                    image_id=rec["id"],
                    file_name=rec["file_name"],
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                    meta=rec.get("meta", {}),
                )
            )
            if rec.get("split") is not None:
                split[rec["id"]] = rec["split"]
        return cls(
            name=data.get("name", "dataset"),
            images=images,
            split=split,
            seed=data.get("seed"),
            config_digest=data.get("config_digest"),
        )


def split_dataset(images: list, ratio: float, rng: np.random.Generator):
    """Shuffle, then cut at round(ratio * N): returns (train, val) lists."""
    if not images:
        raise DatasetError("cannot split an empty image list")
    if not 0.0 < ratio < 1.0:
        raise DatasetError(f"split ratio must be in (0, 1), got {ratio}")
    order = rng.permutation(len(images))
    n_train = int(math.floor(ratio * len(images) + 0.5))
    train = [images[i] for i in order[:n_train]]
    val = [images[i] for i in order[n_train:]]
    return train, val


def write_coco(manifest: DatasetManifest, annotations: list[Annotation], path) -> None:
    """COCO detection JSON: images / annotations / categories arrays."""
    by_image = {rec.image_id for rec in manifest.images}
    for ann in annotations:
        if ann.image_id not in by_image:
            raise DatasetError(f"annotation references unknown image id {ann.image_id!r}")
    doc = {
        "images": [
            {
                "id": rec.image_id,
                "file_name": rec.file_name,
                "width": rec.width,
                "height": rec.height,
            }
            for rec in manifest.images
        ],
        "annotations": [
            {
                "id": k + 1,
                "image_id": ann.image_id,
                "category_id": CATEGORY_ID,
                "bbox": [ann.x, ann.y, ann.w, ann.h],
                "area": ann.w * ann.h,
                "iscrowd": 0,
            }
            for k, ann in enumerate(annotations)
        ],
        "categories": [{"id": CATEGORY_ID, "name": CATEGORY_NAME}],
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def write_yolo(manifest: DatasetManifest, annotations: list[Annotation], out_dir) -> Path:
    """One txt per image: '0 cx cy w h' normalized, 6 decimals.

    Images without boxes still get an (empty) file so dataset loaders see
    every image as labelled.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_image: dict = {rec.image_id: [] for rec in manifest.images}
    dims = {rec.image_id: (rec.width, rec.height) for rec in manifest.images}
    for ann in annotations:
        if ann.image_id not in per_image:
            raise DatasetError(f"annotation references unknown image id {ann.image_id!r}")
        per_image[ann.image_id].append(ann)
    for rec in manifest.images:
        w_img, h_img = dims[rec.image_id]
        lines = []
        for ann in per_image[rec.image_id]:
            cx = (ann.x + ann.w / 2) / w_img
            cy = (ann.y + ann.h / 2) / h_img
            lines.append(
                f"0 {cx:.6f} {cy:.6f} {ann.w / w_img:.6f} {ann.h / h_img:.6f}"
            )
        stem = Path(rec.file_name).stem
        atomic_write_text(out_dir / f"{stem}.txt", "\n".join(lines) + ("\n" if lines else ""))
    return out_dir


def _clamp_box(x, y, w, h, width, height, where: str, strict: bool):
    x2, y2 = x + w, y + h
    if x < 0 or y < 0 or x2 > width or y2 > height:
        if strict:
            raise DatasetError(f"{where}: box ({x}, {y}, {w}, {h}) outside {width}x{height}")
        log.warning("%s: clamping out-of-bounds box (%.2f, %.2f, %.2f, %.2f)", where, x, y, w, h)
        x = min(max(x, 0.0), width)
        y = min(max(y, 0.0), height)
        x2 = min(max(x2, 0.0), width)
        y2 = min(max(y2, 0.0), height)
        w, h = x2 - x, y2 - y
    return x, y, w, h


def read_coco(path, strict: bool = False):
    """Parse a COCO ground-truth file: (images, annotations)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise DatasetError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path} is not valid JSON: {e}") from e
    for key in ("images", "annotations"):
        if key not in doc:
            raise DatasetError(f"{path}: missing COCO field '{key}'")
    images = []
    dims = {}
    for k, rec in enumerate(doc["images"]):
        for key in ("id", "width", "height"):
            if key not in rec:
                raise DatasetError(f"{path}: images[{k}] missing field '{key}'")
        images.append(
            ImageRecord(
                image_id=rec["id"],
                file_name=rec.get("file_name", str(rec["id"])),
                width=int(rec["width"]),
                height=int(rec["height"]),
            )
        )
        dims[rec["id"]] = (int(rec["width"]), int(rec["height"]))
    annotations = []
    for k, rec in enumerate(doc["annotations"]):
        where = f"{path}: annotations[{k}]"
        for key in ("image_id", "bbox"):
            if key not in rec:
                raise DatasetError(f"{where} missing field '{key}'")
        bbox = rec["bbox"]
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise DatasetError(f"{where}: bbox must be [x, y, w, h], got {bbox!r}")
        if rec["image_id"] not in dims:
            raise DatasetError(f"{where}: unknown image id {rec['image_id']!r}")
        w_img, h_img = dims[rec["image_id"]]
        x, y, w, h = _clamp_box(*map(float, bbox), w_img, h_img, where, strict)
        annotations.append(Annotation(rec["image_id"], x, y, w, h))
    return images, annotations


def read_coco_detections(path, strict: bool = False):
    """Parse a COCO results list: [{image_id, bbox, score}, ...]."""
    from .evaluation import Detection

    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise DatasetError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(doc, list):
        raise DatasetError(f"{path}: detection results must be a JSON array")
    out = []
    for k, rec in enumerate(doc):
        where = f"{path}: results[{k}]"
        for key in ("image_id", "bbox", "score"):
            if key not in rec:
                raise DatasetError(f"{where} missing field '{key}'")
        x, y, w, h = map(float, rec["bbox"])
        if w <= 0 or h <= 0:
            if strict:
                raise DatasetError(f"{where}: empty box")
            continue
        out.append(
            Detection(rec["image_id"], (x, y, x + w, y + h), float(rec["score"]))
        )
    return out


def _parse_yolo_line(line: str, where: str, expect_conf: bool):
    parts = line.split()
    if len(parts) not in (5, 6):
        raise DatasetError(
            f"{where}: expected 'class cx cy w h [conf]' (5 or 6 fields), got {len(parts)}"
        )
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise DatasetError(f"{where}: non-numeric field in {line!r}") from None
    conf = None
    if len(parts) == 6:
        conf = vals[5]
    elif expect_conf:
        conf = 1.0
    return vals[1], vals[2], vals[3], vals[4], conf


def read_yolo_dir(
    dir_path,
    image_sizes,
    detections: bool = False,
    strict: bool = False,
):
    """Parse a directory of YOLO txt files into annotations or detections.

    image_sizes: either a single (width, height) applied to every file or
    a mapping from file stem to (width, height). The file stem becomes
    the image id.
    """
    from .evaluation import Detection

    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise DatasetError(f"{dir_path} is not a directory")
    out = []
    for txt in sorted(dir_path.glob("*.txt")):
        stem = txt.stem
        if isinstance(image_sizes, dict):
            if stem not in image_sizes:
                raise DatasetError(f"{txt}: no image size known for '{stem}'")
            w_img, h_img = image_sizes[stem]
        else:
            w_img, h_img = image_sizes
        for ln, line in enumerate(txt.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            where = f"{txt}:{ln}"
            cx, cy, w, h, conf = _parse_yolo_line(line, where, detections)
            x = (cx - w / 2) * w_img
            y = (cy - h / 2) * h_img
            bw = w * w_img
            bh = h * h_img
            x, y, bw, bh = _clamp_box(x, y, bw, bh, w_img, h_img, where, strict)
            if bw <= 0 or bh <= 0:
                if strict:
                    raise DatasetError(f"{where}: empty box after clamping")
                continue
            if detections:
                out.append(Detection(stem, (x, y, x + bw, y + bh), conf))
            else:
                out.append(Annotation(stem, x, y, bw, bh))
    return out


def read_annotations(
    path,
    format: str,
    image_sizes=None,
    detections: bool = False,
    strict: bool = False,
):
    """Unified annotation reader.

    format 'coco': path is a JSON file (full dict for ground truth, a
    results array when detections=True). format 'yolo': path is a txt
    directory and image_sizes is required.
    """
    if format == "coco":
        if detections:
            return read_coco_detections(path, strict=strict)
        return read_coco(path, strict=strict)[1]
    if format == "yolo":
        if image_sizes is None:
            raise DatasetError("YOLO parsing needs image_sizes (boxes are normalized)")
        return read_yolo_dir(path, image_sizes, detections=detections, strict=strict)
    raise DatasetError(f"unknown annotation format {format!r}")


def save_manifest(manifest: DatasetManifest, path) -> None:
    atomic_write_text(path, json.dumps(manifest.to_dict(), sort_keys=True, indent=1) + "\n")


def load_manifest(path) -> DatasetManifest:
    try:
        return DatasetManifest.from_dict(json.loads(Path(path).read_text()))
    except OSError as e:
        raise DatasetError(f"cannot read manifest {path}: {e}") from e
    except (json.JSONDecodeError, KeyError) as e:
        raise DatasetError(f"malformed manifest {path}: {e}") from e
