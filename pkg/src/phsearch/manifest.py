"""Dataset manifests: image entries with object annotations.

Manifest JSON:

    {"images": [
        {"id": "db-000", "path": "images/db-000.pgm", "h": 32, "w": 32,
         "objects": [
             {"category": "pattern-0",
              "box": {"x0": 0, "y0": 0, "x1": 15, "y1": 15},
              "segmentation": {"rle": [...], "h": 32, "w": 32}}]}
    ]}

``path`` is resolved relative to the manifest file.  An entry may instead
carry ``generator`` (e.g. {"kind": "flat", "value": 0.5}) for inline pixels,
used by small fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadGeometry, FormatError, UnknownImageError
from .image import read_image
from .prompts import Box, Segment


@dataclass
class ObjectAnnotation:
    category: str
    box: Box
    segmentation: Segment | None = None


@dataclass
class ImageEntry:
    image_id: str
    h: int
    w: int
    path: str | None = None
    generator: dict | None = None
    objects: list[ObjectAnnotation] = field(default_factory=list)


@dataclass
class DatasetManifest:
    images: list[ImageEntry]
    root: Path = Path(".")

    def __post_init__(self):
        self._by_id = {}
        for entry in self.images:
            if entry.image_id in self._by_id:
                raise FormatError(f"duplicate image id {entry.image_id!r}")
            for obj in entry.objects:
                b = obj.box
                if not (0 <= b.x0 <= b.x1 < entry.w and 0 <= b.y0 <= b.y1 < entry.h):
                    raise BadGeometry(
                        f"object box {b} outside {entry.w}x{entry.h} image "
                        f"{entry.image_id!r}"
                    )
            self._by_id[entry.image_id] = entry

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._by_id

    def entry(self, image_id: str) -> ImageEntry:
        try:
            return self._by_id[image_id]
        except KeyError:
            raise UnknownImageError(f"unknown image id {image_id!r}") from None

    def categories_of(self, image_id: str) -> set[str]:
        return {obj.category for obj in self.entry(image_id).objects}

    def category_count(self, image_id: str, category: str) -> int:
        return sum(1 for o in self.entry(image_id).objects if o.category == category)

    def all_categories(self) -> set[str]:
        return {o.category for e in self.images for o in e.objects}

    def load_image(self, image_id: str) -> np.ndarray:
        entry = self.entry(image_id)
        if entry.generator is not None:
            return _generate_pixels(entry)
        if entry.path is None:
            raise FormatError(f"image {image_id!r} has neither path nor generator")
        img = read_image(self.root / entry.path)
        if img.shape[:2] != (entry.h, entry.w):
            raise BadGeometry(
                f"{entry.path}: file is {img.shape[1]}x{img.shape[0]}, manifest says "
                f"{entry.w}x{entry.h}"
            )
        return img

    def source_path(self, image_id: str) -> Path:
        entry = self.entry(image_id)
        if entry.path is None:
            raise UnknownImageError(f"image {image_id!r} has no pixel file")
        return self.root / entry.path


def _generate_pixels(entry: ImageEntry) -> np.ndarray:
    spec = entry.generator
    kind = spec.get("kind")
    if kind == "flat":
        return np.full((entry.h, entry.w, 1), float(spec.get("value", 0.5)))
    if kind == "noise":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        return rng.uniform(size=(entry.h, entry.w, 1))
    raise FormatError(f"unknown generator kind {kind!r} for image {entry.image_id!r}")


def _object_to_json(obj: ObjectAnnotation) -> dict:
    out = {
        "category": obj.category,
        "box": {"x0": obj.box.x0, "y0": obj.box.y0, "x1": obj.box.x1, "y1": obj.box.y1},
    }
    if obj.segmentation is not None:
        seg = obj.segmentation
        out["segmentation"] = {"rle": list(seg.rle), "h": seg.h, "w": seg.w}
    return out


def _object_from_json(obj: dict) -> ObjectAnnotation:
    box = obj["box"]
    seg = obj.get("segmentation")
    return ObjectAnnotation(
        category=obj["category"],
        box=Box(int(box["x0"]), int(box["y0"]), int(box["x1"]), int(box["y1"])),
        segmentation=(
            Segment(tuple(int(r) for r in seg["rle"]), int(seg["h"]), int(seg["w"]))
            if seg
            else None
        ),
    )


def manifest_to_json(manifest: DatasetManifest) -> dict:
    images = []
    for e in manifest.images:
        item = {"id": e.image_id, "h": e.h, "w": e.w,
                "objects": [_object_to_json(o) for o in e.objects]}
        if e.path is not None:
            item["path"] = e.path
        if e.generator is not None:
            item["generator"] = e.generator
        images.append(item)
    return {"images": images}


def save_manifest(path, manifest: DatasetManifest) -> None:
    with open(path, "w") as fh:
        json.dump(manifest_to_json(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or "images" not in data:
        raise FormatError(f"{path}: manifest must be an object with 'images'")
    images = []
    for item in data["images"]:
        images.append(
            ImageEntry(
                image_id=str(item["id"]),
                h=int(item["h"]),
                w=int(item["w"]),
                path=item.get("path"),
                generator=item.get("generator"),
                objects=[_object_from_json(o) for o in item.get("objects", [])],
            )
        )
    return DatasetManifest(images=images, root=path.parent)
