"""PNG views of rasters and pose volumes. Images are drawn north-up."""
from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

from .pose_matcher import PoseVolume
from .rasterizer import RasterMap
from .taxonomy import ClassTaxonomy, Group

BACKGROUND = (245, 243, 238)
_KNOWN = {
    "building": (190, 120, 100),
    "parking": (200, 200, 210),
    "grass": (150, 205, 130),
    "forest": (80, 150, 90),
    "water": (120, 170, 230),
    "playground": (220, 210, 140),
    "major_road": (90, 90, 90),
    "minor_road": (140, 140, 140),
    "path": (200, 150, 110),
    "cycleway": (90, 120, 200),
    "rail": (60, 40, 70),
    "tree": (30, 110, 40),
}


def class_color(name: str) -> tuple[int, int, int]:
    if name in _KNOWN:
        return _KNOWN[name]
    h = hashlib.sha256(name.encode()).digest()
    return h[0] // 2 + 40, h[1] // 2 + 40, h[2] // 2 + 40


def raster_to_image(raster: RasterMap, taxonomy: ClassTaxonomy) -> Image.Image:
    """Palette image: areas underneath, then ways, then nodes."""
    raster.validate(taxonomy)
    palette = [BACKGROUND]
    index = np.zeros(raster.planes.shape[1:], dtype=np.uint8)
    for g in Group:
        classes = taxonomy.classes(g)
        lut = np.zeros(taxonomy.size(g), dtype=np.uint8)
        for c in classes:
            lut[c.class_id] = len(palette)
            palette.append(class_color(c.name))
        if len(palette) > 256:
            raise ValueError("taxonomy has too many classes for a palette image")
        ids = raster.planes[int(g)]
        index = np.where(ids > 0, lut[ids], index)
    img = Image.fromarray(np.ascontiguousarray(index[::-1]))
    flat = [v for rgb in palette for v in rgb]
    img.putpalette(flat + [0] * (768 - len(flat)))  # turns the L image into P
    return img


def save_raster_png(raster: RasterMap, taxonomy: ClassTaxonomy, path) -> None:
    raster_to_image(raster, taxonomy).save(path, format="PNG")


def volume_heatmap(volume: PoseVolume) -> Image.Image:
    """16-bit grayscale of the max over headings, rescaled to the full range."""
    m = volume.values.max(axis=2)
    lo, hi = float(m.min()), float(m.max())
    scaled = np.zeros_like(m) if hi <= lo else (m - lo) / (hi - lo)
    arr = np.round(scaled[::-1] * 65535).astype(np.uint16)
    return Image.fromarray(np.ascontiguousarray(arr))


def save_heatmap_png(volume: PoseVolume, path) -> None:
    volume_heatmap(volume).save(path, format="PNG")
