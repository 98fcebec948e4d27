"""Overlay rendering: tinted organ masks and pruning-point markers."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from .masks import MaskError
from .plant import OrganClass, PlantGraph
from .pruning import PruningPoint

DEFAULT_COLORS = {
    "main_cordon": (0, 0, 255),
    "cane": (255, 140, 0),
    "node": (0, 200, 0),
    "point": (255, 0, 0),
}


@dataclass
class RenderOptions:
    colors: dict[str, tuple[int, int, int]] = field(default_factory=lambda: dict(DEFAULT_COLORS))
    tint_opacity: float = 0.5
    marker_radius: int = 4
    tick_length: int = 10
    angle_ticks: bool = True
    background: tuple[int, int, int] = (96, 96, 96)

    def __post_init__(self):
        self.colors = {k: tuple(int(c) for c in v) for k, v in {**DEFAULT_COLORS, **self.colors}.items()}
        self.background = tuple(int(c) for c in self.background)
        if not 0.0 <= self.tint_opacity <= 1.0:
            raise ValueError("tint_opacity must be in [0, 1]")
        if self.marker_radius < 1 or self.tick_length < 0:
            raise ValueError("marker_radius must be >= 1 and tick_length >= 0")


def _tint(rgb: np.ndarray, mask: np.ndarray, color, opacity: float) -> None:
    a = int(round(opacity * 256))
    src = rgb[mask].astype(np.int32)
    rgb[mask] = ((src * (256 - a) + np.asarray(color, np.int32) * a) >> 8).astype(np.uint8)


def render_overlay(
    graphs: list[PlantGraph],
    points: list[PruningPoint],
    *,
    size: tuple[int, int] | None = None,
    image: Image.Image | None = None,
    finals: list[PruningPoint] = (),
    options: RenderOptions | None = None,
) -> Image.Image:
    """Draw ``graphs`` and ``points`` over ``image`` or a flat background of ``size``."""
    options = options or RenderOptions()
    if image is not None:
        base = image.convert("RGBA")
        if size is not None and base.size != tuple(size):
            raise MaskError(f"background is {base.size}, expected {tuple(size)}")
    elif size is not None:
        base = Image.new("RGBA", tuple(size), (*options.background, 255))
    else:
        raise ValueError("need a background image or an image size")
    width, height = base.size

    rgba = np.array(base)
    rgb = rgba[..., :3]
    order = (OrganClass.MAIN_CORDON, OrganClass.CANE, OrganClass.NODE)
    for graph in graphs:
        for organ in order:
            for item_id in sorted(graph.items):
                item = graph.items[item_id]
                if item.organ_class is not organ:
                    continue
                if item.mask.shape != (height, width):
                    raise MaskError(f"item {item.id} mask does not match the {width}x{height} image")
                _tint(rgb, item.mask, options.colors[organ.value], options.tint_opacity)
    out = Image.fromarray(rgba, "RGBA")

    draw = ImageDraw.Draw(out)
    red = (*options.colors["point"], 255)
    r = options.marker_radius
    for p in points:
        x, y = p.position
        if options.angle_ticks and options.tick_length:
            dx = options.tick_length * math.cos(p.alpha)
            dy = options.tick_length * math.sin(p.alpha)
            draw.line([(round(x - dx), round(y - dy)), (round(x + dx), round(y + dy))], fill=red, width=2)
        draw.ellipse([x - r, y - r, x + r, y + r], fill=red)
    for p in finals:
        x, y = p.position
        for ring in (r + 3, r + 6):
            draw.ellipse([x - ring, y - ring, x + ring, y + ring], outline=red, width=1)
    return out


def png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return buf.getvalue()
