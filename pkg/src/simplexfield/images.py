"""PNG export of rendered maps.

RGB and opacity go out as 8-bit, normals as [0,1]-remapped 8-bit RGB, and
depth as 16-bit grayscale scaled by a declared max depth recorded in a
JSON sidecar next to the image.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
from PIL import Image


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=np.float64) * 255.0 + 0.5, 0, 255).astype(np.uint8)


def encode_rgb_png(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(_to_u8(rgb), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def encode_gray_png(gray: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(_to_u8(gray), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def encode_normal_png(normal: np.ndarray) -> bytes:
    return encode_rgb_png((np.asarray(normal, dtype=np.float64) + 1.0) / 2.0)


def encode_depth_png(depth: np.ndarray, max_depth: float | None = None) -> tuple[bytes, dict]:
    """16-bit depth PNG plus its sidecar metadata (the declared max depth)."""
    depth = np.asarray(depth, dtype=np.float64)
    if max_depth is None:
        max_depth = float(depth.max()) if depth.size and depth.max() > 0 else 1.0
    scaled = np.clip(depth / max_depth, 0.0, 1.0)
    data = (scaled * 65535.0 + 0.5).astype(np.uint16)
    buf = io.BytesIO()
    img = Image.new("I;16", (data.shape[1], data.shape[0]))
    img.frombytes(data.astype("<u2").tobytes())
    img.save(buf, format="PNG")
    return buf.getvalue(), {"max_depth": max_depth, "encoding": "uint16 / max_depth"}


def encode_map(view, name: str) -> bytes:
    """Encode one named map of a RenderedView ('rgb'|'normal'|'depth'|'opacity')."""
    if name == "rgb":
        return encode_rgb_png(np.asarray(view.rgb))
    if name == "opacity":
        return encode_gray_png(np.asarray(view.opacity))
    if name == "normal":
        if view.normal is None:
            raise ValueError("view was rendered without a normal map")
        return encode_normal_png(np.asarray(view.normal))
    if name == "depth":
        return encode_depth_png(np.asarray(view.depth))[0]
    raise ValueError(f"unknown map {name!r}")


def write_view(directory, stem: str, view, maps=("rgb",)) -> list:
    """Write the requested maps of one view; returns the created paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in maps:
        if name == "depth":
            payload, sidecar = encode_depth_png(np.asarray(view.depth))
            path = directory / f"{stem}_depth.png"
            path.write_bytes(payload)
            meta = directory / f"{stem}_depth.json"
            meta.write_text(json.dumps(sidecar) + "\n", encoding="utf-8")
            written.extend([path, meta])
            continue
        path = directory / f"{stem}_{name}.png"
        path.write_bytes(encode_map(view, name))
        written.append(path)
    return written
