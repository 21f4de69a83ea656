"""Spatially varying latent codes from user-placed anchors.

The latent field interpolates between the codes of the two anchors nearest
to each query point; an optional smoothstep eases the blend (tie surfaces
where the nearest pair changes can still jump by the code difference of
the swapped anchors).  A plain text format moves anchor sets between the
CLI, the service API, and the studio UI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import ConfigurationError, LatentCode
from .render import RenderedView, render_view


class AnchorFormatError(ValueError):
    """Parse failure; carries per-line errors as (line_number, message)."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"line {ln}: {msg}" for ln, msg in self.errors))


@dataclass(frozen=True)
class Anchor:
    position: tuple
    code: LatentCode

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise ConfigurationError("anchor position must be a finite 3D point")
        object.__setattr__(self, "position", tuple(float(v) for v in pos))


@dataclass(frozen=True)
class AnchorSet:
    anchors: tuple
    smoothing: float = 0.0

    def __post_init__(self):
        anchors = tuple(self.anchors)
        if not anchors:
            raise ConfigurationError("anchor set must contain at least one anchor")
        if self.smoothing < 0:
            raise ConfigurationError("smoothing width must be >= 0")
        n = anchors[0].code.n
        positions = []
        for a in anchors:
            if a.code.n != n:
                raise ConfigurationError("all anchor codes need the same dimension")
            positions.append(a.position)
        positions = np.asarray(positions)
        if len(anchors) > 1:
            d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
            np.fill_diagonal(d, np.inf)
            if d.min() == 0.0:
                raise ConfigurationError("anchor positions must be pairwise distinct")
        object.__setattr__(self, "anchors", anchors)

    @property
    def n(self) -> int:
        return self.anchors[0].code.n

    def positions(self) -> np.ndarray:
        return np.asarray([a.position for a in self.anchors], dtype=np.float64)

    def codes(self) -> np.ndarray:
        return np.asarray([a.code.u for a in self.anchors], dtype=np.float64)


def smoothstep(x):
    return 3.0 * x**2 - 2.0 * x**3


def latent_values_at(points: np.ndarray, anchors: AnchorSet) -> np.ndarray:
    """Latent codes at a batch of points, [P, N]."""
    points = np.asarray(points, dtype=np.float64)
    codes = anchors.codes()
    if len(anchors.anchors) == 1:
        return np.broadcast_to(codes[0], (points.shape[0], anchors.n)).copy()
    positions = anchors.positions()
    d = np.linalg.norm(points[:, None, :] - positions[None, :, :], axis=-1)  # [P, A]
    order = np.argpartition(d, 1, axis=1)[:, :2]
    d_pair = np.take_along_axis(d, order, axis=1)
    swap = d_pair[:, 0] > d_pair[:, 1]
    order[swap] = order[swap][:, ::-1]
    d_pair[swap] = d_pair[swap][:, ::-1]
    d1, d2 = d_pair[:, 0], d_pair[:, 1]
    w = d2 / np.maximum(d1 + d2, 1e-300)
    if anchors.smoothing > 0:
        w = smoothstep(w)
    c1 = codes[order[:, 0]]
    c2 = codes[order[:, 1]]
    return w[:, None] * c1 + (1.0 - w[:, None]) * c2


def latent_at(point, anchors: AnchorSet) -> LatentCode:
    """Latent code at one 3D point (two-nearest-anchor interpolation)."""
    point = np.asarray(point, dtype=np.float64).reshape(1, 3)
    return LatentCode(latent_values_at(point, anchors)[0])


def latent_field(anchors: AnchorSet, dtype=np.float64):
    """The spatial latent source u(p) as a renderer-compatible callable."""

    def field(points: np.ndarray) -> np.ndarray:
        return latent_values_at(points, anchors).astype(dtype)

    return field


def render_hybrid(camera, anchors: AnchorSet, params, light, config, **kwargs) -> RenderedView:
    if anchors.n != params.n_objects:
        raise ConfigurationError(
            f"anchor codes have {anchors.n} components, field expects {params.n_objects}"
        )
    return render_view(camera, latent_field(anchors, params.dtype), params, light, config, **kwargs)


# ---------------------------------------------------------------------------
# text format: one anchor per line, `x y z  u_1 ... u_N`, '#' comments


def parse_anchor_text(text: str, smoothing: float = 0.0) -> AnchorSet:
    anchors = []
    errors = []
    n_expected = None
    for idx, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 4:
            errors.append((idx, f"expected `x y z u_1 ... u_N`, got {len(fields)} fields"))
            continue
        try:
            values = [float(v) for v in fields]
        except ValueError as exc:
            errors.append((idx, str(exc)))
            continue
        position, code = values[:3], values[3:]
        if n_expected is None:
            n_expected = len(code)
        elif len(code) != n_expected:
            errors.append(
                (idx, f"latent code has {len(code)} components, previous lines had {n_expected}")
            )
            continue
        try:
            anchors.append(Anchor(position=tuple(position), code=LatentCode(code)))
        except (ValueError, ConfigurationError) as exc:
            errors.append((idx, str(exc)))
    if errors:
        raise AnchorFormatError(errors)
    if not anchors:
        raise AnchorFormatError([(0, "no anchors in input")])
    try:
        return AnchorSet(anchors=tuple(anchors), smoothing=smoothing)
    except ConfigurationError as exc:
        raise AnchorFormatError([(0, str(exc))])


def format_anchor_text(anchors: AnchorSet) -> str:
    """Canonical serialization; floats use shortest round-trip repr."""
    lines = ["# anchor latent codes: x y z  u_1 ... u_N"]
    for a in anchors.anchors:
        coords = " ".join(repr(float(v)) for v in a.position)
        code = " ".join(repr(float(v)) for v in a.code.u)
        lines.append(f"{coords}  {code}")
    return "\n".join(lines) + "\n"


def load_anchors(path, smoothing: float = 0.0) -> AnchorSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_anchor_text(fh.read(), smoothing=smoothing)


def save_anchors(path, anchors: AnchorSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_anchor_text(anchors))
