"""Differentiable ray-march rendering of latent-conditioned fields.

Rays are clipped against the field bounds, sampled stratified (midpoints
when no RNG is supplied), shaded with a single sampled light, and
composited front to back over a constant background.  All math runs
through the tape op vocabulary, so the same code path renders plain
arrays or records gradients when the field parameters are tape leaves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .field import FieldParams, InvalidInputError, LatentCode, density_batch, field_batch, normal_batch


@dataclass(frozen=True)
class Camera:
    position: tuple
    target: tuple
    up: tuple = (0.0, 0.0, 1.0)
    vertical_fov: float = np.deg2rad(40.0)
    width: int = 64
    height: int = 64

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        if pos.shape != (3,) or tgt.shape != (3,):
            raise InvalidInputError("camera position/target must be 3D points")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(tgt)):
            raise InvalidInputError("camera position/target must be finite")
        if np.allclose(pos, tgt):
            raise InvalidInputError("camera position must differ from target")
        if not 0.0 < self.vertical_fov < np.pi:
            raise InvalidInputError("vertical_fov must lie in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("image dimensions must be >= 1")

    def basis(self):
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        forward = tgt - pos
        forward /= np.linalg.norm(forward)
        up = np.asarray(self.up, dtype=np.float64)
        right = np.cross(forward, up)
        norm = np.linalg.norm(right)
        if norm < 1e-9:
            raise InvalidInputError("camera up direction is parallel to the view direction")
        right /= norm
        true_up = np.cross(right, forward)
        return forward, right, true_up


@dataclass(frozen=True)
class RayMarchConfig:
    n_samples: int = 96
    near: float = 0.05
    far: float = 6.0
    stratified_jitter: bool = True
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not 0.0 < self.near < self.far:
            raise InvalidInputError("require 0 < near < far")
        if self.n_samples < 2:
            raise InvalidInputError("n_samples must be >= 2")


@dataclass(frozen=True)
class LightSample:
    direction: tuple = (0.0, 0.0, 1.0)
    diffuse: tuple = (0.0, 0.0, 0.0)
    ambient: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if not np.isclose(np.linalg.norm(d), 1.0, atol=1e-6):
            raise InvalidInputError("light direction must be unit length")
        if np.any(np.asarray(self.diffuse) < 0) or np.any(np.asarray(self.ambient) < 0):
            raise InvalidInputError("light intensities must be nonnegative")

    @property
    def needs_normals(self) -> bool:
        return bool(np.any(np.asarray(self.diffuse) > 0))


@dataclass
class RenderedView:
    rgb: np.ndarray  # [H, W, 3]
    opacity: np.ndarray  # [H, W]
    depth: np.ndarray  # [H, W]
    normal: np.ndarray | None = None  # [H, W, 3]
    view_dirs: np.ndarray | None = None  # [H, W, 3], camera-to-pixel unit rays


def generate_rays(camera: Camera):
    """Pinhole rays through pixel centers: (origins [HW,3], dirs [HW,3])."""
    forward, right, true_up = camera.basis()
    w, h = camera.width, camera.height
    tan_half = np.tan(camera.vertical_fov / 2.0)
    aspect = w / h
    xs = ((np.arange(w) + 0.5) / w * 2.0 - 1.0) * tan_half * aspect
    ys = (1.0 - (np.arange(h) + 0.5) / h * 2.0) * tan_half
    dirs = (
        forward[None, None, :]
        + xs[None, :, None] * right[None, None, :]
        + ys[:, None, None] * true_up[None, None, :]
    )
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(
        np.asarray(camera.position, dtype=np.float64), (h, w, 3)
    )
    return origins.reshape(-1, 3).copy(), dirs.reshape(-1, 3)


def shade(rho, normals, light: LightSample, dtype=np.float64):
    """Emitted radiance: albedo times ambient-plus-lambertian light, in [0,1]."""
    ambient = np.asarray(light.ambient, dtype=dtype)
    if normals is None:
        lit = ambient
    else:
        direction = np.asarray(light.direction, dtype=dtype)
        diffuse = np.asarray(light.diffuse, dtype=dtype)
        lam = tape.relu(tape.dot_last(normals, direction))
        lam = tape.reshape(lam, (-1, 1))
        lit = tape.add(ambient, tape.mul(diffuse, lam))
    return tape.clip(tape.mul(rho, lit), 0.0, 1.0)


class _NeuralField:
    """Adapter giving FieldParams the sample/density/bounds protocol."""

    def __init__(self, params: FieldParams):
        self.params = params
        self.bounds = (params.grid_config.bounds_lo, params.grid_config.bounds_hi)
        self.dtype = params.dtype if isinstance(params.tables, np.ndarray) else params.tables.value.dtype
        self.normal_step = 0.5 * params.grid_config.finest_cell_edge()
        self.n_latent = params.n_objects

    def sample(self, points, u_values):
        return field_batch(points, u_values, self.params)

    def density(self, points, u_values):
        return density_batch(points, u_values, self.params)


def adapt_field(field):
    if isinstance(field, FieldParams):
        return _NeuralField(field)
    for attr in ("sample", "density", "bounds"):
        if not hasattr(field, attr):
            raise InvalidInputError(f"field object lacks required attribute {attr!r}")
    return field


def _ray_box_spans(origins, dirs, lo, hi):
    """Entry/exit distances of each ray with an axis-aligned box (slab test)."""
    enter = np.full(origins.shape[0], -np.inf)
    exit_ = np.full(origins.shape[0], np.inf)
    for axis in range(3):
        o = origins[:, axis]
        d = dirs[:, axis]
        zero = d == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(zero, -np.inf, (lo[axis] - o) / d)
            t2 = np.where(zero, np.inf, (hi[axis] - o) / d)
        inside = (o >= lo[axis]) & (o <= hi[axis])
        empty = zero & ~inside
        t_lo = np.minimum(t1, t2)
        t_hi = np.maximum(t1, t2)
        t_lo = np.where(empty, np.inf, t_lo)
        t_hi = np.where(empty, -np.inf, t_hi)
        enter = np.maximum(enter, t_lo)
        exit_ = np.minimum(exit_, t_hi)
    return enter, exit_


def _sample_depths(near_r, far_r, n_samples, rng):
    """Stratified sample distances (midpoints without an RNG) plus quadrature spacing."""
    r = near_r.shape[0]
    if rng is None:
        offsets = np.full((r, n_samples), 0.5)
    else:
        offsets = rng.random((r, n_samples))
    span = (far_r - near_r)[:, None]
    t = near_r[:, None] + (np.arange(n_samples)[None, :] + offsets) / n_samples * span
    deltas = np.empty_like(t)
    deltas[:, :-1] = t[:, 1:] - t[:, :-1]
    deltas[:, -1] = far_r - t[:, -1]
    return t, deltas


def _latent_values(latent, points, n_latent, dtype):
    if latent is None:
        return np.zeros((points.shape[0], max(n_latent, 1)), dtype=dtype)
    if isinstance(latent, LatentCode):
        vec = latent.u
    elif callable(latent):
        vals = np.asarray(latent(points), dtype=dtype)
        if vals.shape != (points.shape[0], n_latent):
            raise InvalidInputError(
                f"spatial latent field returned shape {vals.shape}, expected {(points.shape[0], n_latent)}"
            )
        return vals
    else:
        vec = np.asarray(latent, dtype=np.float64).reshape(-1)
    if vec.size != n_latent:
        raise InvalidInputError(f"latent code has {vec.size} components, field expects {n_latent}")
    return np.broadcast_to(vec.astype(dtype), (points.shape[0], n_latent)).copy()


def render_rays(origins, dirs, latent, field, light: LightSample, config: RayMarchConfig, rng=None):
    """Composite a batch of rays.  Returns (color, opacity, depth, extras).

    ``extras`` carries the constant sampling geometry (depth values, spans)
    so callers can place normal queries or reuse the latent source.
    """
    fld = adapt_field(field)
    lo, hi = fld.bounds
    dtype = np.dtype(getattr(fld, "dtype", np.float64))
    enter, exit_ = _ray_box_spans(origins, dirs, lo, hi)
    near_r = np.clip(enter, config.near, config.far)
    far_r = np.clip(exit_, config.near, config.far)
    valid = far_r > near_r
    near_r = np.where(valid, near_r, config.far)
    far_r = np.where(valid, far_r, config.far)

    jitter_rng = rng if config.stratified_jitter else None
    t_depths, deltas = _sample_depths(near_r, far_r, config.n_samples, jitter_rng)
    pts = origins[:, None, :] + dirs[:, None, :] * t_depths[:, :, None]
    flat = np.ascontiguousarray(pts.reshape(-1, 3), dtype=dtype)
    n_latent = getattr(fld, "n_latent", 0)
    u_values = _latent_values(latent, flat, n_latent, dtype)

    tau, rho = fld.sample(flat, u_values)
    if light.needs_normals:
        step = getattr(fld, "normal_step", 1e-3)
        normals = normal_batch(flat, u_values, fld, step)
    else:
        normals = None
    radiance = shade(rho, normals, light, dtype=dtype)

    r, s = t_depths.shape
    tau_rs = tape.reshape(tau, (r, s))
    rad_rs = tape.reshape(radiance, (r, s, 3))
    background = np.asarray(config.background, dtype=dtype)
    color, opacity, depth = tape.composite(
        tau_rs,
        rad_rs,
        np.ascontiguousarray(deltas, dtype=dtype),
        np.ascontiguousarray(t_depths, dtype=dtype),
        background,
    )
    extras = {"t_depths": t_depths, "near": near_r, "far": far_r, "u_values": u_values}
    return color, opacity, depth, extras


def render_ray(origin, direction, latent, field, light: LightSample, config: RayMarchConfig, rng=None):
    """Single-ray convenience wrapper: returns (color [3], opacity, depth)."""
    origin = np.asarray(origin, dtype=np.float64)[None, :]
    direction = np.asarray(direction, dtype=np.float64)
    direction = (direction / np.linalg.norm(direction))[None, :]
    color, opacity, depth, _ = render_rays(origin, direction, latent, field, light, config, rng)
    return np.asarray(tape._val(color))[0], float(np.asarray(tape._val(opacity))[0]), float(
        np.asarray(tape._val(depth))[0]
    )


def render_view(
    camera: Camera,
    latent,
    field,
    light: LightSample,
    config: RayMarchConfig,
    rng=None,
    maps=("rgb", "opacity", "depth", "normal"),
    normal_step: float | None = None,
) -> RenderedView:
    """Render a full camera view; the normal map is evaluated at each ray's
    expected termination point.

    With tape-leaf parameters the returned arrays are tape Vars (normals
    then keep their raw near-zero rows instead of the +z fallback).
    """
    fld = adapt_field(field)
    origins, dirs = generate_rays(camera)
    color, opacity, depth, _ = render_rays(origins, dirs, latent, fld, light, config, rng)
    h, w = camera.height, camera.width

    normal_map = None
    if "normal" in maps:
        dtype = np.dtype(getattr(fld, "dtype", np.float64))
        depth_vals = np.asarray(tape._val(depth), dtype=np.float64)
        term = origins + dirs * depth_vals[:, None]
        term = np.ascontiguousarray(term, dtype=dtype)
        u_term = _latent_values(latent, term, getattr(fld, "n_latent", 0), dtype)
        step = normal_step if normal_step is not None else getattr(fld, "normal_step", 1e-3)
        normal_map = normal_batch(term, u_term, fld, step)
        if isinstance(normal_map, np.ndarray):
            norms = np.linalg.norm(normal_map, axis=-1)
            degenerate = norms < 1e-6
            if np.any(degenerate):
                normal_map = normal_map.copy()
                normal_map[degenerate] = (0.0, 0.0, 1.0)
        normal_map = tape.reshape(normal_map, (h, w, 3))

    return RenderedView(
        rgb=tape.reshape(color, (h, w, 3)),
        opacity=tape.reshape(opacity, (h, w)),
        depth=tape.reshape(depth, (h, w)),
        normal=normal_map,
        view_dirs=dirs.reshape(h, w, 3),
    )
