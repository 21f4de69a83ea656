"""Analytic field fixtures: solid primitives with exact silhouettes.

These drive the desk-scale oracles: quadrature checks against closed-form
transmittance, silhouette targets for the point-mass critic, and posed
view sets for photometric fitting.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .render import Camera, LightSample, RayMarchConfig, generate_rays, render_view

_DEFAULT_BOUNDS = (np.full(3, -1.0), np.full(3, 1.0))


@dataclass
class AnalyticField:
    """Base: constant-albedo solid with an inside(points) predicate."""

    color: tuple = (0.5, 0.5, 0.5)
    solid_density: float = 50.0
    bounds: tuple = _DEFAULT_BOUNDS
    dtype: object = np.float64
    n_latent: int = 0
    normal_step: float = 1e-3

    def inside(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, points, u_values=None):
        tau = self.density_values(points)
        rho = np.broadcast_to(
            np.asarray(self.color, dtype=points.dtype), (points.shape[0], 3)
        ).copy()
        return tau, rho

    def density_values(self, points) -> np.ndarray:
        return np.where(self.inside(points), points.dtype.type(self.solid_density), 0.0).astype(
            points.dtype
        )

    # renderer protocol
    def density(self, points, u_values=None):
        return self.density_values(points)


@dataclass
class SphereField(AnalyticField):
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.3

    def inside(self, points):
        d = points - np.asarray(self.center, dtype=points.dtype)
        return np.einsum("ij,ij->i", d, d) <= self.radius**2

    def ray_hits(self, origins, dirs):
        """Exact ray-sphere hit mask (for silhouette targets)."""
        oc = origins - np.asarray(self.center, dtype=np.float64)
        b = np.einsum("ij,ij->i", oc, dirs)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius**2
        disc = b * b - c
        hit = disc >= 0
        t = -b - np.sqrt(np.maximum(disc, 0.0))
        return hit & (t > 0)


@dataclass
class BoxField(AnalyticField):
    center: tuple = (0.0, 0.0, 0.0)
    half_extent: tuple = (0.25, 0.25, 0.25)

    def inside(self, points):
        d = np.abs(points - np.asarray(self.center, dtype=points.dtype))
        return np.all(d <= np.asarray(self.half_extent, dtype=points.dtype), axis=1)

    def ray_hits(self, origins, dirs):
        lo = np.asarray(self.center) - np.asarray(self.half_extent)
        hi = np.asarray(self.center) + np.asarray(self.half_extent)
        enter = np.full(origins.shape[0], -np.inf)
        exit_ = np.full(origins.shape[0], np.inf)
        for axis in range(3):
            o, d = origins[:, axis], dirs[:, axis]
            zero = d == 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = np.where(zero, -np.inf, (lo[axis] - o) / d)
                t2 = np.where(zero, np.inf, (hi[axis] - o) / d)
            inside = (o >= lo[axis]) & (o <= hi[axis])
            t_lo = np.where(zero & ~inside, np.inf, np.minimum(t1, t2))
            t_hi = np.where(zero & ~inside, -np.inf, np.maximum(t1, t2))
            enter = np.maximum(enter, t_lo)
            exit_ = np.minimum(exit_, t_hi)
        return (exit_ >= enter) & (exit_ > 0)


@dataclass
class SlabField(AnalyticField):
    """Homogeneous slab between two planes normal to one axis."""

    axis: int = 2
    lo: float = 0.0
    hi: float = 0.5

    def inside(self, points):
        x = points[:, self.axis]
        return (x >= self.lo) & (x <= self.hi)


def silhouette_image(shape, camera: Camera, color, background=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Exact flat-color silhouette of an analytic shape, [H, W, 3] float32."""
    origins, dirs = generate_rays(camera)
    hits = shape.ray_hits(origins, dirs)
    img = np.empty((camera.height * camera.width, 3), dtype=np.float32)
    img[:] = np.asarray(background, dtype=np.float32)
    img[hits] = np.asarray(color, dtype=np.float32)
    return img.reshape(camera.height, camera.width, 3)


@dataclass(frozen=True)
class PosedView:
    camera: Camera
    rgb: np.ndarray  # [H, W, 3]


def orbit_camera(
    azimuth: float,
    elevation: float,
    radius: float,
    width: int = 64,
    height: int = 64,
    fov: float = np.deg2rad(40.0),
    target=(0.0, 0.0, 0.0),
) -> Camera:
    target = np.asarray(target, dtype=np.float64)
    position = target + radius * np.array(
        [
            np.cos(elevation) * np.cos(azimuth),
            np.cos(elevation) * np.sin(azimuth),
            np.sin(elevation),
        ]
    )
    return Camera(
        position=tuple(position),
        target=tuple(target),
        vertical_fov=fov,
        width=width,
        height=height,
    )


def ring_cameras(
    n_views: int,
    elevation: float = np.deg2rad(15.0),
    radius: float = 1.8,
    width: int = 64,
    height: int = 64,
    fov: float = np.deg2rad(40.0),
) -> list[Camera]:
    """Cameras evenly spaced in azimuth on a fixed-elevation ring."""
    azimuths = np.arange(n_views) / n_views * 2.0 * np.pi
    return [orbit_camera(a, elevation, radius, width, height, fov) for a in azimuths]


def render_fixture_views(
    shape,
    cameras,
    config: RayMarchConfig,
    light: LightSample | None = None,
) -> list[PosedView]:
    """Deterministic volume renders of an analytic field, one per camera."""
    light = light or LightSample()
    views = []
    for cam in cameras:
        view = render_view(cam, None, shape, light, config, maps=("rgb",))
        views.append(PosedView(camera=cam, rgb=np.asarray(view.rgb, dtype=np.float32)))
    return views


@dataclass
class SilhouetteTargets:
    """Per-camera silhouette target images for a set of analytic shapes."""

    shapes: list
    colors: list
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.shapes) != len(self.colors):
            raise ValueError("need one color per shape")

    def __call__(self, camera: Camera) -> np.ndarray:
        return np.stack(
            [
                silhouette_image(shape, camera, color, self.background)
                for shape, color in zip(self.shapes, self.colors)
            ]
        )


def toy_aligned_pair(separation: float = 0.7):
    """The standard two-object toy fixture: sphere above, box below.

    Silhouettes stay disjoint from every low-elevation viewpoint.
    """
    sphere = SphereField(center=(0.0, 0.0, separation / 2), radius=0.22, color=(0.2, 0.3, 0.75))
    box = BoxField(
        center=(0.0, 0.0, -separation / 2),
        half_extent=(0.18, 0.18, 0.18),
        color=(0.75, 0.3, 0.2),
    )
    return sphere, box
