"""Training loops: joint generation over the latent simplex and the
structure-preserving transformation pipeline.

Per-iteration RNG draw order is fixed and documented (latent site, camera
or anchor view, light, then the guidance (t, eps) pair) so identical seeds
give bit-identical runs; train_transform with a zero photometric weight
follows train_generation's code path exactly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import tape
from .field import FieldParams, LatentCode
from .guidance import (
    EDGE,
    VERTEX,
    CONDITIONING_MODES,
    Conditioning,
    DiffusionSchedule,
    EmbeddingSet,
    GuidanceError,
    conditioning_for,
    sds_image_grad,
)
from .optim import AdamState, LossBreakdown, NonFiniteLossError, adam_step, loss_and_grads
from .render import Camera, LightSample, RayMarchConfig, generate_rays, normal_batch, render_rays
from .render import adapt_field


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# latent sampling


@dataclass
class SimplexSampler:
    """Vertex draws with probability 1-p, uniform-edge draws otherwise."""

    edge_probability: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.edge_probability <= 1.0:
            raise ValueError("edge probability must lie in [0, 1]")

    def sample(self, rng: np.random.Generator, n: int):
        if n < 1:
            raise ValueError("need at least one vertex")
        if n == 1:
            return LatentCode.vertex(0, 1), VERTEX
        if rng.random() >= self.edge_probability:
            i = int(rng.integers(n))
            return LatentCode.vertex(i, n), VERTEX
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        t = float(rng.random())
        return LatentCode.edge_point(i, j, t, n), EDGE


# ---------------------------------------------------------------------------
# losses


def photometric_loss(rendered, target):
    """Mean over the ray batch of squared color deviation (channels summed)."""
    target = np.asarray(target)
    n_rays = int(np.prod(target.shape[:-1]))
    return tape.scale(tape.sum_(tape.square(tape.sub(rendered, target))), 1.0 / n_rays)


def normal_smoothness_loss(normal_map):
    """Mean absolute forward difference of the normal map over the
    (H-1) x (W-1) grid, channels and both axes summed."""
    h, w = np.shape(tape._val(normal_map))[:2]
    if h < 2 or w < 2:
        raise ValueError("normal map must be at least 2x2")
    core = tape.crop(normal_map, (slice(0, h - 1), slice(0, w - 1)))
    right = tape.crop(normal_map, (slice(0, h - 1), slice(1, w)))
    down = tape.crop(normal_map, (slice(1, h), slice(0, w - 1)))
    total = tape.add(
        tape.sum_(tape.abs_(tape.sub(right, core))),
        tape.sum_(tape.abs_(tape.sub(down, core))),
    )
    return tape.scale(total, 1.0 / ((h - 1) * (w - 1)))


def orientation_penalty(normals, view_dirs, opacities, foreground_eps: float = 0.01):
    """Opacity-weighted squared backward-facing component, averaged over
    foreground samples (opacity above ``foreground_eps``)."""
    facing = tape.relu(tape.dot_last(normals, np.asarray(view_dirs)))
    weighted = tape.mul(opacities, tape.square(facing))
    mask = (np.asarray(tape._val(opacities)) > foreground_eps).astype(np.float64)
    count = max(float(mask.sum()), 1.0)
    return tape.scale(tape.sum_(tape.mul(weighted, mask)), 1.0 / count)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0:
        return float("inf")
    return -10.0 * np.log10(mse)


# ---------------------------------------------------------------------------
# sampling distributions


@dataclass(frozen=True)
class CameraDistribution:
    """Orbit-camera training distribution (azimuth/elevation/radius)."""

    azimuth_range: tuple = (0.0, 2.0 * np.pi)
    elevation_range: tuple = (np.deg2rad(-10.0), np.deg2rad(45.0))
    radius_range: tuple = (1.5, 2.2)
    fov: float = np.deg2rad(40.0)
    target: tuple = (0.0, 0.0, 0.0)

    def sample(self, rng: np.random.Generator, bounds_radius: float, width: int, height: int) -> Camera:
        azimuth = rng.uniform(*self.azimuth_range)
        elevation = rng.uniform(*self.elevation_range)
        radius = rng.uniform(*self.radius_range) * bounds_radius
        target = np.asarray(self.target)
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
            vertical_fov=self.fov,
            width=width,
            height=height,
        )


@dataclass(frozen=True)
class LightConfig:
    """Random lighting: direction jittered around the camera direction."""

    ambient: tuple = (0.25, 0.25, 0.25)
    diffuse: tuple = (0.75, 0.75, 0.75)
    direction_jitter: float = 0.4

    def sample(self, rng: np.random.Generator, camera_position) -> LightSample:
        if not np.any(np.asarray(self.diffuse) > 0):
            return LightSample(ambient=self.ambient, diffuse=(0.0, 0.0, 0.0))
        base = np.asarray(camera_position, dtype=np.float64)
        base = base / np.linalg.norm(base) if np.linalg.norm(base) > 0 else np.array([0.0, 0.0, 1.0])
        direction = base + self.direction_jitter * rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        return LightSample(direction=tuple(direction), diffuse=self.diffuse, ambient=self.ambient)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GenerationConfig:
    iterations: int = 2000
    edge_probability: float = 0.5
    conditioning: str = "blended"
    orientation_weight_start: float = 100.0
    orientation_weight_end: float = 1000.0
    normal_smoothness_weight: float = 10.0
    views_per_step: int = 1
    resolution_schedule: tuple = (64, 128)
    n_samples: int = 32
    guidance_scale: float = 1.0
    background: tuple = (1.0, 1.0, 1.0)
    camera: CameraDistribution = dc_field(default_factory=CameraDistribution)
    light: LightConfig = dc_field(default_factory=LightConfig)
    lr_grid: float = 1e-2
    lr_mlp: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.0 <= self.edge_probability <= 1.0:
            raise ValueError("edge_probability must lie in [0, 1]")
        if self.conditioning not in CONDITIONING_MODES:
            raise ValueError(f"conditioning must be one of {CONDITIONING_MODES}")
        for name in ("orientation_weight_start", "orientation_weight_end", "normal_smoothness_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.resolution_schedule:
            raise ValueError("resolution_schedule must not be empty")

    def orientation_weight(self, iteration: int) -> float:
        if self.iterations <= 1:
            return self.orientation_weight_start
        frac = iteration / (self.iterations - 1)
        return self.orientation_weight_start + (
            self.orientation_weight_end - self.orientation_weight_start
        ) * frac

    def resolution_at(self, iteration: int) -> int:
        if self.iterations <= 0:
            return int(self.resolution_schedule[0])
        idx = min(
            int(iteration * len(self.resolution_schedule) / self.iterations),
            len(self.resolution_schedule) - 1,
        )
        return int(self.resolution_schedule[idx])


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 3000
    ray_batch: int = 1024
    n_samples: int = 48
    background: tuple = (1.0, 1.0, 1.0)
    lr_grid: float = 1e-2
    lr_mlp: float = 1e-3
    psnr_target: float | None = None
    psnr_check_every: int = 500
    divergence_window: int = 200
    divergence_factor: float = 10.0


@dataclass(frozen=True)
class TransformConfig:
    photometric_weight: float = 1.0
    source_vertex_index: int = 0
    fit: FitConfig = dc_field(default_factory=FitConfig)

    def __post_init__(self):
        if self.photometric_weight < 0:
            raise ValueError("photometric_weight must be >= 0")


@dataclass(frozen=True)
class PhotometricAnchor:
    """Photometric constraint applied when the sampled latent hits one vertex."""

    views: tuple  # PosedView sequence
    weight: float
    vertex_index: int = 0


# ---------------------------------------------------------------------------
# generation loop


def _bounds_radius(params: FieldParams) -> float:
    extent = params.grid_config.bounds_hi - params.grid_config.bounds_lo
    return float(np.max(extent) / 2.0)


def _resolve_critic(critic, camera: Camera):
    if hasattr(critic, "denoise"):
        return critic
    return critic(camera)


def train_generation(
    params: FieldParams,
    embeddings: EmbeddingSet,
    critic,
    schedule: DiffusionSchedule,
    config: GenerationConfig,
    rng: np.random.Generator,
    prompts=(),
    metrics_sink=None,
    checkpoint_fn=None,
    photometric_anchor: PhotometricAnchor | None = None,
):
    """Joint generation over the latent simplex.  Returns (params, metrics).

    ``critic`` is either a denoiser or a camera-conditioned factory
    (``critic(camera) -> denoiser``), which is how the analytic silhouette
    critics follow the sampled viewpoint.
    """
    n = params.n_objects
    sampler = SimplexSampler(config.edge_probability)
    state = AdamState.init(params.param_count(), lr=1.0, beta1=config.beta1, beta2=config.beta2)
    lr_scale = params.lr_scale(config.lr_grid, config.lr_mlp)
    bounds_radius = _bounds_radius(params)
    anchor = photometric_anchor if (photometric_anchor and photometric_anchor.weight > 0) else None
    want_normal_losses = (
        config.normal_smoothness_weight > 0
        or config.orientation_weight_start > 0
        or config.orientation_weight_end > 0
    )
    metrics: list[dict] = []
    params = params.copy()

    for iteration in range(config.iterations):
        res = config.resolution_at(iteration)
        u, site = sampler.sample(rng, n)

        anchored = (
            anchor is not None
            and site == VERTEX
            and int(np.argmax(u.u)) == anchor.vertex_index
        )
        step_views = []
        for _ in range(config.views_per_step):
            if anchored:
                view = anchor.views[int(rng.integers(len(anchor.views)))]
                camera = view.camera
                target_rgb = view.rgb
            else:
                camera = config.camera.sample(rng, bounds_radius, res, res)
                target_rgb = None
            light = config.light.sample(rng, camera.position)
            step_views.append((camera, light, target_rgb))
        cond = conditioning_for(u, site, config.conditioning, embeddings, prompts, config.guidance_scale)

        march = RayMarchConfig(
            n_samples=config.n_samples, background=config.background, stratified_jitter=True
        )
        u_vec = u.u.astype(params.dtype)

        def build(view_params, t):
            terms = {}
            t_draws = []
            fld = adapt_field(view_params) if want_normal_losses else None
            for camera, light, target_rgb in step_views:
                origins, dirs = generate_rays(camera)
                step_critic = _resolve_critic(critic, camera)
                color, opacity, depth, _ = render_rays(
                    origins, dirs, u_vec, view_params, light, march, rng=rng
                )
                image = tape.reshape(color, (camera.height, camera.width, 3))
                # critics always see float32 renders (wire-protocol parity)
                residual, t_draw = sds_image_grad(
                    np.asarray(tape._val(image), dtype=np.float32),
                    cond,
                    step_critic,
                    schedule,
                    iteration,
                    rng,
                )
                t_draws.append(t_draw)
                sds_term = tape.sum_(tape.mul(image, residual.astype(params.dtype)))
                terms["sds"] = (
                    sds_term if "sds" not in terms else tape.add(terms["sds"][0], sds_term),
                    1.0,
                )
                if want_normal_losses:
                    depth_vals = np.asarray(tape._val(depth), dtype=np.float64)
                    term_pts = np.ascontiguousarray(
                        origins + dirs * depth_vals[:, None], dtype=params.dtype
                    )
                    u_term = np.broadcast_to(u_vec, (term_pts.shape[0], n)).copy()
                    normals = normal_batch(term_pts, u_term, fld, fld.normal_step)
                    normal_map = tape.reshape(normals, (camera.height, camera.width, 3))
                    smooth_term = normal_smoothness_loss(normal_map)
                    orient_term = orientation_penalty(normals, dirs, opacity)
                    terms["normal_smoothness"] = (
                        smooth_term
                        if "normal_smoothness" not in terms
                        else tape.add(terms["normal_smoothness"][0], smooth_term),
                        config.normal_smoothness_weight,
                    )
                    terms["orientation"] = (
                        orient_term
                        if "orientation" not in terms
                        else tape.add(terms["orientation"][0], orient_term),
                        config.orientation_weight(iteration),
                    )
                if anchored:
                    photo_term = photometric_loss(image, target_rgb.astype(params.dtype))
                    terms["photometric"] = (
                        photo_term
                        if "photometric" not in terms
                        else tape.add(terms["photometric"][0], photo_term),
                        anchor.weight,
                    )
            build.t_draw = t_draws[0] if len(t_draws) == 1 else t_draws
            # terms were accumulated as (var, weight) pairs keyed by name
            return terms

        try:
            breakdown, grads = loss_and_grads(params, build)
        except GuidanceError as exc:
            record = {
                "iteration": iteration,
                "skipped": True,
                "reason": str(exc),
                "u": u.u.tolist(),
                "site": site,
            }
            metrics.append(record)
            if metrics_sink:
                metrics_sink(record)
            continue
        except NonFiniteLossError:
            if checkpoint_fn:
                checkpoint_fn(params, iteration)
            raise

        flat = adam_step(params.flatten(), grads, state, lr_scale)
        params = params.unflatten(flat)

        record = {
            "iteration": iteration,
            **breakdown.as_record(),
            "u": u.u.tolist(),
            "site": site,
            "t": build.t_draw,
        }
        metrics.append(record)
        if metrics_sink:
            metrics_sink(record)
        if checkpoint_fn and config.checkpoint_every and (iteration + 1) % config.checkpoint_every == 0:
            checkpoint_fn(params, iteration + 1)

    if checkpoint_fn:
        checkpoint_fn(params, config.iterations)
    return params, metrics


# ---------------------------------------------------------------------------
# photometric fitting (transform initialization)


def fit_to_views(
    params: FieldParams,
    views,
    config: FitConfig,
    rng: np.random.Generator,
    light: LightSample | None = None,
    metrics_sink=None,
):
    """Fit the field photometrically to posed views, with the latent code
    drawn uniformly over the whole segment each step (u-independent init)."""
    if params.n_objects != 2:
        raise ValueError("transformation runs on a two-vertex latent segment")
    if not views:
        raise ValueError("need at least one posed view")
    light = light or LightSample()
    state = AdamState.init(params.param_count(), lr=1.0)
    lr_scale = params.lr_scale(config.lr_grid, config.lr_mlp)
    march = RayMarchConfig(n_samples=config.n_samples, background=config.background)
    rays = [generate_rays(v.camera) for v in views]
    flat_rgb = [np.asarray(v.rgb, dtype=np.float64).reshape(-1, 3) for v in views]
    params = params.copy()
    recent: list[float] = []

    for iteration in range(config.iterations):
        vi = int(rng.integers(len(views)))
        origins, dirs = rays[vi]
        sel = rng.integers(0, origins.shape[0], size=min(config.ray_batch, origins.shape[0]))
        t_u = float(rng.random())
        u_vec = np.array([t_u, 1.0 - t_u], dtype=params.dtype)
        target = flat_rgb[vi][sel]

        def build(view_params, t):
            color, _, _, _ = render_rays(
                origins[sel], dirs[sel], u_vec, view_params, light, march, rng=rng
            )
            return {"photometric": (photometric_loss(color, target.astype(params.dtype)), 1.0)}

        breakdown, grads = loss_and_grads(params, build)
        flat = adam_step(params.flatten(), grads, state, lr_scale)
        params = params.unflatten(flat)

        loss = breakdown.terms["photometric"]
        recent.append(loss)
        if len(recent) > config.divergence_window:
            recent.pop(0)
            if loss > config.divergence_factor * min(recent):
                raise TrainingDiverged(
                    f"photometric loss rose to {loss:.4g} from a recent minimum of "
                    f"{min(recent):.4g} at iteration {iteration}"
                )
        if metrics_sink:
            metrics_sink({"iteration": iteration, "terms": {"photometric": loss}})

        if (
            config.psnr_target is not None
            and (iteration + 1) % config.psnr_check_every == 0
            and fit_psnr(params, views[:2], config, light) >= config.psnr_target
        ):
            break
    return params


def fit_psnr(params: FieldParams, views, config: FitConfig, light: LightSample | None = None) -> float:
    """Mean PSNR of deterministic full renders against the given views."""
    light = light or LightSample()
    march = RayMarchConfig(n_samples=config.n_samples, background=config.background)
    values = []
    for view in views:
        origins, dirs = generate_rays(view.camera)
        u_vec = np.array([0.5, 0.5], dtype=params.dtype)
        color, _, _, _ = render_rays(origins, dirs, u_vec, params, light, march)
        values.append(psnr(np.asarray(tape._val(color)).reshape(view.rgb.shape), view.rgb))
    return float(np.mean(values))


def train_transform(
    params: FieldParams,
    embeddings: EmbeddingSet,
    critic,
    schedule: DiffusionSchedule,
    config: GenerationConfig,
    transform: TransformConfig,
    source_views,
    rng: np.random.Generator,
    prompts=(),
    metrics_sink=None,
    checkpoint_fn=None,
):
    """Generation over the segment with the photometric constraint pinned at
    the source vertex.  With photometric_weight == 0 this is exactly
    train_generation (same code path, same RNG consumption)."""
    anchor = None
    if transform.photometric_weight > 0:
        anchor = PhotometricAnchor(
            views=tuple(source_views),
            weight=transform.photometric_weight,
            vertex_index=transform.source_vertex_index,
        )
    return train_generation(
        params,
        embeddings,
        critic,
        schedule,
        config,
        rng,
        prompts=prompts,
        metrics_sink=metrics_sink,
        checkpoint_fn=checkpoint_fn,
        photometric_anchor=anchor,
    )
