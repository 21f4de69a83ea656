"""Session configuration: YAML schema, strict validation, stable round-trip.

Unknown keys are rejected with their dotted path; all violations are
collected and reported together.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import yaml

from .field import ConfigurationError, HashGridConfig, MlpConfig
from .guidance import CONDITIONING_MODES, DiffusionSchedule
from .training import CameraDistribution, FitConfig, GenerationConfig, LightConfig, TransformConfig


class ConfigError(ValueError):
    """Carries every schema violation as (dotted path, message)."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = "\n".join(f"  {path}: {message}" for path, message in self.problems)
        super().__init__(f"invalid configuration:\n{lines}")


@dataclass(frozen=True)
class EvalRenderConfig:
    width: int = 256
    height: int = 256
    n_samples: int = 96
    near: float = 0.05
    far: float = 6.0
    background: tuple = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class ShapeSpec:
    shape: str  # sphere | box
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.25
    half_extent: tuple = (0.2, 0.2, 0.2)
    color: tuple = (0.5, 0.5, 0.5)

    def build(self):
        from .fixtures import BoxField, SphereField

        if self.shape == "sphere":
            return SphereField(center=self.center, radius=self.radius, color=self.color)
        return BoxField(center=self.center, half_extent=self.half_extent, color=self.color)


@dataclass(frozen=True)
class CriticSpec:
    kind: str  # point_mass | remote
    targets: tuple = ()  # ShapeSpec per prompt (point_mass)
    background: tuple = (1.0, 1.0, 1.0)
    host: str = "127.0.0.1"
    port: int = 0
    guidance_scale: float = 1.0
    max_attempts: int = 3
    timeout: float = 30.0


@dataclass(frozen=True)
class SourceSpec:
    shape: ShapeSpec | None = None
    views_dir: str | None = None
    n_views: int = 30
    width: int = 64
    height: int = 64


@dataclass
class SessionConfig:
    prompts: tuple
    seed: int = 0
    output_dir: str = "runs/session"
    density_bias: float = 0.5
    grid: HashGridConfig = dc_field(default_factory=HashGridConfig)
    mlp: MlpConfig = dc_field(default_factory=MlpConfig)
    evaluation: EvalRenderConfig = dc_field(default_factory=EvalRenderConfig)
    generation: GenerationConfig = dc_field(default_factory=GenerationConfig)
    schedule: DiffusionSchedule = None
    critic: CriticSpec = dc_field(default_factory=lambda: CriticSpec(kind="point_mass"))
    transform: TransformConfig = dc_field(default_factory=TransformConfig)
    source: SourceSpec | None = None

    @property
    def n_objects(self) -> int:
        return len(self.prompts)


# ---------------------------------------------------------------------------
# validation walk


def _mapping(doc, path, errors):
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        errors.append((path or "<root>", f"expected a mapping, got {type(doc).__name__}"))
        return {}
    return doc


def _reject_unknown(doc, allowed, path, errors):
    for key in doc:
        if key not in allowed:
            errors.append((f"{path}.{key}" if path else key, "unknown key"))


def _number(doc, key, path, errors, default, minimum=None, maximum=None, kind=float):
    value = doc.get(key, default)
    try:
        value = kind(value)
    except (TypeError, ValueError):
        errors.append((f"{path}.{key}", f"expected a number, got {value!r}"))
        return default
    if minimum is not None and value < minimum:
        errors.append((f"{path}.{key}", f"must be >= {minimum}, got {value}"))
    if maximum is not None and value > maximum:
        errors.append((f"{path}.{key}", f"must be <= {maximum}, got {value}"))
    return value


def _triple(doc, key, path, errors, default):
    value = doc.get(key, default)
    try:
        out = tuple(float(v) for v in value)
        if len(out) != 3:
            raise ValueError
    except (TypeError, ValueError):
        errors.append((f"{path}.{key}", f"expected three numbers, got {value!r}"))
        return tuple(default)
    return out


def _pair(doc, key, path, errors, default):
    value = doc.get(key, default)
    try:
        out = tuple(float(v) for v in value)
        if len(out) != 2:
            raise ValueError
    except (TypeError, ValueError):
        errors.append((f"{path}.{key}", f"expected two numbers, got {value!r}"))
        return tuple(default)
    return out


def _parse_shape(doc, path, errors) -> ShapeSpec:
    doc = _mapping(doc, path, errors)
    allowed = {"shape", "center", "radius", "half_extent", "color"}
    _reject_unknown(doc, allowed, path, errors)
    kind = doc.get("shape", "sphere")
    if kind not in ("sphere", "box"):
        errors.append((f"{path}.shape", f"expected 'sphere' or 'box', got {kind!r}"))
        kind = "sphere"
    return ShapeSpec(
        shape=kind,
        center=_triple(doc, "center", path, errors, (0.0, 0.0, 0.0)),
        radius=_number(doc, "radius", path, errors, 0.25, minimum=0.0),
        half_extent=_triple(doc, "half_extent", path, errors, (0.2, 0.2, 0.2)),
        color=_triple(doc, "color", path, errors, (0.5, 0.5, 0.5)),
    )


def parse_config(doc: dict) -> SessionConfig:
    errors: list = []
    doc = _mapping(doc, "", errors)
    top_allowed = {
        "prompts", "seed", "output_dir", "density_bias", "grid", "mlp",
        "evaluation", "generation", "schedule", "critic", "transform",
    }
    _reject_unknown(doc, top_allowed, "", errors)

    prompts = doc.get("prompts")
    if not isinstance(prompts, (list, tuple)) or not prompts or not all(
        isinstance(p, str) for p in prompts
    ):
        errors.append(("prompts", "required: a non-empty list of strings"))
        prompts = ("",)
    prompts = tuple(prompts)

    seed = _number(doc, "seed", "", errors, 0, kind=int)
    output_dir = str(doc.get("output_dir", "runs/session"))
    density_bias = _number(doc, "density_bias", "", errors, 0.5)

    g = _mapping(doc.get("grid"), "grid", errors)
    _reject_unknown(
        g,
        {"levels", "base_resolution", "per_level_scale", "features_per_level",
         "table_size_log2", "bounds"},
        "grid",
        errors,
    )
    bounds_doc = g.get("bounds", [[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
    try:
        bounds = (tuple(float(v) for v in bounds_doc[0]), tuple(float(v) for v in bounds_doc[1]))
        if len(bounds[0]) != 3 or len(bounds[1]) != 3:
            raise ValueError
    except (TypeError, ValueError, IndexError):
        errors.append(("grid.bounds", f"expected [[lo3],[hi3]], got {bounds_doc!r}"))
        bounds = ((-1.0,) * 3, (1.0,) * 3)
    grid_kwargs = dict(
        levels=_number(g, "levels", "grid", errors, 16, minimum=1, kind=int),
        base_resolution=_number(g, "base_resolution", "grid", errors, 8, minimum=2, kind=int),
        per_level_scale=_number(g, "per_level_scale", "grid", errors, 1.4472692374403782),
        features_per_level=_number(g, "features_per_level", "grid", errors, 2, minimum=1, kind=int),
        table_size_log2=_number(g, "table_size_log2", "grid", errors, 15, minimum=4, kind=int),
        bounds=bounds,
    )

    m = _mapping(doc.get("mlp"), "mlp", errors)
    _reject_unknown(m, {"hidden_layers", "width", "activation"}, "mlp", errors)
    mlp_kwargs = dict(
        hidden_layers=_number(m, "hidden_layers", "mlp", errors, 1, kind=int),
        width=_number(m, "width", "mlp", errors, 64, minimum=1, kind=int),
        activation=m.get("activation", "relu"),
    )

    e = _mapping(doc.get("evaluation"), "evaluation", errors)
    _reject_unknown(e, {"width", "height", "n_samples", "near", "far", "background"}, "evaluation", errors)
    evaluation = EvalRenderConfig(
        width=_number(e, "width", "evaluation", errors, 256, minimum=1, kind=int),
        height=_number(e, "height", "evaluation", errors, 256, minimum=1, kind=int),
        n_samples=_number(e, "n_samples", "evaluation", errors, 96, minimum=2, kind=int),
        near=_number(e, "near", "evaluation", errors, 0.05, minimum=0.0),
        far=_number(e, "far", "evaluation", errors, 6.0, minimum=0.0),
        background=_triple(e, "background", "evaluation", errors, (1.0, 1.0, 1.0)),
    )

    gen = _mapping(doc.get("generation"), "generation", errors)
    gen_allowed = {
        "iterations", "edge_probability", "conditioning", "orientation_weight",
        "normal_smoothness_weight", "views_per_step", "resolution_schedule",
        "n_samples", "guidance_scale", "background", "lr_grid", "lr_mlp",
        "checkpoint_every", "camera", "light",
    }
    _reject_unknown(gen, gen_allowed, "generation", errors)
    orientation = _pair(gen, "orientation_weight", "generation", errors, (100.0, 1000.0))
    if any(w < 0 for w in orientation):
        errors.append(("generation.orientation_weight", "weights must be >= 0"))
    conditioning = gen.get("conditioning", "blended")
    if conditioning not in CONDITIONING_MODES:
        errors.append(
            ("generation.conditioning", f"expected one of {CONDITIONING_MODES}, got {conditioning!r}")
        )
        conditioning = "blended"
    schedule_doc = gen.get("resolution_schedule", [64, 128])
    try:
        resolution_schedule = tuple(int(v) for v in schedule_doc)
        if not resolution_schedule:
            raise ValueError
    except (TypeError, ValueError):
        errors.append(("generation.resolution_schedule", f"expected ints, got {schedule_doc!r}"))
        resolution_schedule = (64, 128)

    cam = _mapping(gen.get("camera"), "generation.camera", errors)
    _reject_unknown(cam, {"azimuth", "elevation_deg", "radius", "fov_deg"}, "generation.camera", errors)
    elev = _pair(cam, "elevation_deg", "generation.camera", errors, (-10.0, 45.0))
    camera = CameraDistribution(
        azimuth_range=_pair(cam, "azimuth", "generation.camera", errors, (0.0, 2.0 * np.pi)),
        elevation_range=(np.deg2rad(elev[0]), np.deg2rad(elev[1])),
        radius_range=_pair(cam, "radius", "generation.camera", errors, (1.5, 2.2)),
        fov=np.deg2rad(_number(cam, "fov_deg", "generation.camera", errors, 40.0, minimum=1.0, maximum=179.0)),
    )

    lt = _mapping(gen.get("light"), "generation.light", errors)
    _reject_unknown(lt, {"ambient", "diffuse", "direction_jitter"}, "generation.light", errors)
    light = LightConfig(
        ambient=_triple(lt, "ambient", "generation.light", errors, (0.25, 0.25, 0.25)),
        diffuse=_triple(lt, "diffuse", "generation.light", errors, (0.75, 0.75, 0.75)),
        direction_jitter=_number(lt, "direction_jitter", "generation.light", errors, 0.4, minimum=0.0),
    )
    if any(v < 0 for v in light.ambient) or any(v < 0 for v in light.diffuse):
        errors.append(("generation.light", "light intensities must be >= 0"))

    gen_kwargs = dict(
        iterations=_number(gen, "iterations", "generation", errors, 2000, minimum=0, kind=int),
        edge_probability=_number(gen, "edge_probability", "generation", errors, 0.5, minimum=0.0, maximum=1.0),
        conditioning=conditioning,
        orientation_weight_start=orientation[0],
        orientation_weight_end=orientation[1],
        normal_smoothness_weight=_number(gen, "normal_smoothness_weight", "generation", errors, 10.0, minimum=0.0),
        views_per_step=_number(gen, "views_per_step", "generation", errors, 1, minimum=1, kind=int),
        resolution_schedule=resolution_schedule,
        n_samples=_number(gen, "n_samples", "generation", errors, 32, minimum=2, kind=int),
        guidance_scale=_number(gen, "guidance_scale", "generation", errors, 1.0),
        background=_triple(gen, "background", "generation", errors, (1.0, 1.0, 1.0)),
        camera=camera,
        light=light,
        lr_grid=_number(gen, "lr_grid", "generation", errors, 1e-2, minimum=0.0),
        lr_mlp=_number(gen, "lr_mlp", "generation", errors, 1e-3, minimum=0.0),
        checkpoint_every=_number(gen, "checkpoint_every", "generation", errors, 0, minimum=0, kind=int),
    )

    sch = _mapping(doc.get("schedule"), "schedule", errors)
    _reject_unknown(sch, {"t_min", "t_max_start", "t_max_end"}, "schedule", errors)
    schedule_kwargs = dict(
        t_min=_number(sch, "t_min", "schedule", errors, 0.02),
        t_max_start=_number(sch, "t_max_start", "schedule", errors, 0.98),
        t_max_end=_number(sch, "t_max_end", "schedule", errors, 0.5),
        horizon=max(int(gen_kwargs["iterations"]), 1),
    )

    cr = _mapping(doc.get("critic"), "critic", errors)
    kind = cr.get("kind", "point_mass")
    if kind == "point_mass":
        _reject_unknown(cr, {"kind", "targets", "background"}, "critic", errors)
        targets_doc = cr.get("targets", [])
        targets = tuple(
            _parse_shape(t, f"critic.targets[{i}]", errors) for i, t in enumerate(targets_doc)
        )
        if targets and len(targets) != len(prompts):
            errors.append(("critic.targets", f"{len(targets)} targets for {len(prompts)} prompts"))
        critic = CriticSpec(
            kind="point_mass",
            targets=targets,
            background=_triple(cr, "background", "critic", errors, (1.0, 1.0, 1.0)),
        )
    elif kind == "remote":
        _reject_unknown(cr, {"kind", "host", "port", "guidance_scale", "max_attempts", "timeout"}, "critic", errors)
        critic = CriticSpec(
            kind="remote",
            host=str(cr.get("host", "127.0.0.1")),
            port=_number(cr, "port", "critic", errors, 0, minimum=1, maximum=65535, kind=int),
            guidance_scale=_number(cr, "guidance_scale", "critic", errors, 1.0),
            max_attempts=_number(cr, "max_attempts", "critic", errors, 3, minimum=1, kind=int),
            timeout=_number(cr, "timeout", "critic", errors, 30.0, minimum=0.0),
        )
    else:
        errors.append(("critic.kind", f"expected 'point_mass' or 'remote', got {kind!r}"))
        critic = CriticSpec(kind="point_mass")

    tr = _mapping(doc.get("transform"), "transform", errors)
    _reject_unknown(tr, {"photometric_weight", "source_vertex_index", "source", "fit"}, "transform", errors)
    fit_doc = _mapping(tr.get("fit"), "transform.fit", errors)
    _reject_unknown(
        fit_doc,
        {"iterations", "ray_batch", "n_samples", "background", "lr_grid", "lr_mlp",
         "psnr_target", "psnr_check_every"},
        "transform.fit",
        errors,
    )
    psnr_target = fit_doc.get("psnr_target")
    if psnr_target is not None:
        psnr_target = _number(fit_doc, "psnr_target", "transform.fit", errors, 25.0)
    fit = FitConfig(
        iterations=_number(fit_doc, "iterations", "transform.fit", errors, 3000, minimum=0, kind=int),
        ray_batch=_number(fit_doc, "ray_batch", "transform.fit", errors, 1024, minimum=1, kind=int),
        n_samples=_number(fit_doc, "n_samples", "transform.fit", errors, 48, minimum=2, kind=int),
        background=_triple(fit_doc, "background", "transform.fit", errors, (1.0, 1.0, 1.0)),
        lr_grid=_number(fit_doc, "lr_grid", "transform.fit", errors, 1e-2, minimum=0.0),
        lr_mlp=_number(fit_doc, "lr_mlp", "transform.fit", errors, 1e-3, minimum=0.0),
        psnr_target=psnr_target,
        psnr_check_every=_number(fit_doc, "psnr_check_every", "transform.fit", errors, 500, minimum=1, kind=int),
    )
    source = None
    if "source" in tr:
        src = _mapping(tr.get("source"), "transform.source", errors)
        _reject_unknown(src, {"shape", "views_dir", "n_views", "width", "height"}, "transform.source", errors)
        shape = _parse_shape(src["shape"], "transform.source.shape", errors) if "shape" in src else None
        views_dir = src.get("views_dir")
        if shape is None and views_dir is None:
            errors.append(("transform.source", "needs either 'shape' or 'views_dir'"))
        if views_dir is not None and not Path(views_dir).exists():
            errors.append(("transform.source.views_dir", f"path does not exist: {views_dir}"))
        source = SourceSpec(
            shape=shape,
            views_dir=views_dir,
            n_views=_number(src, "n_views", "transform.source", errors, 30, minimum=1, kind=int),
            width=_number(src, "width", "transform.source", errors, 64, minimum=1, kind=int),
            height=_number(src, "height", "transform.source", errors, 64, minimum=1, kind=int),
        )
    transform_kwargs = dict(
        photometric_weight=_number(tr, "photometric_weight", "transform", errors, 1.0, minimum=0.0),
        source_vertex_index=_number(tr, "source_vertex_index", "transform", errors, 0, minimum=0, kind=int),
        fit=fit,
    )

    if errors:
        raise ConfigError(errors)

    try:
        session = SessionConfig(
            prompts=prompts,
            seed=seed,
            output_dir=output_dir,
            density_bias=density_bias,
            grid=HashGridConfig(**grid_kwargs),
            mlp=MlpConfig(**mlp_kwargs),
            evaluation=evaluation,
            generation=GenerationConfig(**gen_kwargs),
            schedule=DiffusionSchedule(**schedule_kwargs),
            critic=critic,
            transform=TransformConfig(**transform_kwargs),
            source=source,
        )
    except (ConfigurationError, ValueError) as exc:
        raise ConfigError([("<config>", str(exc))])
    if session.transform.source_vertex_index >= len(prompts):
        raise ConfigError([("transform.source_vertex_index", "out of range for the prompt list")])
    return session


def load_config(path) -> SessionConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return parse_config(doc or {})


def serialize_config(cfg: SessionConfig) -> dict:
    """Canonical dict form; parse(serialize(x)) == serialize-stable."""
    gen = cfg.generation
    out = {
        "prompts": list(cfg.prompts),
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "density_bias": cfg.density_bias,
        "grid": {
            "levels": cfg.grid.levels,
            "base_resolution": cfg.grid.base_resolution,
            "per_level_scale": cfg.grid.per_level_scale,
            "features_per_level": cfg.grid.features_per_level,
            "table_size_log2": cfg.grid.table_size_log2,
            "bounds": [list(cfg.grid.bounds[0]), list(cfg.grid.bounds[1])],
        },
        "mlp": {
            "hidden_layers": cfg.mlp.hidden_layers,
            "width": cfg.mlp.width,
            "activation": cfg.mlp.activation,
        },
        "evaluation": {
            "width": cfg.evaluation.width,
            "height": cfg.evaluation.height,
            "n_samples": cfg.evaluation.n_samples,
            "near": cfg.evaluation.near,
            "far": cfg.evaluation.far,
            "background": list(cfg.evaluation.background),
        },
        "generation": {
            "iterations": gen.iterations,
            "edge_probability": gen.edge_probability,
            "conditioning": gen.conditioning,
            "orientation_weight": [gen.orientation_weight_start, gen.orientation_weight_end],
            "normal_smoothness_weight": gen.normal_smoothness_weight,
            "views_per_step": gen.views_per_step,
            "resolution_schedule": list(gen.resolution_schedule),
            "n_samples": gen.n_samples,
            "guidance_scale": gen.guidance_scale,
            "background": list(gen.background),
            "lr_grid": gen.lr_grid,
            "lr_mlp": gen.lr_mlp,
            "checkpoint_every": gen.checkpoint_every,
            "camera": {
                "azimuth": list(gen.camera.azimuth_range),
                "elevation_deg": [float(np.rad2deg(v)) for v in gen.camera.elevation_range],
                "radius": list(gen.camera.radius_range),
                "fov_deg": float(np.rad2deg(gen.camera.fov)),
            },
            "light": {
                "ambient": list(gen.light.ambient),
                "diffuse": list(gen.light.diffuse),
                "direction_jitter": gen.light.direction_jitter,
            },
        },
        "schedule": {
            "t_min": cfg.schedule.t_min,
            "t_max_start": cfg.schedule.t_max_start,
            "t_max_end": cfg.schedule.t_max_end,
        },
        "critic": _serialize_critic(cfg.critic),
        "transform": {
            "photometric_weight": cfg.transform.photometric_weight,
            "source_vertex_index": cfg.transform.source_vertex_index,
            "fit": {
                "iterations": cfg.transform.fit.iterations,
                "ray_batch": cfg.transform.fit.ray_batch,
                "n_samples": cfg.transform.fit.n_samples,
                "background": list(cfg.transform.fit.background),
                "lr_grid": cfg.transform.fit.lr_grid,
                "lr_mlp": cfg.transform.fit.lr_mlp,
                "psnr_target": cfg.transform.fit.psnr_target,
                "psnr_check_every": cfg.transform.fit.psnr_check_every,
            },
        },
    }
    if cfg.source is not None:
        src = {"n_views": cfg.source.n_views, "width": cfg.source.width, "height": cfg.source.height}
        if cfg.source.shape is not None:
            src["shape"] = _serialize_shape(cfg.source.shape)
        if cfg.source.views_dir is not None:
            src["views_dir"] = cfg.source.views_dir
        out["transform"]["source"] = src
    return out


def _serialize_shape(s: ShapeSpec) -> dict:
    doc = {"shape": s.shape, "center": list(s.center), "color": list(s.color)}
    if s.shape == "sphere":
        doc["radius"] = s.radius
    else:
        doc["half_extent"] = list(s.half_extent)
    return doc


def _serialize_critic(c: CriticSpec) -> dict:
    if c.kind == "point_mass":
        return {
            "kind": "point_mass",
            "targets": [_serialize_shape(t) for t in c.targets],
            "background": list(c.background),
        }
    return {
        "kind": "remote",
        "host": c.host,
        "port": c.port,
        "guidance_scale": c.guidance_scale,
        "max_attempts": c.max_attempts,
        "timeout": c.timeout,
    }


def save_config(path, cfg: SessionConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(serialize_config(cfg), fh, sort_keys=False)
