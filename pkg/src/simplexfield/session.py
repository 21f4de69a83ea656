"""Session orchestration: build engine objects from a SessionConfig, run the
generation/transformation pipelines, and provide the one evaluation-render
path shared by the CLI and the service (byte-identical outputs)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, save_checkpoint
from .config import CriticSpec, EvalRenderConfig, SessionConfig, SourceSpec
from .field import FieldParams, LatentCode, init_field_params
from .fixtures import PosedView, SilhouetteTargets, render_fixture_views, ring_cameras
from .guidance import DiffusionSchedule, EmbeddingSet, PointMassCritic
from .images import encode_rgb_png
from .render import Camera, LightSample, RayMarchConfig, RenderedView, render_view
from .training import fit_to_views, train_generation, train_transform
from .wire import RemoteCritic


def build_params(cfg: SessionConfig, rng: np.random.Generator) -> FieldParams:
    return init_field_params(
        cfg.grid, cfg.mlp, cfg.n_objects, rng, dtype=np.float32, density_bias=cfg.density_bias
    )


def build_critic(spec: CriticSpec, schedule: DiffusionSchedule, n_objects: int):
    """A denoiser (remote) or camera-conditioned denoiser factory (point mass)."""
    if spec.kind == "remote":
        return RemoteCritic(
            spec.host, spec.port, max_attempts=spec.max_attempts, timeout=spec.timeout
        )
    if len(spec.targets) != n_objects:
        raise ValueError(
            f"point-mass critic needs one target per prompt ({n_objects}), got {len(spec.targets)}"
        )
    shapes = [t.build() for t in spec.targets]
    targets = SilhouetteTargets(
        shapes=shapes, colors=[t.color for t in spec.targets], background=spec.background
    )
    return lambda camera: PointMassCritic(targets(camera), schedule)


def build_source_views(source: SourceSpec, cfg: SessionConfig, rng: np.random.Generator):
    """Posed views of the transform's input model (analytic or on disk)."""
    if source.views_dir is not None:
        return load_views_dir(source.views_dir)
    shape = source.shape.build()
    azimuths = rng.uniform(0.0, 2.0 * np.pi, size=source.n_views)
    elevations = rng.uniform(*cfg.generation.camera.elevation_range, size=source.n_views)
    bounds_radius = float(np.max(np.asarray(cfg.grid.bounds[1])))
    radii = rng.uniform(*cfg.generation.camera.radius_range, size=source.n_views) * bounds_radius
    from .fixtures import orbit_camera

    cameras = [
        orbit_camera(a, e, r, width=source.width, height=source.height, fov=cfg.generation.camera.fov)
        for a, e, r in zip(azimuths, elevations, radii)
    ]
    march = RayMarchConfig(
        n_samples=cfg.transform.fit.n_samples * 2,
        background=cfg.transform.fit.background,
        stratified_jitter=False,
    )
    return render_fixture_views(shape, cameras, march)


def save_views_dir(path, views) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index = []
    for i, view in enumerate(views):
        name = f"view_{i:04d}.png"
        (path / name).write_bytes(encode_rgb_png(view.rgb))
        cam = view.camera
        index.append(
            {
                "image": name,
                "camera": {
                    "position": list(cam.position),
                    "target": list(cam.target),
                    "up": list(cam.up),
                    "vertical_fov": cam.vertical_fov,
                    "width": cam.width,
                    "height": cam.height,
                },
            }
        )
    (path / "views.json").write_text(json.dumps({"views": index}, indent=1), encoding="utf-8")


def load_views_dir(path):
    from PIL import Image

    path = Path(path)
    doc = json.loads((path / "views.json").read_text(encoding="utf-8"))
    views = []
    for entry in doc["views"]:
        cam = Camera(
            position=tuple(entry["camera"]["position"]),
            target=tuple(entry["camera"]["target"]),
            up=tuple(entry["camera"]["up"]),
            vertical_fov=float(entry["camera"]["vertical_fov"]),
            width=int(entry["camera"]["width"]),
            height=int(entry["camera"]["height"]),
        )
        img = np.asarray(Image.open(path / entry["image"]).convert("RGB"), dtype=np.float32) / 255.0
        views.append(PosedView(camera=cam, rgb=img))
    return views


# ---------------------------------------------------------------------------
# the single evaluation-render path (CLI/service parity)


def eval_render(
    params: FieldParams,
    camera: Camera,
    latent,
    maps=("rgb",),
    evaluation: EvalRenderConfig | None = None,
    light: LightSample | None = None,
) -> RenderedView:
    """Deterministic render with the session's evaluation settings."""
    evaluation = evaluation or EvalRenderConfig()
    march = RayMarchConfig(
        n_samples=evaluation.n_samples,
        near=evaluation.near,
        far=evaluation.far,
        stratified_jitter=False,
        background=evaluation.background,
    )
    return render_view(camera, latent, params, light or LightSample(), march, maps=maps)


def sweep_codes(pair: tuple, t_values, n: int):
    """Latent codes along one simplex edge; t=0 is the pair's first vertex."""
    i, j = pair
    return [LatentCode.edge_point(i, j, 1.0 - float(t), n) for t in t_values]


class MetricsWriter:
    """Line-delimited JSON metrics sink."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def __call__(self, record: dict) -> None:
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _checkpoint_writer(cfg: SessionConfig, out_dir: Path):
    def write(params: FieldParams, iteration: int) -> None:
        save_checkpoint(
            out_dir / "model.a3df",
            Checkpoint(params=params, prompts=cfg.prompts, iteration=iteration),
        )

    return write


def run_generate(cfg: SessionConfig, progress=None):
    """The full generation pipeline; returns the checkpoint path."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    params = build_params(cfg, rng)
    critic = build_critic(cfg.critic, cfg.schedule, cfg.n_objects)
    embeddings = EmbeddingSet.identity(cfg.n_objects)
    metrics = MetricsWriter(out_dir / "metrics.jsonl")

    def sink(record):
        metrics(record)
        if progress:
            progress(record)

    try:
        params, _ = train_generation(
            params,
            embeddings,
            critic,
            cfg.schedule,
            cfg.generation,
            rng,
            prompts=cfg.prompts,
            metrics_sink=sink,
            checkpoint_fn=_checkpoint_writer(cfg, out_dir),
        )
    finally:
        metrics.close()
    return out_dir / "model.a3df"


def run_transform(cfg: SessionConfig, progress=None):
    """Photometric fit of the source model, then anchored generation."""
    if cfg.source is None:
        raise ValueError("transform needs a transform.source entry in the config")
    if cfg.n_objects != 2:
        raise ValueError("transformation runs on exactly two prompts")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    params = build_params(cfg, rng)
    views = build_source_views(cfg.source, cfg, rng)
    metrics = MetricsWriter(out_dir / "metrics.jsonl")

    def sink(record):
        metrics(record)
        if progress:
            progress(record)

    try:
        params = fit_to_views(params, views, cfg.transform.fit, rng, metrics_sink=sink)
        save_checkpoint(
            out_dir / "fitted.a3df",
            Checkpoint(params=params, prompts=cfg.prompts, iteration=0),
        )
        critic = build_critic(cfg.critic, cfg.schedule, cfg.n_objects)
        embeddings = EmbeddingSet.identity(cfg.n_objects)
        params, _ = train_transform(
            params,
            embeddings,
            critic,
            cfg.schedule,
            cfg.generation,
            cfg.transform,
            views,
            rng,
            prompts=cfg.prompts,
            metrics_sink=sink,
            checkpoint_fn=_checkpoint_writer(cfg, out_dir),
        )
    finally:
        metrics.close()
    return out_dir / "model.a3df"
