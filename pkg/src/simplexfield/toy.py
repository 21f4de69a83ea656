"""The standard desk-scale toy fixture: two disjoint silhouette targets
(sphere above, box below) trained with analytic point-mass critics.

This is the fixture behind the edge-regularization ablation and the
transformation pipeline checks; it is sized to train in minutes on CPU.
"""

from __future__ import annotations

import numpy as np

from .config import EvalRenderConfig
from .field import FieldParams, HashGridConfig, LatentCode, MlpConfig, init_field_params
from .fixtures import SilhouetteTargets, orbit_camera, ring_cameras, toy_aligned_pair
from .guidance import DiffusionSchedule, EmbeddingSet, PointMassCritic
from .render import LightSample, RayMarchConfig, render_view
from .session import eval_render
from .training import CameraDistribution, GenerationConfig, LightConfig, train_generation

TOY_BOUNDS = ((-0.8, -0.8, -0.8), (0.8, 0.8, 0.8))
TOY_BOUNDS_RADIUS = 0.8


def toy_grid_config() -> HashGridConfig:
    return HashGridConfig(
        levels=8,
        base_resolution=8,
        per_level_scale=1.5,
        table_size_log2=15,
        bounds=TOY_BOUNDS,
    )


def toy_mlp_config() -> MlpConfig:
    return MlpConfig(hidden_layers=1, width=32)


def toy_camera_distribution() -> CameraDistribution:
    # low elevations keep the two targets' silhouettes disjoint in every view
    return CameraDistribution(
        elevation_range=(np.deg2rad(-5.0), np.deg2rad(20.0)),
        radius_range=(2.0, 2.5),
    )


def toy_generation_config(p: float, iterations: int) -> GenerationConfig:
    return GenerationConfig(
        iterations=iterations,
        edge_probability=p,
        orientation_weight_start=0.0,
        orientation_weight_end=0.0,
        normal_smoothness_weight=0.0,
        resolution_schedule=(64,),
        n_samples=16,
        camera=toy_camera_distribution(),
        light=LightConfig(ambient=(1.0, 1.0, 1.0), diffuse=(0.0, 0.0, 0.0)),
    )


def toy_targets() -> SilhouetteTargets:
    sphere, box = toy_aligned_pair()
    return SilhouetteTargets([sphere, box], [sphere.color, box.color])


def toy_params(seed: int) -> FieldParams:
    return init_field_params(
        toy_grid_config(), toy_mlp_config(), 2, np.random.default_rng(seed), dtype=np.float32
    )


def run_toy_generation(p: float, seed: int, iterations: int = 2000):
    """One ablation run; returns the trained parameters."""
    import os

    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    params = toy_params(seed)
    targets = toy_targets()
    schedule = DiffusionSchedule(horizon=iterations)
    critic = lambda camera: PointMassCritic(targets(camera), schedule)
    config = toy_generation_config(p, iterations)
    trained, _ = train_generation(
        params,
        EmbeddingSet.identity(2),
        critic,
        schedule,
        config,
        np.random.default_rng(seed),
        prompts=("toy sphere", "toy box"),
    )
    return trained


TOY_EVAL = EvalRenderConfig(width=64, height=64, n_samples=48, near=0.05, far=6.0)


def toy_eval_render(params: FieldParams, camera, latent, maps=("rgb", "opacity")):
    return eval_render(params, camera, latent, maps=maps, evaluation=TOY_EVAL)


def opacity_mass(params: FieldParams, latent, azimuths=(0.8, 2.4, 4.0, 5.6)) -> float:
    """Mean total opacity over a few fixed viewpoints."""
    masses = []
    for az in azimuths:
        camera = orbit_camera(az, np.deg2rad(10.0), 2.2, width=64, height=64)
        view = toy_eval_render(params, camera, latent, maps=("opacity",))
        masses.append(float(np.asarray(view.opacity).sum()))
    return float(np.mean(masses))


def vertex_render_provider(params: FieldParams, vertex: int):
    code = LatentCode.vertex(vertex, params.n_objects)

    def provider(camera):
        view = toy_eval_render(params, camera, code)
        return np.asarray(view.rgb), np.asarray(view.opacity)

    return provider


def run_toy_ablation_case(args):
    """(p, seed, iterations) -> summary dict; payload for worker pools."""
    p, seed, iterations = args
    from .alignment import CentroidCoordinateFeatures, multiview_alignment

    params = run_toy_generation(p, seed, iterations)
    masses = {
        "vertex0": opacity_mass(params, LatentCode.vertex(0, 2)),
        "vertex1": opacity_mass(params, LatentCode.vertex(1, 2)),
        "midpoint": opacity_mass(params, LatentCode([0.5, 0.5])),
    }
    cameras = ring_cameras(120, radius=2.2, width=64, height=64)
    report = multiview_alignment(
        vertex_render_provider(params, 0),
        vertex_render_provider(params, 1),
        cameras,
        CentroidCoordinateFeatures(),
        stride=2,
    )
    flat = params.flatten()
    return {
        "p": p,
        "seed": seed,
        "masses": masses,
        "alignment": report.mean_distance,
        "skipped_views": report.skipped_views,
        "params_checksum": float(np.abs(flat).sum()),
    }
