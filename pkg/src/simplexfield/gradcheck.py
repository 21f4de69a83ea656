"""The finite-difference verification harness behind `check-grad` and the
acceptance gradient criterion: reverse-mode vs 64-bit central differences
through a full render plus photometric loss on a tiny field."""

from __future__ import annotations

import dataclasses

import numpy as np

from . import tape
from .field import HashGridConfig, LatentCode, MlpConfig, init_field_params
from .fixtures import orbit_camera
from .optim import GradCheckReport, finite_diff_check, loss_and_grads
from .render import LightSample, RayMarchConfig, generate_rays, render_rays
from .training import photometric_loss


def tiny_field_params(seed: int = 0, table_scale: float = 0.5):
    """The tiny check configuration: 2 grid levels, an 8-wide hidden layer.

    Grid features are drawn at O(1) scale: a fresh init's near-constant
    density leaves the finite-difference normals too ill-conditioned for a
    numeric oracle to resolve.
    """
    grid = HashGridConfig(
        levels=2, base_resolution=4, per_level_scale=1.6, features_per_level=2, table_size_log2=8
    )
    mlp = MlpConfig(hidden_layers=1, width=8)
    rng = np.random.default_rng(seed)
    params = init_field_params(grid, mlp, 2, rng, dtype=np.float64)
    tables = rng.uniform(-table_scale, table_scale, size=params.tables.shape)
    return dataclasses.replace(params, tables=tables)


def run_gradient_check(
    n_indices: int = 100,
    seed: int = 0,
    steps=(1e-3, 1e-4, 1e-5),
    image_size: int = 10,
    n_samples: int = 12,
) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    params = tiny_field_params(seed=seed)
    camera = orbit_camera(0.9, 0.25, 1.8, width=image_size, height=image_size)
    light = LightSample(
        direction=(0.0, 0.0, 1.0), diffuse=(0.5, 0.5, 0.5), ambient=(0.3, 0.3, 0.3)
    )
    config = RayMarchConfig(n_samples=n_samples, stratified_jitter=False)
    origins, dirs = generate_rays(camera)
    code = LatentCode([0.3, 0.7])

    def render_color(p):
        color, _, _, _ = render_rays(origins, dirs, code, p, light, config)
        return np.asarray(tape._val(color))

    target = np.clip(render_color(params) + 0.07, 0.0, 1.0)

    def loss_fn(p):
        return float(tape._val(photometric_loss(render_color(p), target)))

    def build(view, t):
        color, _, _, _ = render_rays(origins, dirs, code, view, light, config)
        return {"photometric": (photometric_loss(color, target), 1.0)}

    _, grads = loss_and_grads(params, build)
    indices = rng.choice(params.param_count(), size=min(n_indices, params.param_count()), replace=False)
    return finite_diff_check(loss_fn, params, grads, indices, steps=steps)
