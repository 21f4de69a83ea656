"""Score distillation sampling against pluggable denoiser critics.

The critic interface is a single ``denoise(x_t, t, cond)`` call.  An
analytic point-mass critic ships in-repo for verification: for a
point-mass data distribution the optimal denoiser is
``(x_t - alpha_t * target) / sigma_t``, which makes the score-distillation
residual an exactly checkable weighted photometric pull.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import LatentCode

VERTEX = "vertex"
EDGE = "edge"

CONDITIONING_MODES = ("blended", "general_prompt", "unconditioned")


class GuidanceError(RuntimeError):
    """Critic failure; the training step that hit it can be skipped."""


@dataclass(frozen=True)
class EmbeddingSet:
    """One conditioning vector per simplex vertex, plus an optional general one."""

    vectors: np.ndarray  # [N, E]
    general: np.ndarray | None = None  # [E]

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a [N, E] array")
        object.__setattr__(self, "vectors", vectors)
        if self.general is not None:
            general = np.asarray(self.general, dtype=np.float64)
            if general.shape != (vectors.shape[1],):
                raise ValueError("general embedding dimension mismatch")
            object.__setattr__(self, "general", general)

    @property
    def n(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @classmethod
    def identity(cls, n: int, with_general: bool = True) -> "EmbeddingSet":
        """Basis-vector embeddings: blending then returns the latent weights."""
        return cls(np.eye(n), general=np.full(n, 1.0 / n) if with_general else None)


def blend_embeddings(u, embeddings: EmbeddingSet) -> np.ndarray:
    """Convex combination of the vertex embeddings weighted by the latent code."""
    vec = u.u if isinstance(u, LatentCode) else np.asarray(u, dtype=np.float64).reshape(-1)
    if vec.size != embeddings.n:
        raise ValueError(
            f"latent code has {vec.size} components, embedding set has {embeddings.n}"
        )
    return vec @ embeddings.vectors


@dataclass(frozen=True)
class DiffusionSchedule:
    """Variance-preserving cosine schedule with an annealed timestep ceiling."""

    t_min: float = 0.02
    t_max_start: float = 0.98
    t_max_end: float = 0.5
    horizon: int = 10000

    def __post_init__(self):
        if not 0.0 < self.t_min < self.t_max_end <= self.t_max_start < 1.0:
            raise ValueError("require 0 < t_min < t_max_end <= t_max_start < 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def alpha(self, t: float) -> float:
        return float(np.cos(0.5 * np.pi * t))

    def sigma(self, t: float) -> float:
        return float(np.sin(0.5 * np.pi * t))

    def weight(self, t: float) -> float:
        return self.sigma(t) ** 2

    def t_max(self, iteration: int) -> float:
        if self.horizon == 1:
            return self.t_max_end
        frac = min(max(iteration, 0), self.horizon - 1) / (self.horizon - 1)
        return self.t_max_start + (self.t_max_end - self.t_max_start) * frac

    def t_range(self, iteration: int) -> tuple[float, float]:
        return self.t_min, self.t_max(iteration)


def sample_timestep(iteration: int, schedule: DiffusionSchedule, rng: np.random.Generator) -> float:
    """Uniform draw from the annealed range, rounded to float32.

    The rounding keeps in-process and remote critics bit-identical: the wire
    protocol carries t as f32.
    """
    lo, hi = schedule.t_range(iteration)
    return float(np.float32(rng.uniform(lo, hi)))


@dataclass(frozen=True)
class Conditioning:
    """What a critic gets to see: blend weights, prompt strings, embedding."""

    weights: np.ndarray  # [N] float32 simplex weights
    prompts: tuple = ()
    embedding: np.ndarray | None = None
    guidance_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "weights", np.asarray(self.weights, dtype=np.float32).reshape(-1)
        )


def conditioning_for(
    u: LatentCode,
    site: str,
    mode: str,
    embeddings: EmbeddingSet,
    prompts=(),
    guidance_scale: float = 1.0,
) -> Conditioning:
    """Conditioning policy: vertices always use their own embedding; edges
    follow the configured mode (blended / general prompt / unconditioned)."""
    if mode not in CONDITIONING_MODES:
        raise ValueError(f"unknown conditioning mode {mode!r}")
    weights = u.u.astype(np.float32)
    if site == VERTEX or mode == "blended":
        embedding = blend_embeddings(u, embeddings)
    elif mode == "general_prompt":
        if embeddings.general is None:
            raise ValueError("general_prompt conditioning needs a general embedding")
        embedding = embeddings.general
        weights = np.zeros_like(weights)
    else:  # unconditioned
        embedding = np.zeros(embeddings.dim)
        weights = np.zeros_like(weights)
    return Conditioning(
        weights=weights,
        prompts=tuple(prompts),
        embedding=embedding,
        guidance_scale=guidance_scale,
    )


# ---------------------------------------------------------------------------
# critics


class PointMassCritic:
    """Optimal denoiser of a point-mass image distribution.

    With stacked per-vertex targets the conditioning weights select the
    convex blend of targets, giving a multi-object toy critic.
    """

    def __init__(self, targets: np.ndarray, schedule: DiffusionSchedule):
        targets = np.asarray(targets, dtype=np.float32)
        if targets.ndim not in (3, 4):
            raise ValueError("targets must be [H,W,C] or [N,H,W,C]")
        self.targets = targets
        self.schedule = schedule

    def target_for(self, cond: Conditioning | None) -> np.ndarray:
        if self.targets.ndim == 3:
            return self.targets
        if cond is None or cond.weights.size != self.targets.shape[0]:
            raise GuidanceError("conditioning weights do not match critic targets")
        return np.tensordot(cond.weights, self.targets, axes=(0, 0))

    def denoise(self, x_t: np.ndarray, t: float, cond: Conditioning | None = None) -> np.ndarray:
        target = self.target_for(cond)
        if x_t.shape != target.shape:
            raise GuidanceError(
                f"critic got image shape {x_t.shape}, targets are {target.shape}"
            )
        alpha = self.schedule.alpha(t)
        sigma = self.schedule.sigma(t)
        return (x_t - alpha * target) / sigma


# ---------------------------------------------------------------------------
# the score-distillation residual


def sds_residual(
    x: np.ndarray,
    cond: Conditioning | None,
    critic,
    schedule: DiffusionSchedule,
    t: float,
    noise: np.ndarray,
) -> np.ndarray:
    """The image-space factor w(t) * (eps_hat - eps) for one fixed (t, eps)."""
    if x.shape != noise.shape:
        raise ValueError("noise must match the image shape")
    alpha = schedule.alpha(t)
    sigma = schedule.sigma(t)
    x_t = alpha * x + sigma * noise
    eps_hat = critic.denoise(x_t, t, cond)
    eps_hat = np.asarray(eps_hat)
    if eps_hat.shape != x.shape:
        raise GuidanceError(
            f"critic returned shape {eps_hat.shape}, expected {x.shape}"
        )
    return schedule.weight(t) * (eps_hat - noise)


def sds_image_grad(
    x: np.ndarray,
    cond: Conditioning | None,
    critic,
    schedule: DiffusionSchedule,
    iteration: int,
    rng: np.random.Generator,
):
    """Draw (t, eps) and return (residual image, t).

    The residual is the gradient of the score-distillation objective with
    respect to the rendered image, treating the critic output as constant.
    """
    t = sample_timestep(iteration, schedule, rng)
    noise = rng.standard_normal(x.shape).astype(x.dtype, copy=False)
    return sds_residual(x, cond, critic, schedule, t, noise), t
