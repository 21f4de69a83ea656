"""simplexfield: latent-simplex conditioned neural reflectance fields.

A differentiable engine that represents N objects in one hash-grid NeRF
conditioned on a probability-simplex latent code, trains it with score
distillation against pluggable denoiser critics, and ships hybrid
rendering, structure-preserving transformation, and structural-alignment
metrics around it.
"""

__version__ = "0.1.0"

from .field import (
    ConfigurationError,
    FieldParams,
    FieldSample,
    HashGridConfig,
    InvalidInputError,
    LatentCode,
    MlpConfig,
    encode_position,
    eval_field,
    field_normal,
    init_field_params,
)
from .render import Camera, LightSample, RayMarchConfig, RenderedView, generate_rays, render_ray, render_view

__all__ = [
    "Camera",
    "ConfigurationError",
    "FieldParams",
    "FieldSample",
    "HashGridConfig",
    "InvalidInputError",
    "LatentCode",
    "LightSample",
    "MlpConfig",
    "RayMarchConfig",
    "RenderedView",
    "encode_position",
    "eval_field",
    "field_normal",
    "generate_rays",
    "init_field_params",
    "render_ray",
    "render_view",
]
