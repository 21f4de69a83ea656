"""Latent-conditioned reflectance field: hash-grid encoding and a shallow MLP.

The field maps a 3D position plus a probability-simplex latent code to
volumetric density and diffuse albedo.  Position features come from a
multiresolution hash grid, are concatenated with the latent code, and pass
through a small MLP; density uses a softplus activation (with a fixed bias
offset), albedo a per-channel sigmoid.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import tape
from .kernels.layout import GridLayout, build_layout


class InvalidInputError(ValueError):
    """Raised for non-finite or malformed numeric inputs."""


class ConfigurationError(ValueError):
    """Raised when shapes or configs are inconsistent."""


@dataclass(frozen=True)
class HashGridConfig:
    levels: int = 16
    base_resolution: int = 8
    per_level_scale: float = 1.4472692374403782
    features_per_level: int = 2
    table_size_log2: int = 15
    bounds: tuple = ((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigurationError("levels must be >= 1")
        if self.base_resolution < 2:
            raise ConfigurationError("base_resolution must be >= 2")
        if not self.per_level_scale > 1.0:
            raise ConfigurationError("per_level_scale must be > 1")
        if self.features_per_level < 1:
            raise ConfigurationError("features_per_level must be >= 1")
        lo, hi = (np.asarray(b, dtype=np.float64) for b in self.bounds)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(hi > lo):
            raise ConfigurationError("bounds must be a valid axis-aligned box")

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_level

    def level_resolutions(self) -> np.ndarray:
        scales = self.per_level_scale ** np.arange(self.levels)
        return np.floor(self.base_resolution * scales).astype(np.int32)

    def build_layout(self) -> GridLayout:
        lo, hi = (np.asarray(b, dtype=np.float64) for b in self.bounds)
        return build_layout(
            self.level_resolutions(), self.table_size_log2, lo, hi, self.features_per_level
        )

    @property
    def bounds_lo(self) -> np.ndarray:
        return np.asarray(self.bounds[0], dtype=np.float64)

    @property
    def bounds_hi(self) -> np.ndarray:
        return np.asarray(self.bounds[1], dtype=np.float64)

    def finest_cell_edge(self) -> float:
        extent = self.bounds_hi - self.bounds_lo
        return float(np.min(extent) / int(self.level_resolutions()[-1]))


@dataclass(frozen=True)
class MlpConfig:
    hidden_layers: int = 1
    width: int = 64
    activation: str = "relu"

    def __post_init__(self):
        if self.hidden_layers not in (1, 2, 3):
            raise ConfigurationError("hidden_layers must be 1, 2 or 3")
        if self.width < 1:
            raise ConfigurationError("width must be >= 1")
        if self.activation not in ("relu", "softplus"):
            raise ConfigurationError("activation must be 'relu' or 'softplus'")

    # density scalar + albedo triple
    OUTPUTS = 4

    def layer_dims(self, input_dim: int) -> list[tuple[int, int]]:
        widths = [input_dim] + [self.width] * self.hidden_layers + [self.OUTPUTS]
        return list(zip(widths[:-1], widths[1:]))


class LatentCode:
    """A point on the (N-1)-dimensional probability simplex."""

    __slots__ = ("u",)

    def __init__(self, u):
        u = np.array(u, dtype=np.float64).reshape(-1)
        if u.size < 1:
            raise ValueError("latent code needs at least one component")
        if not np.all(np.isfinite(u)):
            raise ValueError("latent code must be finite")
        if abs(float(u.sum()) - 1.0) > 1e-6:
            raise ValueError(f"latent code components must sum to 1, got {u.sum()!r}")
        if float(u.min()) < -1e-9:
            raise ValueError(f"latent code components must be nonnegative, got {u.min()!r}")
        u.setflags(write=False)
        self.u = u

    @property
    def n(self) -> int:
        return int(self.u.size)

    @classmethod
    def vertex(cls, i: int, n: int) -> "LatentCode":
        u = np.zeros(n)
        u[i] = 1.0
        return cls(u)

    @classmethod
    def edge_point(cls, i: int, j: int, t: float, n: int) -> "LatentCode":
        u = np.zeros(n)
        u[i] += t
        u[j] += 1.0 - t
        return cls(u)

    def __eq__(self, other):
        return isinstance(other, LatentCode) and np.array_equal(self.u, other.u)

    def __repr__(self):
        return f"LatentCode({self.u.tolist()})"


@dataclass(frozen=True)
class FieldSample:
    density: float
    albedo: np.ndarray  # [3] in [0, 1]


@dataclass
class FieldParams:
    """All trainable state of the field plus its structural configs.

    The flat parameter vector traverses, in order: the grid feature table
    (row major), then for each MLP layer its weight matrix (row major)
    followed by its bias.  ``density_bias`` is a fixed offset, not a
    trainable parameter, and is excluded from the flat vector.
    """

    grid_config: HashGridConfig
    mlp_config: MlpConfig
    n_objects: int
    tables: np.ndarray  # [total_rows, F]
    weights: list  # per layer [in, out]
    biases: list  # per layer [out]
    density_bias: float = 0.5
    layout: GridLayout = dataclasses.field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.layout is None:
            self.layout = self.grid_config.build_layout()

    @property
    def dtype(self) -> np.dtype:
        return self.tables.dtype

    @property
    def input_dim(self) -> int:
        return self.grid_config.output_dim + self.n_objects

    def param_count(self) -> int:
        n = self.tables.size
        for w, b in zip(self.weights, self.biases):
            n += w.size + b.size
        return n

    def flatten(self) -> np.ndarray:
        parts = [self.tables.ravel()]
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def unflatten(self, flat: np.ndarray) -> "FieldParams":
        flat = np.asarray(flat)
        if flat.size != self.param_count():
            raise ConfigurationError(
                f"expected {self.param_count()} parameters, got {flat.size}"
            )
        pos = 0

        def take(shape):
            nonlocal pos
            size = int(np.prod(shape))
            out = flat[pos : pos + size].reshape(shape).astype(self.dtype, copy=True)
            pos += size
            return out

        tables = take(self.tables.shape)
        weights, biases = [], []
        for w, b in zip(self.weights, self.biases):
            weights.append(take(w.shape))
            biases.append(take(b.shape))
        return dataclasses.replace(self, tables=tables, weights=weights, biases=biases)

    def copy(self) -> "FieldParams":
        return dataclasses.replace(
            self,
            tables=self.tables.copy(),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def leaves(self, t: tape.Tape):
        """Tape leaves in canonical traversal order plus a params view on them."""
        table_leaf = t.leaf(self.tables)
        weight_leaves = [t.leaf(w) for w in self.weights]
        bias_leaves = [t.leaf(b) for b in self.biases]
        leaves = [table_leaf]
        for w, b in zip(weight_leaves, bias_leaves):
            leaves.append(w)
            leaves.append(b)
        view = dataclasses.replace(
            self, tables=table_leaf, weights=weight_leaves, biases=bias_leaves
        )
        return view, leaves

    def flatten_grads(self, leaf_grads: list) -> np.ndarray:
        parts = [np.asarray(leaf_grads[0]).ravel()]
        for g in leaf_grads[1:]:
            parts.append(np.asarray(g).ravel())
        return np.concatenate(parts)

    def lr_scale(self, grid_scale: float, mlp_scale: float) -> np.ndarray:
        """Per-parameter learning-rate multipliers for the flat vector."""
        out = np.empty(self.param_count())
        out[: self.tables.size] = grid_scale
        out[self.tables.size :] = mlp_scale
        return out


def init_field_params(
    grid_config: HashGridConfig,
    mlp_config: MlpConfig,
    n_objects: int,
    rng: np.random.Generator,
    dtype=np.float32,
    density_bias: float = 0.5,
) -> FieldParams:
    """Fresh parameters: tiny uniform grid features, fan-in uniform MLP."""
    if n_objects < 1:
        raise ConfigurationError("n_objects must be >= 1")
    layout = grid_config.build_layout()
    tables = rng.uniform(-1e-4, 1e-4, size=(layout.total_rows, layout.features_per_level))
    weights, biases = [], []
    input_dim = grid_config.output_dim + n_objects
    for fan_in, fan_out in mlp_config.layer_dims(input_dim):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        biases.append(rng.uniform(-bound, bound, size=fan_out).astype(dtype))
    return FieldParams(
        grid_config=grid_config,
        mlp_config=mlp_config,
        n_objects=n_objects,
        tables=tables.astype(dtype),
        weights=weights,
        biases=biases,
        density_bias=density_bias,
        layout=layout,
    )


# ---------------------------------------------------------------------------
# batched evaluation (tape-capable: fields of ``params`` may be tape Vars)


def encode_batch(points: np.ndarray, params: FieldParams):
    return tape.encode(params.tables, points, params.layout)


def field_batch(points: np.ndarray, u_values: np.ndarray, params: FieldParams):
    """Density and albedo for a batch of points with per-point latent codes.

    points: [P, 3]; u_values: [P, N].  Returns (tau [P], rho [P, 3]).
    """
    features = encode_batch(points, params)
    x = tape.concat_last([features, u_values])
    h = x
    n_layers = len(params.weights)
    act = tape.relu if params.mlp_config.activation == "relu" else tape.softplus
    for i in range(n_layers):
        h = tape.add(tape.matmul(h, params.weights[i]), params.biases[i])
        if i < n_layers - 1:
            h = act(h)
    raw_tau = tape.reshape(tape.take_last(h, 0, 1), (-1,))
    raw_rgb = tape.take_last(h, 1, 4)
    tau = tape.softplus(tape.add(raw_tau, params.density_bias))
    rho = tape.sigmoid(raw_rgb)
    return tau, rho


def density_batch(points: np.ndarray, u_values: np.ndarray, params: FieldParams):
    tau, _ = field_batch(points, u_values, params)
    return tau


def normal_batch(points: np.ndarray, u_values: np.ndarray, field, h: float):
    """Finite-difference density normals, -grad(tau) normalized; tape-capable.

    ``field`` is a FieldParams or any object with a ``density(points, u)``
    method.  Rows where the density gradient nearly vanishes come out with
    tiny norm instead of the +z fallback of :func:`field_normal`; callers
    that need display normals fix those rows up on the value side.
    """
    density = (
        field.density
        if hasattr(field, "density")
        else (lambda p, u: density_batch(p, u, field))
    )
    comps = []
    for axis in range(3):
        offset = np.zeros(3, dtype=points.dtype)
        offset[axis] = h
        tau_plus = density(points + offset, u_values)
        tau_minus = density(points - offset, u_values)
        comps.append(tape.scale(tape.sub(tau_minus, tau_plus), 1.0 / (2.0 * h)))
    raw = tape.stack_last(comps)
    return tape.normalize_last(raw)


# ---------------------------------------------------------------------------
# single-point public operations


def _check_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise InvalidInputError(f"expected a finite 3D point, got {p!r}")
    return p


def encode_position(p, config: HashGridConfig, params: FieldParams) -> np.ndarray:
    """Concatenated per-level trilinear features at one position."""
    p = _check_point(p)
    del config  # layout travels with params; kept for signature clarity
    return np.asarray(encode_batch(p[None, :].astype(params.dtype), params))[0]


def eval_field(p, u: LatentCode, params: FieldParams) -> FieldSample:
    p = _check_point(p)
    if u.n != params.n_objects:
        raise ConfigurationError(
            f"latent code has {u.n} components, field expects {params.n_objects}"
        )
    tau, rho = field_batch(
        p[None, :].astype(params.dtype),
        u.u[None, :].astype(params.dtype),
        params,
    )
    return FieldSample(density=float(np.asarray(tau)[0]), albedo=np.asarray(rho)[0].copy())


def field_normal(p, u: LatentCode | None, field, h: float | None = None):
    """Unit surface normal from central differences of the density.

    ``field`` is a FieldParams or any object with ``density(points, u)``.
    Returns (normal, degenerate); a vanishing gradient yields the +z axis
    with the degenerate flag set.
    """
    p = _check_point(p)
    if isinstance(field, FieldParams):
        if h is None:
            h = 0.5 * field.grid_config.finest_cell_edge()
        dtype = field.dtype
        u_row = u.u[None, :].astype(dtype)
        density = lambda pts: float(np.asarray(density_batch(pts.astype(dtype), u_row, field))[0])
    else:
        if h is None:
            h = getattr(field, "normal_step", 1e-3)
        u_row = None if u is None else u.u[None, :]
        density = lambda pts: float(np.asarray(field.density(pts, u_row))[0])
    if not h > 0:
        raise InvalidInputError("step length h must be positive")
    grad = np.zeros(3)
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = h
        tau_plus = density((p + offset)[None, :])
        tau_minus = density((p - offset)[None, :])
        grad[axis] = (tau_plus - tau_minus) / (2.0 * h)
    norm = float(np.linalg.norm(grad))
    if norm < 1e-12:
        return np.array([0.0, 0.0, 1.0]), True
    return -grad / norm, False
