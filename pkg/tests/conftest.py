import numpy as np
import pytest

from simplexfield.field import HashGridConfig, MlpConfig, init_field_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_grid(levels=2, base=4, table_log2=8, bounds=((-1.0,) * 3, (1.0,) * 3)):
    return HashGridConfig(
        levels=levels,
        base_resolution=base,
        per_level_scale=1.6,
        features_per_level=2,
        table_size_log2=table_log2,
        bounds=bounds,
    )


def tiny_params(n_objects=2, dtype=np.float64, seed=7, width=8, hidden_layers=1, density_bias=0.5):
    rng = np.random.default_rng(seed)
    return init_field_params(
        tiny_grid(),
        MlpConfig(hidden_layers=hidden_layers, width=width),
        n_objects,
        rng,
        dtype=dtype,
        density_bias=density_bias,
    )


def randomized_params(n_objects=2, dtype=np.float64, seed=7, width=8, hidden_layers=1,
                      table_scale=0.5):
    """tiny_params with O(1) grid features.

    The fresh-init tables (~1e-4) make density nearly constant, so the
    finite-difference normals are almost degenerate and normalization is
    too ill-conditioned for numeric gradient checks.  Well-scaled random
    tables give an O(1) density landscape the FD oracle can resolve.
    """
    import dataclasses

    base = tiny_params(n_objects, dtype, seed, width, hidden_layers)
    rng = np.random.default_rng(seed + 1)
    tables = rng.uniform(-table_scale, table_scale, size=base.tables.shape).astype(dtype)
    return dataclasses.replace(base, tables=tables)


def numeric_grad(f, x, eps=1e-6):
    """Central-difference gradient of scalar f over a flat float64 vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp[i] += eps
        xm = x.copy()
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2 * eps)
    return g
