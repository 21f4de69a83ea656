import numpy as np
import pytest

from simplexfield import kernels
from simplexfield.kernels import layout as klayout
from simplexfield.kernels import reference

BACKENDS = [kernels._BACKENDS[name] for name in kernels.available_backends()]
BACKEND_IDS = list(kernels.available_backends())


def small_layout(levels=3, base=4, table_log2=6):
    res = np.floor(base * 1.7 ** np.arange(levels)).astype(np.int32)
    return klayout.build_layout(res, table_log2, np.full(3, -1.0), np.full(3, 1.0), 2)


def rand_tables(layout, rng, dtype=np.float64):
    return rng.normal(size=(layout.total_rows, layout.features_per_level)).astype(dtype)


# ---------------------------------------------------------------------------
# hash encoding


@pytest.mark.parametrize("backend", BACKENDS, ids=BACKEND_IDS)
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_zero_tables_encode_to_zero(backend, dtype, rng):
    layout = small_layout()
    tables = np.zeros((layout.total_rows, 2), dtype=dtype)
    pts = rng.uniform(-1, 1, size=(17, 3)).astype(dtype)
    feat = backend.hash_encode_forward(pts, tables, layout)
    assert feat.shape == (17, layout.output_dim)
    assert feat.dtype == dtype
    assert np.all(feat == 0)


@pytest.mark.parametrize("backend", BACKENDS, ids=BACKEND_IDS)
def test_lattice_vertex_hits_exact_row(backend, rng):
    # on a level's lattice vertex the interpolation weights collapse to one row
    layout = small_layout(levels=1, base=4, table_log2=8)  # dense level
    tables = rand_tables(layout, rng)
    res = int(layout.level_res[0])
    k = np.array([1, 3, 2])
    p = -1.0 + 2.0 * k / res  # vertex (1,3,2) of the level-0 lattice
    feat = backend.hash_encode_forward(p[None, :], tables, layout)
    side = res + 1
    row = (k[0] * side + k[1]) * side + k[2]
    np.testing.assert_allclose(feat[0], tables[row], rtol=0, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=BACKEND_IDS)
def test_cell_center_matches_trilinear_oracle(backend, rng):
    layout = small_layout(levels=1, base=4, table_log2=8)  # dense level
    tables = rand_tables(layout, rng)
    res = int(layout.level_res[0])
    side = res + 1
    cell = np.array([2, 0, 3])
    center = -1.0 + 2.0 * (cell + 0.5) / res
    feat = backend.hash_encode_forward(center[None, :], tables, layout)
    corners = [
        ((cell[0] + dx) * side + (cell[1] + dy)) * side + (cell[2] + dz)
        for dx in (0, 1)
        for dy in (0, 1)
        for dz in (0, 1)
    ]
    expected = tables[corners].mean(axis=0)
    np.testing.assert_allclose(feat[0], expected, rtol=1e-12, atol=1e-12)

    # and a generic off-center point against a direct trilinear evaluation
    p = np.array([0.13, -0.42, 0.77])
    feat = backend.hash_encode_forward(p[None, :], tables, layout)
    x = (p + 1.0) / 2.0 * res
    c0 = np.floor(x).astype(int)
    f = x - c0
    acc = np.zeros(2)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                w = (f[0] if dx else 1 - f[0]) * (f[1] if dy else 1 - f[1]) * (
                    f[2] if dz else 1 - f[2]
                )
                row = ((c0[0] + dx) * side + (c0[1] + dy)) * side + (c0[2] + dz)
                acc += w * tables[row]
    np.testing.assert_allclose(feat[0], acc, rtol=1e-12)


def test_backends_agree_on_encoding(rng):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    layout = small_layout(levels=4, base=5, table_log2=8)  # coarse dense, fine hashed
    assert layout.hashed.any() and not layout.hashed.all()
    tables = rand_tables(layout, rng)
    pts = rng.uniform(-1.2, 1.2, size=(64, 3))  # includes out-of-bounds clamping
    feats = [b.hash_encode_forward(pts, tables, layout) for b in BACKENDS]
    np.testing.assert_allclose(feats[0], feats[1], rtol=1e-12, atol=1e-12)
    dfeat = rng.normal(size=feats[0].shape)
    grads = [b.hash_encode_backward(pts, dfeat, layout) for b in BACKENDS]
    np.testing.assert_allclose(grads[0], grads[1], rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=BACKEND_IDS)
def test_encode_backward_matches_finite_differences(backend, rng):
    layout = small_layout(levels=2, base=3, table_log2=5)
    tables = rand_tables(layout, rng)
    pts = rng.uniform(-1, 1, size=(5, 3))
    dfeat = rng.normal(size=(5, layout.output_dim))
    grad = backend.hash_encode_backward(pts, dfeat, layout)
    eps = 1e-6
    for row, f in [(0, 0), (3, 1), (11, 0), (layout.total_rows - 1, 1)]:
        tp = tables.copy()
        tp[row, f] += eps
        tm = tables.copy()
        tm[row, f] -= eps
        lp = float(np.sum(backend.hash_encode_forward(pts, tp, layout) * dfeat))
        lm = float(np.sum(backend.hash_encode_forward(pts, tm, layout) * dfeat))
        np.testing.assert_allclose(grad[row, f], (lp - lm) / (2 * eps), rtol=1e-6, atol=1e-9)


def test_encoding_locality(rng):
    # perturbing a table row only moves points whose cell touches that vertex
    layout = small_layout(levels=1, base=4, table_log2=8)  # dense level
    tables = rand_tables(layout, rng)
    pts = rng.uniform(-1, 1, size=(200, 3))
    base_feat = reference.hash_encode_forward(pts, tables, layout)
    res = int(layout.level_res[0])
    side = res + 1
    vertex = np.array([2, 2, 2])
    row = (vertex[0] * side + vertex[1]) * side + vertex[2]
    tables2 = tables.copy()
    tables2[row] += 1.0
    feat2 = reference.hash_encode_forward(pts, tables2, layout)
    changed = np.any(feat2 != base_feat, axis=1)
    cell = np.floor(np.clip((pts + 1) / 2, 0, 1) * res).astype(int)
    touches = np.all((vertex - 1 <= cell) & (cell <= vertex), axis=1)
    assert np.array_equal(changed, changed & touches)


# ---------------------------------------------------------------------------
# compositing


@pytest.mark.parametrize("backend", BACKENDS, ids=BACKEND_IDS)
def test_empty_space_renders_background(backend):
    tau = np.zeros((3, 8))
    rad = np.full((3, 8, 3), 0.7)
    deltas = np.full((3, 8), 0.1)
    dists = np.cumsum(deltas, axis=1)
    bg = np.array([0.2, 0.4, 0.6])
    color, opacity, depth, _ = backend.composite_forward(tau, rad, deltas, dists, bg)
    np.testing.assert_allclose(color, np.tile(bg, (3, 1)), atol=1e-12)
    np.testing.assert_allclose(opacity, 0.0, atol=1e-12)
    np.testing.assert_allclose(depth, 0.0, atol=1e-6)


@pytest.mark.parametrize("backend", BACKENDS, ids=BACKEND_IDS)
def test_single_segment_alpha_half(backend):
    # tau * delta = ln 2 makes the first sample half opaque
    tau = np.array([[np.log(2.0) / 0.25]])
    rad = np.ones((1, 1, 3))
    deltas = np.array([[0.25]])
    dists = np.array([[1.0]])
    color, opacity, _, aux = backend.composite_forward(tau, rad, deltas, dists, np.zeros(3))
    np.testing.assert_allclose(aux.alpha[0, 0], 0.5, rtol=1e-12)
    np.testing.assert_allclose(opacity[0], 0.5, rtol=1e-12)
    np.testing.assert_allclose(color[0], [0.5, 0.5, 0.5], rtol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=BACKEND_IDS)
def test_transmittance_monotone_and_energy_bounded(backend, rng):
    tau = rng.uniform(0, 30, size=(20, 32))
    rad = rng.uniform(0, 1, size=(20, 32, 3))
    deltas = rng.uniform(0.01, 0.05, size=(20, 32))
    dists = np.cumsum(deltas, axis=1)
    bg = rng.uniform(0, 1, size=3)
    color, opacity, _, aux = backend.composite_forward(tau, rad, deltas, dists, bg)
    assert np.all(np.diff(aux.trans, axis=1) <= 1e-12)
    np.testing.assert_allclose(aux.trans[:, 0], 1.0)
    assert np.all(opacity >= 0) and np.all(opacity <= 1 + 1e-9)
    assert np.all(color >= -1e-9) and np.all(color <= 1 + 1e-9)


@pytest.mark.parametrize("backend", BACKENDS, ids=BACKEND_IDS)
def test_composite_backward_matches_finite_differences(backend, rng):
    r, s = 3, 6
    tau = rng.uniform(0.1, 4.0, size=(r, s))
    rad = rng.uniform(0, 1, size=(r, s, 3))
    deltas = rng.uniform(0.05, 0.2, size=(r, s))
    dists = np.cumsum(deltas, axis=1)
    bg = np.array([0.3, 0.8, 0.1])
    dcolor = rng.normal(size=(r, 3))
    dopacity = rng.normal(size=r)
    ddepth = rng.normal(size=r)

    def loss(tau_in, rad_in):
        c, o, d, _ = backend.composite_forward(tau_in, rad_in, deltas, dists, bg)
        return float(np.sum(c * dcolor) + np.sum(o * dopacity) + np.sum(d * ddepth))

    _, _, _, aux = backend.composite_forward(tau, rad, deltas, dists, bg)
    dtau, drad = backend.composite_backward(aux, dcolor, dopacity, ddepth)

    eps = 1e-6
    for idx in [(0, 0), (1, 3), (2, 5)]:
        tp = tau.copy()
        tp[idx] += eps
        tm = tau.copy()
        tm[idx] -= eps
        fd = (loss(tp, rad) - loss(tm, rad)) / (2 * eps)
        np.testing.assert_allclose(dtau[idx], fd, rtol=1e-5, atol=1e-8)
    for idx in [(0, 2, 1), (2, 4, 0)]:
        rp = rad.copy()
        rp[idx] += eps
        rm = rad.copy()
        rm[idx] -= eps
        fd = (loss(tau, rp) - loss(tau, rm)) / (2 * eps)
        np.testing.assert_allclose(drad[idx], fd, rtol=1e-5, atol=1e-8)


def test_backends_agree_on_compositing(rng):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    r, s = 9, 24
    tau = rng.uniform(0, 10, size=(r, s))
    rad = rng.uniform(0, 1, size=(r, s, 3))
    deltas = rng.uniform(0.01, 0.1, size=(r, s))
    dists = np.cumsum(deltas, axis=1)
    bg = np.array([1.0, 1.0, 1.0])
    outs = [b.composite_forward(tau, rad, deltas, dists, bg) for b in BACKENDS]
    for a, b in zip(outs[0][:3], outs[1][:3]):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
    dcolor = rng.normal(size=(r, 3))
    grads = [
        b.composite_backward(o[3], dcolor, None, None) for b, o in zip(BACKENDS, outs)
    ]
    np.testing.assert_allclose(grads[0][0], grads[1][0], rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(grads[0][1], grads[1][1], rtol=1e-9, atol=1e-12)


def test_backend_selection_roundtrip():
    start = kernels.backend_name()
    for name in kernels.available_backends():
        kernels.set_backend(name)
        assert kernels.backend_name() == name
    kernels.set_backend(start)
    with pytest.raises(ValueError):
        kernels.set_backend("not-a-backend")
