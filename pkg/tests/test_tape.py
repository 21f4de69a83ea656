import numpy as np
import pytest

from simplexfield import tape
from simplexfield.kernels import layout as klayout

from conftest import numeric_grad


def fd_check(build, x0, rtol=1e-5, atol=1e-8):
    """build(leaf) -> scalar Var; compares tape grad to central differences."""
    x0 = np.asarray(x0, dtype=np.float64)

    def value(flat):
        t = tape.Tape()
        leaf = t.leaf(flat.reshape(x0.shape))
        return float(tape._val(build(leaf)))

    t = tape.Tape()
    leaf = t.leaf(x0)
    loss = build(leaf)
    (g,) = t.gradients(loss, [leaf])
    fd = numeric_grad(value, x0.ravel()).reshape(x0.shape)
    np.testing.assert_allclose(g, fd, rtol=rtol, atol=atol)


def test_constant_mode_returns_plain_arrays():
    a = np.ones((2, 3))
    out = tape.softplus(tape.add(tape.matmul(a, np.ones((3, 2))), 1.0))
    assert isinstance(out, np.ndarray)


def test_matmul_and_bias_gradients(rng):
    w = rng.normal(size=(4, 3))
    x = rng.normal(size=(5, 4))
    fd_check(lambda lw: tape.sum_(tape.square(tape.matmul(x, lw))), w)
    b = rng.normal(size=3)
    fd_check(lambda lb: tape.sum_(tape.square(tape.add(x @ w, lb))), b)


@pytest.mark.parametrize(
    "op",
    [tape.softplus, tape.sigmoid, tape.square, tape.abs_, lambda v: tape.relu(v)],
    ids=["softplus", "sigmoid", "square", "abs", "relu"],
)
def test_elementwise_gradients(op, rng):
    x = rng.normal(size=(6, 2)) + 0.05  # keep away from relu/abs kinks
    fd_check(lambda lx: tape.mean(op(lx)), x)


def test_clip_passes_interior_blocks_exterior(rng):
    x = np.array([[-0.5, 0.3, 1.7]])
    t = tape.Tape()
    leaf = t.leaf(x)
    loss = tape.sum_(tape.clip(leaf, 0.0, 1.0))
    (g,) = t.gradients(loss, [leaf])
    np.testing.assert_array_equal(g, [[0.0, 1.0, 0.0]])


def test_concat_stack_slice_reshape_gradients(rng):
    a = rng.normal(size=(4, 2))

    def build(la):
        joined = tape.concat_last([la, np.ones((4, 3))])
        piece = tape.take_last(joined, 0, 2)
        bent = tape.reshape(piece, (2, 4))
        stacked = tape.stack_last([tape.sum_(bent), tape.mean(bent)])
        return tape.dot_last(stacked, np.array([1.0, 2.0]))

    fd_check(build, a)


def test_crop_gradient_zero_pads(rng):
    x = rng.normal(size=(3, 4, 2))
    key = (slice(0, 2), slice(1, 4))
    t = tape.Tape()
    leaf = t.leaf(x)
    loss = tape.sum_(tape.crop(leaf, key))
    (g,) = t.gradients(loss, [leaf])
    expected = np.zeros_like(x)
    expected[key] = 1.0
    np.testing.assert_array_equal(g, expected)


def test_normalize_last_gradient(rng):
    v = rng.normal(size=(5, 3)) * 2.0
    w = rng.normal(size=(5, 3))
    fd_check(lambda lv: tape.sum_(tape.mul(tape.normalize_last(lv), w)), v)


def test_gradient_linearity(rng):
    x = rng.normal(size=(7,))
    t = tape.Tape()
    leaf = t.leaf(x)
    l1 = tape.sum_(tape.square(leaf))
    l2 = tape.sum_(tape.softplus(leaf))
    a, b = 0.7, -2.3
    combined = tape.add(tape.scale(l1, a), tape.scale(l2, b))
    (g,) = t.gradients(combined, [leaf])

    t2 = tape.Tape()
    leaf2 = t2.leaf(x)
    (g1,) = t2.gradients(tape.sum_(tape.square(leaf2)), [leaf2])
    t3 = tape.Tape()
    leaf3 = t3.leaf(x)
    (g2,) = t3.gradients(tape.sum_(tape.softplus(leaf3)), [leaf3])
    np.testing.assert_allclose(g, a * g1 + b * g2, rtol=1e-12)


def test_unused_leaf_gets_zero_gradient(rng):
    x = rng.normal(size=(3,))
    y = rng.normal(size=(3,))
    t = tape.Tape()
    lx, ly = t.leaf(x), t.leaf(y)
    loss = tape.sum_(tape.square(lx))
    gx, gy = t.gradients(loss, [lx, ly])
    assert np.any(gx != 0)
    np.testing.assert_array_equal(gy, np.zeros_like(y))


def test_mixed_tapes_rejected(rng):
    t1, t2 = tape.Tape(), tape.Tape()
    a = t1.leaf(np.ones(3))
    b = t2.leaf(np.ones(3))
    with pytest.raises(ValueError):
        tape.add(a, b)


def test_composite_op_multi_output_gradients(rng):
    r, s = 2, 5
    tau = rng.uniform(0.2, 3.0, size=(r, s))
    rad = rng.uniform(0, 1, size=(r, s, 3))
    deltas = rng.uniform(0.05, 0.2, size=(r, s))
    dists = np.cumsum(deltas, axis=1)
    bg = np.array([0.9, 0.1, 0.4])
    wc = rng.normal(size=(r, 3))
    wo = rng.normal(size=r)
    wd = rng.normal(size=r)

    def build(ltau):
        c, o, d = tape.composite(ltau, rad, deltas, dists, bg)
        return tape.add(
            tape.add(tape.sum_(tape.mul(c, wc)), tape.sum_(tape.mul(o, wo))),
            tape.sum_(tape.mul(d, wd)),
        )

    fd_check(build, tau, rtol=1e-4, atol=1e-7)

    # radiance gradient too, holding tau constant
    def build_rad(lrad):
        c, o, d = tape.composite(tau, lrad, deltas, dists, bg)
        return tape.sum_(tape.mul(c, wc))

    fd_check(build_rad, rad, rtol=1e-5, atol=1e-8)


def test_encode_op_gradient(rng):
    layout = klayout.build_layout(
        np.array([3, 5], dtype=np.int32), 6, np.full(3, -1.0), np.full(3, 1.0), 2
    )
    tables = rng.normal(size=(layout.total_rows, 2))
    pts = rng.uniform(-1, 1, size=(6, 3))
    wfeat = rng.normal(size=(6, layout.output_dim))

    def build(lt):
        return tape.sum_(tape.mul(tape.encode(lt, pts, layout), wfeat))

    fd_check(build, tables, rtol=1e-6, atol=1e-9)
