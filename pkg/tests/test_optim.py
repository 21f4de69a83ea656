import numpy as np
import pytest

from simplexfield import tape
from simplexfield.field import LatentCode
from simplexfield.optim import (
    AdamState,
    LossBreakdown,
    NonFiniteLossError,
    adam_step,
    finite_diff_check,
    loss_and_grads,
)
from simplexfield.render import LightSample, RayMarchConfig, generate_rays, render_rays
from simplexfield.fixtures import orbit_camera

from conftest import randomized_params, tiny_params


def sum_of_squares_build(view, t):
    total = None
    for leaf in [view.tables] + view.weights + view.biases:
        term = tape.scale(tape.sum_(tape.square(leaf)), 0.5)
        total = term if total is None else tape.add(total, term)
    return {"quadratic": (total, 1.0)}


def test_quadratic_loss_gradient_is_params_exactly():
    params = tiny_params(seed=4)
    breakdown, grads = loss_and_grads(params, sum_of_squares_build)
    np.testing.assert_allclose(grads, params.flatten(), rtol=1e-12)
    assert breakdown.total == pytest.approx(0.5 * float(np.sum(params.flatten() ** 2)))


def render_loss_build(params_plain, target, camera, light, config):
    origins, dirs = generate_rays(camera)

    def build(view, t):
        color, _, _, _ = render_rays(origins, dirs, LatentCode([0.3, 0.7]), view, light, config)
        diff = tape.sub(color, target)
        return {"photometric": (tape.mean(tape.square(diff)), 1.0)}

    return build


def _render_color(params, camera, light, config):
    origins, dirs = generate_rays(camera)
    color, _, _, _ = render_rays(origins, dirs, LatentCode([0.3, 0.7]), params, light, config)
    return np.asarray(color)


def test_photometric_self_loss_has_zero_gradient():
    params = tiny_params(seed=9)
    camera = orbit_camera(0.8, 0.2, 1.8, width=6, height=6)
    light = LightSample()
    config = RayMarchConfig(n_samples=12)
    target = _render_color(params, camera, light, config)
    breakdown, grads = loss_and_grads(
        params, render_loss_build(params, target, camera, light, config)
    )
    assert breakdown.terms["photometric"] == 0.0
    np.testing.assert_array_equal(grads, np.zeros_like(grads))


def test_loss_breakdown_bookkeeping_and_nonfinite_abort():
    params = tiny_params(seed=5)

    def build(view, t):
        q = tape.sum_(tape.square(view.tables))
        return {"a": (q, 2.0), "b": (tape.scale(q, 3.0), 0.25)}

    breakdown, _ = loss_and_grads(params, build)
    manual = 2.0 * breakdown.terms["a"] + 0.25 * breakdown.terms["b"]
    assert breakdown.total == pytest.approx(manual, abs=1e-12)

    def bad_build(view, t):
        return {"exploding": (float("nan"), 1.0)}

    with pytest.raises(NonFiniteLossError, match="exploding"):
        loss_and_grads(params, bad_build)


def test_gradient_linearity_through_loss_and_grads():
    params = tiny_params(seed=6)

    def term_builds(weight_a, weight_b):
        def build(view, t):
            qa = tape.sum_(tape.square(view.tables))
            qb = tape.sum_(tape.square(view.weights[0]))
            return {"a": (qa, weight_a), "b": (qb, weight_b)}

        return build

    _, ga = loss_and_grads(params, term_builds(1.0, 0.0))
    _, gb = loss_and_grads(params, term_builds(0.0, 1.0))
    _, gab = loss_and_grads(params, term_builds(0.7, -1.3))
    np.testing.assert_allclose(gab, 0.7 * ga - 1.3 * gb, rtol=1e-6, atol=1e-12)


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_gradient_leaves_params_unchanged():
    state = AdamState.init(5, lr=0.1)
    params = np.arange(5.0)
    updated = adam_step(params, np.zeros(5), state)
    np.testing.assert_array_equal(updated, params)


def test_adam_single_step_matches_hand_formula():
    lr, b1, b2, eps = 0.05, 0.9, 0.99, 1e-8
    g = 2.5
    state = AdamState.init(1, lr=lr, beta1=b1, beta2=b2, epsilon=eps)
    updated = adam_step(np.array([1.0]), np.array([g]), state)
    m_hat = (1 - b1) * g / (1 - b1)
    v_hat = (1 - b2) * g * g / (1 - b2)
    expected = 1.0 - lr * m_hat / (np.sqrt(v_hat) + eps)
    assert updated[0] == pytest.approx(expected, rel=1e-12)
    # first-step magnitude is ~lr regardless of gradient scale
    assert abs(updated[0] - 1.0) == pytest.approx(lr, rel=1e-6)


def test_adam_two_steps_match_scalar_recurrence():
    lr, b1, b2, eps = 0.1, 0.9, 0.99, 1e-8
    g = -0.7
    state = AdamState.init(1, lr=lr, beta1=b1, beta2=b2, epsilon=eps)
    p = np.array([0.3])
    seen = []
    for _ in range(2):
        p = adam_step(p, np.array([g]), state)
        seen.append(p[0])

    # independent recurrence
    m = v = 0.0
    x = 0.3
    ref = []
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        ref.append(x)
    np.testing.assert_allclose(seen, ref, rtol=1e-12)


def test_adam_is_permutation_invariant(rng):
    n = 16
    g = rng.normal(size=n)
    p = rng.normal(size=n)
    perm = rng.permutation(n)

    s1 = AdamState.init(n, lr=0.01)
    out1 = adam_step(p, g, s1)
    out1 = adam_step(out1, g * 0.5, s1)

    s2 = AdamState.init(n, lr=0.01)
    out2 = adam_step(p[perm], g[perm], s2)
    out2 = adam_step(out2, (g * 0.5)[perm], s2)

    np.testing.assert_allclose(out1[perm], out2, rtol=1e-12)


def test_adam_respects_lr_scale():
    state = AdamState.init(2, lr=1.0)
    p = np.zeros(2)
    out = adam_step(p, np.array([1.0, 1.0]), state, lr_scale=np.array([1.0, 0.1]))
    assert abs(out[1]) == pytest.approx(abs(out[0]) * 0.1, rel=1e-9)


# ---------------------------------------------------------------------------
# finite differences


def test_linear_loss_fd_error_tiny(rng):
    params = tiny_params(seed=12)
    coeffs = rng.normal(size=params.param_count())

    def loss_fn(p):
        return float(coeffs @ p.flatten())

    def build(view, t):
        total = None
        pos = 0
        for leaf in [view.tables] + [v for pair in zip(view.weights, view.biases) for v in pair]:
            size = np.size(leaf.value)
            c = coeffs[pos : pos + size].reshape(np.shape(leaf.value))
            term = tape.sum_(tape.mul(leaf, c))
            total = term if total is None else tape.add(total, term)
            pos += size
        return {"linear": (total, 1.0)}

    _, grads = loss_and_grads(params, build)
    idx = rng.choice(params.param_count(), size=20, replace=False)
    report = finite_diff_check(loss_fn, params, grads, idx, steps=(1e-4,))
    assert report.max_rel_error < 1e-8


def test_softplus_chain_fd_error_scales_quadratically(rng):
    params = tiny_params(seed=13)

    def loss_fn(p):
        return float(np.sum(np.logaddexp(0, np.logaddexp(0, p.flatten() * 0.8))))

    def build(view, t):
        total = None
        for leaf in [view.tables] + [v for pair in zip(view.weights, view.biases) for v in pair]:
            term = tape.sum_(tape.softplus(tape.softplus(tape.scale(leaf, 0.8))))
            total = term if total is None else tape.add(total, term)
        return {"chain": (total, 1.0)}

    _, grads = loss_and_grads(params, build)
    idx = [3]
    errs = {}
    for step in (2e-1, 1e-1):
        report = finite_diff_check(loss_fn, params, grads, idx, steps=(step,))
        errs[step] = abs(report.numeric[0] - report.analytic[0])
    # central differences: halving the step shrinks truncation ~4x
    ratio = errs[2e-1] / max(errs[1e-1], 1e-18)
    assert 2.5 < ratio < 6.0


def test_fd_check_through_small_render(rng):
    # O(1) table features: a fresh init's near-constant density makes the
    # normal direction numerically unresolvable for the FD oracle
    params = randomized_params(seed=14)
    camera = orbit_camera(1.0, 0.25, 1.8, width=5, height=5)
    light = LightSample(
        direction=(0.0, 0.0, 1.0), diffuse=(0.5, 0.5, 0.5), ambient=(0.3, 0.3, 0.3)
    )
    config = RayMarchConfig(n_samples=10)
    target = np.clip(_render_color(params, camera, light, config) + 0.1, 0, 1)

    def loss_fn(p):
        c = _render_color(p, camera, light, config)
        return float(np.mean((c - target) ** 2))

    def build(view, t):
        origins, dirs = generate_rays(camera)
        color, _, _, _ = render_rays(origins, dirs, LatentCode([0.3, 0.7]), view, light, config)
        return {"photometric": (tape.mean(tape.square(tape.sub(color, target))), 1.0)}

    _, grads = loss_and_grads(params, build)
    idx = rng.choice(params.param_count(), size=12, replace=False)
    # only check indices with non-negligible gradient signal
    idx = [i for i in idx if abs(grads[i]) > 1e-12][:8] or [int(np.argmax(np.abs(grads)))]
    report = finite_diff_check(loss_fn, params, grads, idx)
    assert report.max_rel_error < 5e-3
