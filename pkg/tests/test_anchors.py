import numpy as np
import pytest

from simplexfield.anchors import (
    Anchor,
    AnchorFormatError,
    AnchorSet,
    format_anchor_text,
    latent_at,
    latent_field,
    latent_values_at,
    parse_anchor_text,
    render_hybrid,
    smoothstep,
)
from simplexfield.field import ConfigurationError, LatentCode
from simplexfield.fixtures import orbit_camera
from simplexfield.render import LightSample, RayMarchConfig, render_view

from conftest import tiny_params


def make_set(positions, codes, smoothing=0.0):
    return AnchorSet(
        anchors=tuple(
            Anchor(position=tuple(p), code=LatentCode(c)) for p, c in zip(positions, codes)
        ),
        smoothing=smoothing,
    )


def test_single_anchor_returns_its_code():
    s = make_set([(0.1, 0.2, 0.3)], [[0.25, 0.75]])
    np.testing.assert_allclose(latent_at((0.9, -0.5, 0.0), s).u, [0.25, 0.75])


def test_query_at_anchor_position_is_exact():
    s = make_set([(0.0, 0.0, 0.0), (0.5, 0.0, 0.0)], [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(latent_at((0.0, 0.0, 0.0), s).u, [1.0, 0.0])
    np.testing.assert_allclose(latent_at((0.5, 0.0, 0.0), s).u, [0.0, 1.0])


def test_equidistant_point_blends_half_half():
    s = make_set([(-0.4, 0, 0), (0.4, 0, 0)], [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(latent_at((0.0, 0.1, 0.0), s).u, [0.5, 0.5], atol=1e-12)
    smooth = make_set([(-0.4, 0, 0), (0.4, 0, 0)], [[1.0, 0.0], [0.0, 1.0]], smoothing=1.0)
    np.testing.assert_allclose(latent_at((0.0, 0.1, 0.0), smooth).u, [0.5, 0.5], atol=1e-12)


def test_three_collinear_anchors_match_brute_force(rng):
    positions = [(-0.6, 0, 0), (0.0, 0, 0), (0.6, 0, 0)]
    codes = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    s = make_set(positions, codes)
    for x in rng.uniform(-0.55, 0.55, size=25):
        p = np.array([x, 0.02, -0.01])
        got = latent_at(p, s).u
        d = [np.linalg.norm(p - np.asarray(q)) for q in positions]
        order = np.argsort(d, kind="stable")[:2]
        d1, d2 = d[order[0]], d[order[1]]
        w = d2 / (d1 + d2)
        expected = w * np.asarray(codes[order[0]], float) + (1 - w) * np.asarray(
            codes[order[1]], float
        )
        np.testing.assert_allclose(got, expected, atol=1e-12)


def test_smoothstep_applied_when_width_positive(rng):
    positions = [(-0.5, 0, 0), (0.5, 0, 0)]
    codes = [[1.0, 0.0], [0.0, 1.0]]
    plain = make_set(positions, codes, smoothing=0.0)
    eased = make_set(positions, codes, smoothing=0.5)
    p = (-0.2, 0.0, 0.0)
    d1, d2 = 0.3, 0.7
    w = d2 / (d1 + d2)
    np.testing.assert_allclose(latent_at(p, plain).u[0], w, atol=1e-12)
    np.testing.assert_allclose(latent_at(p, eased).u[0], smoothstep(w), atol=1e-12)


def test_outputs_are_valid_latent_codes(rng):
    positions = rng.uniform(-0.8, 0.8, size=(5, 3))
    codes = rng.dirichlet(np.ones(3), size=5)
    s = make_set(positions, codes)
    pts = rng.uniform(-1, 1, size=(200, 3))
    values = latent_values_at(pts, s)
    np.testing.assert_allclose(values.sum(axis=1), 1.0, atol=1e-9)
    assert values.min() >= -1e-9
    for v in values[:5]:
        LatentCode(v)  # constructor re-validates


def test_far_anchor_does_not_influence(rng):
    positions = [(-0.5, 0, 0), (0.5, 0, 0), (0.0, 5.0, 0.0)]
    codes = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    near = make_set(positions[:2], [c[:2] + [0.0] for c in codes[:2]])
    p = (0.1, 0.0, 0.0)
    with_far = make_set(positions, codes)
    moved_far = make_set([positions[0], positions[1], (0.0, 9.0, 0.0)], codes)
    np.testing.assert_array_equal(latent_at(p, with_far).u, latent_at(p, moved_far).u)


def test_jump_across_tie_surface_is_bounded(rng):
    # three anchors; crossing the plane where the nearest pair swaps
    positions = [(-0.5, 0, 0), (0.5, 0, 0), (0.0, 0.6, 0.0)]
    codes = np.eye(3)
    s = make_set(positions, codes)
    xs = np.linspace(-0.05, 0.05, 101)
    pts = np.stack([xs, np.full_like(xs, 0.31), np.zeros_like(xs)], axis=1)
    values = latent_values_at(pts, s)
    jumps = np.abs(np.diff(values, axis=0)).sum(axis=1)
    # the swapped anchors' codes differ by 2 in L1; jumps never exceed that
    assert jumps.max() <= 2.0 + 1e-9


def test_anchor_set_validation():
    with pytest.raises(ConfigurationError):
        AnchorSet(anchors=())
    a = Anchor(position=(0, 0, 0), code=LatentCode([1.0]))
    with pytest.raises(ConfigurationError):
        AnchorSet(anchors=(a, Anchor(position=(0, 0, 0), code=LatentCode([1.0]))))
    with pytest.raises(ConfigurationError):
        AnchorSet(
            anchors=(a, Anchor(position=(1, 0, 0), code=LatentCode([0.5, 0.5])))
        )


# ---------------------------------------------------------------------------
# hybrid rendering


AMBIENT = LightSample()


def test_constant_anchor_field_matches_fixed_latent_render():
    params = tiny_params(seed=8, dtype=np.float32)
    code = [0.25, 0.75]
    anchors = make_set([(-0.3, 0, 0), (0.4, 0.2, 0)], [code, code])
    cam = orbit_camera(0.8, 0.2, 1.8, width=10, height=10)
    cfg = RayMarchConfig(n_samples=16)
    hybrid = render_hybrid(cam, anchors, params, AMBIENT, cfg, maps=("rgb", "opacity"))
    fixed = render_view(cam, LatentCode(code), params, AMBIENT, cfg, maps=("rgb", "opacity"))
    np.testing.assert_array_equal(np.asarray(hybrid.rgb), np.asarray(fixed.rgb))


def test_anchor_order_does_not_change_image():
    params = tiny_params(seed=8, dtype=np.float32)
    positions = [(-0.4, 0, 0), (0.4, 0, 0), (0.0, 0.5, 0.1)]
    codes = [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]
    cam = orbit_camera(1.2, 0.1, 1.8, width=10, height=10)
    cfg = RayMarchConfig(n_samples=16)
    a = render_hybrid(cam, make_set(positions, codes), params, AMBIENT, cfg, maps=("rgb",))
    perm = [2, 0, 1]
    b = render_hybrid(
        cam,
        make_set([positions[i] for i in perm], [codes[i] for i in perm]),
        params,
        AMBIENT,
        cfg,
        maps=("rgb",),
    )
    np.testing.assert_array_equal(np.asarray(a.rgb), np.asarray(b.rgb))


def test_render_hybrid_rejects_dimension_mismatch():
    params = tiny_params(seed=8, dtype=np.float32)  # two objects
    anchors = make_set([(0, 0, 0)], [[0.2, 0.3, 0.5]])
    with pytest.raises(ConfigurationError):
        render_hybrid(
            orbit_camera(0.1, 0.1, 1.8, 4, 4), anchors, params, AMBIENT, RayMarchConfig(n_samples=4)
        )


# ---------------------------------------------------------------------------
# text format


def test_anchor_text_round_trips_bit_exactly():
    s = make_set(
        [(-0.125, 0.5, 0.0078125), (0.3333333333333333, -0.7, 0.25)],
        [[0.25, 0.75], [1.0, 0.0]],
    )
    text = format_anchor_text(s)
    parsed = parse_anchor_text(text)
    assert format_anchor_text(parsed) == text
    for orig, round_tripped in zip(s.anchors, parsed.anchors):
        assert orig.position == round_tripped.position
        np.testing.assert_array_equal(orig.code.u, round_tripped.code.u)


def test_anchor_text_comments_and_blank_lines():
    text = """
# hybrid layout
0.0 0.0 0.3   1.0 0.0   # head
0.0 0.0 -0.3  0.0 1.0
"""
    parsed = parse_anchor_text(text)
    assert len(parsed.anchors) == 2
    np.testing.assert_array_equal(parsed.anchors[0].code.u, [1.0, 0.0])


def test_anchor_text_errors_carry_line_numbers():
    text = "0 0 0 1.0 0.0\nnot numbers here\n0 0 1 0.9 0.2\n"
    with pytest.raises(AnchorFormatError) as err:
        parse_anchor_text(text)
    lines = [ln for ln, _ in err.value.errors]
    assert 2 in lines and 3 in lines  # bad floats; bad simplex sum
    with pytest.raises(AnchorFormatError):
        parse_anchor_text("# only comments\n")
    with pytest.raises(AnchorFormatError):
        parse_anchor_text("0 0 0 1.0\n1 1 1 0.5 0.5\n")  # inconsistent dimension
