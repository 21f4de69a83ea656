"""Pure-numpy reference implementation of the hot kernels.

Slower than the compiled extension but dependency free; also serves as the
readable specification the native backend is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scipy.special import expit

from .layout import CORNERS, GridLayout, corner_rows

_OPACITY_EPS = 1e-6


def softplus(x: np.ndarray) -> np.ndarray:
    """Numerically stable log(1 + exp(x)), elementwise."""
    x = np.asarray(x)
    return np.logaddexp(np.asarray(0.0, dtype=x.dtype), x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(np.asarray(x))


def _cell_coords(points: np.ndarray, layout: GridLayout, res: int):
    """Cell index and fractional position of each point at one level."""
    x = (points.astype(np.float64) - layout.lo) * layout.inv_extent
    x = np.clip(x, 0.0, 1.0) * res
    cell = np.minimum(x.astype(np.int64), res - 1)
    frac = x - cell
    return cell, frac


def hash_encode_forward(points: np.ndarray, tables: np.ndarray, layout: GridLayout) -> np.ndarray:
    """Trilinearly interpolated features, concatenated over levels.

    points: [B, 3] inside the layout bounds (clamped).
    tables: [total_rows, F] feature storage for all levels.
    Returns [B, levels * F] in the dtype of ``tables``.
    """
    n = points.shape[0]
    feats = layout.features_per_level
    out = np.zeros((n, layout.output_dim), dtype=tables.dtype)
    for lvl in range(layout.levels):
        res = int(layout.level_res[lvl])
        n_rows = int(layout.row_offset[lvl + 1] - layout.row_offset[lvl])
        cell, frac = _cell_coords(points, layout, res)
        corners = cell[:, None, :] + CORNERS[None, :, :]  # [B, 8, 3]
        w = np.where(CORNERS[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
        w = w.prod(axis=2)  # [B, 8]
        rows = corner_rows(corners, res, bool(layout.hashed[lvl]), n_rows)
        rows += int(layout.row_offset[lvl])
        gathered = tables[rows]  # [B, 8, F]
        out[:, lvl * feats : (lvl + 1) * feats] = np.einsum(
            "bc,bcf->bf", w.astype(tables.dtype), gathered
        )
    return out


def hash_encode_backward(points: np.ndarray, dfeatures: np.ndarray, layout: GridLayout) -> np.ndarray:
    """Scatter feature gradients back onto the tables.

    Returns [total_rows, F] in the dtype of ``dfeatures``.
    """
    feats = layout.features_per_level
    out = np.zeros((layout.total_rows, feats), dtype=np.float64)
    for lvl in range(layout.levels):
        res = int(layout.level_res[lvl])
        n_rows = int(layout.row_offset[lvl + 1] - layout.row_offset[lvl])
        cell, frac = _cell_coords(points, layout, res)
        corners = cell[:, None, :] + CORNERS[None, :, :]
        w = np.where(CORNERS[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
        w = w.prod(axis=2)
        rows = corner_rows(corners, res, bool(layout.hashed[lvl]), n_rows)
        rows += int(layout.row_offset[lvl])
        dlevel = dfeatures[:, lvl * feats : (lvl + 1) * feats]
        contrib = w[:, :, None] * dlevel[:, None, :]  # [B, 8, F]
        flat_rows = rows.ravel()
        for f in range(feats):
            out[:, f] += np.bincount(
                flat_rows, weights=contrib[:, :, f].ravel(), minlength=layout.total_rows
            )
    return out.astype(dfeatures.dtype)


@dataclass
class CompositeAux:
    """Forward-pass state needed by the compositing backward pass."""

    alpha: np.ndarray  # [R, S]
    trans: np.ndarray  # [R, S] transmittance before each sample
    weights: np.ndarray  # [R, S] alpha * trans
    trans_end: np.ndarray  # [R]
    radiance: np.ndarray  # [R, S, 3]
    deltas: np.ndarray  # [R, S]
    dists: np.ndarray  # [R, S]
    background: np.ndarray  # [3]
    opacity: np.ndarray  # [R]
    depth: np.ndarray  # [R]


def composite_forward(
    tau: np.ndarray,
    radiance: np.ndarray,
    deltas: np.ndarray,
    dists: np.ndarray,
    background: np.ndarray,
):
    """Front-to-back alpha compositing of one batch of rays.

    tau, deltas, dists: [R, S]; radiance: [R, S, 3]; background: [3].
    Returns (color [R, 3], opacity [R], depth [R], aux).
    Depth is the opacity-weighted expected sample distance.
    """
    alpha = 1.0 - np.exp(-tau * deltas)
    one_minus = 1.0 - alpha
    inclusive = np.cumprod(one_minus, axis=1)
    trans = np.concatenate(
        [np.ones_like(alpha[:, :1]), inclusive[:, :-1]], axis=1
    )
    weights = alpha * trans
    trans_end = inclusive[:, -1]
    color = np.einsum("rs,rsc->rc", weights, radiance) + trans_end[:, None] * background[None, :]
    opacity = weights.sum(axis=1)
    clamped = np.maximum(opacity, _OPACITY_EPS)
    depth = (weights * dists).sum(axis=1) / clamped
    aux = CompositeAux(
        alpha=alpha,
        trans=trans,
        weights=weights,
        trans_end=trans_end,
        radiance=radiance,
        deltas=deltas,
        dists=dists,
        background=background,
        opacity=opacity,
        depth=depth,
    )
    return color, opacity, depth, aux


def composite_backward(aux: CompositeAux, dcolor, dopacity, ddepth):
    """Gradients of the compositing outputs w.r.t. tau and radiance.

    dcolor: [R, 3] or None; dopacity, ddepth: [R] or None.
    Returns (dtau [R, S], dradiance [R, S, 3]).

    Per-sample weight sensitivities are folded through
    d(alpha)/d(tau) = delta * (1 - alpha), which cancels the 1/(1 - alpha)
    factors so saturated samples (alpha -> 1) stay finite.
    """
    r, s = aux.alpha.shape
    dtype = aux.alpha.dtype
    if dcolor is None:
        dcolor = np.zeros((r, 3), dtype=dtype)
    g = np.einsum("rc,rsc->rs", dcolor, aux.radiance)
    if dopacity is not None:
        g = g + dopacity[:, None]
    if ddepth is not None:
        clamped = np.maximum(aux.opacity, _OPACITY_EPS)
        unclamped = aux.opacity > _OPACITY_EPS
        d_term = aux.dists - np.where(unclamped, aux.depth, 0.0)[:, None]
        g = g + ddepth[:, None] * d_term / clamped[:, None]
    gw = g * aux.weights
    suffix = np.flip(np.cumsum(np.flip(gw, axis=1), axis=1), axis=1) - gw
    h_end = dcolor @ aux.background  # [R]
    dtau = aux.deltas * (
        (1.0 - aux.alpha) * aux.trans * g - suffix - (h_end * aux.trans_end)[:, None]
    )
    dradiance = dcolor[:, None, :] * aux.weights[:, :, None]
    return dtau.astype(dtype, copy=False), dradiance.astype(dtype, copy=False)
