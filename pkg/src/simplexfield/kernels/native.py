"""Adapter around the compiled extension, matching the reference signatures."""

from __future__ import annotations

import numpy as np

from . import _native
from .layout import GridLayout
from .reference import CompositeAux


def _as_c(arr: np.ndarray, dtype) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=dtype)


def _elementwise(impl, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    flat = np.ascontiguousarray(x.reshape(-1))
    return impl(flat).reshape(x.shape)


def softplus(x: np.ndarray) -> np.ndarray:
    return _elementwise(_native.softplus_impl, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return _elementwise(_native.sigmoid_impl, x)


def hash_encode_forward(points: np.ndarray, tables: np.ndarray, layout: GridLayout) -> np.ndarray:
    dtype = tables.dtype
    return _native.hash_encode_forward_impl(
        _as_c(points, dtype),
        _as_c(tables, dtype),
        layout.level_res,
        layout.row_offset,
        layout.hashed,
        layout.lo,
        layout.inv_extent,
        layout.features_per_level,
    )


def hash_encode_backward(points: np.ndarray, dfeatures: np.ndarray, layout: GridLayout) -> np.ndarray:
    dtype = dfeatures.dtype
    return _native.hash_encode_backward_impl(
        _as_c(points, dtype),
        _as_c(dfeatures, dtype),
        layout.level_res,
        layout.row_offset,
        layout.hashed,
        layout.lo,
        layout.inv_extent,
        layout.features_per_level,
        layout.total_rows,
    )


def composite_forward(tau, radiance, deltas, dists, background):
    dtype = np.asarray(tau).dtype
    tau = _as_c(tau, dtype)
    radiance = _as_c(radiance, dtype)
    deltas = _as_c(deltas, dtype)
    dists = _as_c(dists, dtype)
    background = _as_c(background, dtype)
    color, opacity, depth, alpha, trans, weights, trans_end = _native.composite_forward_impl(
        tau, radiance, deltas, dists, background
    )
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
    dtype = aux.alpha.dtype
    r = aux.alpha.shape[0]
    if dcolor is None:
        dcolor = np.zeros((r, 3), dtype=dtype)
    has_dopacity = dopacity is not None
    has_ddepth = ddepth is not None
    dop = _as_c(dopacity, dtype) if has_dopacity else np.zeros(r, dtype=dtype)
    dd = _as_c(ddepth, dtype) if has_ddepth else np.zeros(r, dtype=dtype)
    return _native.composite_backward_impl(
        aux.alpha,
        aux.trans,
        aux.weights,
        aux.trans_end,
        aux.radiance,
        aux.deltas,
        aux.dists,
        aux.background,
        aux.opacity,
        aux.depth,
        _as_c(dcolor, dtype),
        dop,
        dd,
        has_dopacity,
        has_ddepth,
    )
