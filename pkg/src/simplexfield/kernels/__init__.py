"""Hot numeric kernels with two interchangeable backends.

The compiled Cython extension is used when it is importable; otherwise the
vectorized numpy reference implementation takes over.  Selection can be
forced with the environment variable ``SIMPLEXFIELD_KERNELS=reference`` (or
``native``) or at runtime with :func:`set_backend`.  Both backends implement
the same contracts and are cross-checked in the test suite; ``benchmarks/``
compares their throughput.
"""

from __future__ import annotations

import os

from . import reference
from .layout import GridLayout

try:
    from . import native
except ImportError:  # extension not built; reference backend still works
    native = None  # type: ignore[assignment]

_BACKENDS = {"reference": reference}
if native is not None:
    _BACKENDS["native"] = native

_requested = os.environ.get("SIMPLEXFIELD_KERNELS", "").strip().lower()
if _requested and _requested not in _BACKENDS:
    raise ImportError(
        f"SIMPLEXFIELD_KERNELS={_requested!r} is not available; "
        f"choose from {sorted(_BACKENDS)}"
    )
_active = _BACKENDS[_requested] if _requested else _BACKENDS.get("native", reference)


def backend_name() -> str:
    """Name of the backend currently answering kernel calls."""
    for name, mod in _BACKENDS.items():
        if mod is _active:
            return name
    raise RuntimeError("active backend not registered")


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {sorted(_BACKENDS)}")
    _active = _BACKENDS[name]


def hash_encode_forward(points, tables, layout):
    return _active.hash_encode_forward(points, tables, layout)


def hash_encode_backward(points, dfeatures, layout):
    return _active.hash_encode_backward(points, dfeatures, layout)


def composite_forward(tau, radiance, deltas, dists, background):
    return _active.composite_forward(tau, radiance, deltas, dists, background)


def composite_backward(aux, dcolor, dopacity, ddepth):
    return _active.composite_backward(aux, dcolor, dopacity, ddepth)


def softplus(x):
    return _active.softplus(x)


def sigmoid(x):
    return _active.sigmoid(x)


__all__ = [
    "GridLayout",
    "available_backends",
    "backend_name",
    "composite_backward",
    "composite_forward",
    "hash_encode_backward",
    "hash_encode_forward",
    "set_backend",
]
