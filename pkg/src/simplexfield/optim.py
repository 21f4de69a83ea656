"""Gradient machinery: tape-backed loss evaluation, Adam, and FD checking.

The gradient vector is flat and aligned one-to-one with the canonical
parameter traversal of :meth:`FieldParams.flatten`.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import tape
from .field import FieldParams


class NonFiniteLossError(RuntimeError):
    def __init__(self, term: str, value: float):
        super().__init__(f"loss term {term!r} is non-finite ({value!r})")
        self.term = term


@dataclass
class LossBreakdown:
    """Named scalar loss terms and their weights; total is exact bookkeeping."""

    terms: dict = dc_field(default_factory=dict)
    weights: dict = dc_field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(self.weights[k] * self.terms[k] for k in self.terms))

    def as_record(self) -> dict:
        return {"terms": dict(self.terms), "weights": dict(self.weights), "total": self.total}


def loss_and_grads(params: FieldParams, build):
    """Evaluate a composed loss and its exact reverse-mode gradients.

    ``build(params_view, t)`` receives the tape-leaf view of the parameters
    and the tape, and returns an ordered mapping
    ``{name: (scalar_var_or_float, weight)}``.  Terms entered as plain
    floats contribute to the breakdown but not to gradients (used for the
    score-distillation term's stop-gradient side channel).

    Returns (LossBreakdown, flat gradient aligned with params.flatten()).
    """
    t = tape.Tape()
    view, leaves = params.leaves(t)
    built = build(view, t)
    breakdown = LossBreakdown()
    total_var = None
    for name, (term, weight) in built.items():
        value = float(tape._val(term))
        if not np.isfinite(value):
            raise NonFiniteLossError(name, value)
        breakdown.terms[name] = value
        breakdown.weights[name] = float(weight)
        if weight != 0.0 and isinstance(term, tape.Var):
            scaled = tape.scale(term, float(weight))
            total_var = scaled if total_var is None else tape.add(total_var, scaled)
    if total_var is None:
        flat = np.zeros(params.param_count(), dtype=np.float64)
    else:
        grads = t.gradients(total_var, leaves)
        flat = params.flatten_grads(grads)
    if not np.all(np.isfinite(flat)):
        raise NonFiniteLossError("<gradient>", float(np.sum(flat)))
    return breakdown, flat


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8

    @classmethod
    def init(cls, n_params: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.99,
             epsilon: float = 1e-8) -> "AdamState":
        return cls(
            first_moment=np.zeros(n_params),
            second_moment=np.zeros(n_params),
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(params_flat: np.ndarray, grads: np.ndarray, state: AdamState,
              lr_scale: np.ndarray | float = 1.0):
    """One bias-corrected Adam update; mutates ``state``, returns new params."""
    if params_flat.shape != grads.shape or params_flat.shape != state.first_moment.shape:
        raise ValueError("params, grads and moments must have matching lengths")
    state.step_count += 1
    t = state.step_count
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * grads
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * np.square(grads)
    m_hat = state.first_moment / (1.0 - state.beta1**t)
    v_hat = state.second_moment / (1.0 - state.beta2**t)
    step = state.lr * lr_scale * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params_flat - step


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    indices: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray  # best-step central difference per index
    rel_errors: np.ndarray

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_errors.max()) if self.rel_errors.size else 0.0

    def __str__(self):
        lines = [f"gradient check over {len(self.indices)} indices"]
        worst = np.argsort(self.rel_errors)[::-1][:5]
        for i in worst:
            lines.append(
                f"  idx {int(self.indices[i]):>8d}: analytic {self.analytic[i]: .6e} "
                f"numeric {self.numeric[i]: .6e} rel {self.rel_errors[i]:.3e}"
            )
        lines.append(f"  max relative error: {self.max_rel_error:.3e}")
        return "\n".join(lines)


def finite_diff_check(
    loss_fn,
    params: FieldParams,
    grads: np.ndarray,
    indices,
    steps=(1e-3, 1e-4, 1e-5),
) -> GradCheckReport:
    """Central-difference comparison at sampled parameter indices.

    ``loss_fn(FieldParams) -> float`` must be deterministic.  For each index
    the best step from the sweep is reported (standard practice: the
    truncation/roundoff tradeoff differs per parameter).
    """
    indices = np.asarray(indices, dtype=np.int64)
    base = params.flatten().astype(np.float64)
    analytic = np.asarray(grads, dtype=np.float64)[indices]
    numeric = np.zeros(len(indices))
    rel = np.full(len(indices), np.inf)
    for k, idx in enumerate(indices):
        for step in steps:
            plus = base.copy()
            plus[idx] += step
            minus = base.copy()
            minus[idx] -= step
            fd = (loss_fn(params.unflatten(plus)) - loss_fn(params.unflatten(minus))) / (2 * step)
            scale = max(abs(fd), abs(analytic[k]), 1e-10)
            err = abs(fd - analytic[k]) / scale
            if err < rel[k]:
                rel[k] = err
                numeric[k] = fd
    return GradCheckReport(indices=indices, analytic=analytic, numeric=numeric, rel_errors=rel)
