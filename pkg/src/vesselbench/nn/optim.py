"""Adam optimizer with the fixed hyperparameters used for all training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kwargs) -> "AdamState":
        tensors = list(params)
        return cls(
            m=[np.zeros_like(t.data) for t in tensors],
            v=[np.zeros_like(t.data) for t in tensors],
            **kwargs,
        )


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update, in place.

    ``params`` is a sequence of Tensors (or raw arrays); ``grads`` the
    matching gradient arrays. Non-finite gradients raise NumericError
    before anything (params or state) is touched.
    """
    tensors = list(params)
    grads = list(grads)
    if len(tensors) != len(grads):
        raise ShapeError(f"{len(tensors)} params but {len(grads)} grads")
    datas = [t.data if isinstance(t, Tensor) else t for t in tensors]
    for d, g in zip(datas, grads):
        if g is None:
            raise NumericError("missing gradient")
        if d.shape != g.shape:
            raise ShapeError(f"param shape {d.shape} != grad shape {g.shape}")
    for g in grads:
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient; state left unchanged")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for i, (d, g) in enumerate(zip(datas, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        d -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(d.dtype)
    return params, state
