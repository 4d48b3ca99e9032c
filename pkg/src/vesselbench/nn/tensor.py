"""Parameter tensor: a named value array with a gradient slot."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, ShapeError


class Tensor:
    """Float array plus an optional gradient of identical shape.

    Layout convention for activations and parameters is channels-first:
    activations are (batch, channels, *spatial), conv weights are
    (c_out, c_in, *kernel).
    """

    __slots__ = ("name", "data", "grad")

    def __init__(self, data: np.ndarray, name: str = ""):
        data = np.asarray(data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float32)
        if not np.isfinite(data).all():
            raise NumericError(f"tensor {name!r} contains non-finite values")
        self.name = name
        self.data = data
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def set_grad(self, grad: np.ndarray):
        if grad.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {grad.shape} does not match value shape "
                f"{self.data.shape} for tensor {self.name!r}"
            )
        self.grad = grad.astype(self.data.dtype, copy=False)

    def zero_grad(self):
        self.grad = None

    def copy(self) -> "Tensor":
        t = Tensor(self.data.copy(), self.name)
        if self.grad is not None:
            t.grad = self.grad.copy()
        return t

    def __repr__(self):
        return f"Tensor({self.name!r}, shape={self.data.shape}, dtype={self.data.dtype})"
