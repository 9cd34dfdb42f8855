"""Tensor-product sampled fields with attached quadrature weights."""

from dataclasses import dataclass

import numpy as np


@dataclass
class SampledField2D:
    """Values on the tensor grid x (n1,) by y (n2,) with weights wx, wy.

    ``values[i, j]`` is the field at (x[i], y[j]); integrals are
    ``sum(wx[i] * wy[j] * values[i, j])``.
    """
    x: np.ndarray
    y: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (len(self.x), len(self.y)):
            raise ValueError(f"values shape {self.values.shape} does not match grid "
                             f"({len(self.x)}, {len(self.y)})")

    @property
    def shape(self):
        return self.values.shape

    def same_grid(self, other):
        return (self.values.shape == other.values.shape and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y))

    def with_values(self, values):
        return SampledField2D(self.x, self.y, self.wx, self.wy, values)

    def integrate(self, weight=None):
        v = self.values if weight is None else self.values * weight
        return self.wx @ v @ self.wy

    def inner(self, other):
        """<self, other> = integral of self * conj(other)."""
        if not self.same_grid(other):
            raise ValueError("fields live on different grids")
        return self.wx @ (self.values * np.conj(other.values)) @ self.wy

    def norm(self, p=2):
        a = np.abs(self.values)
        return float(self.wx @ a**p @ self.wy) ** (1.0 / p)

    def moment(self, beta):
        b1, b2 = beta
        return (self.wx * self.x**b1) @ self.values @ (self.wy * self.y**b2)

    def __add__(self, other):
        if not self.same_grid(other):
            raise ValueError("fields live on different grids")
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        if not self.same_grid(other):
            raise ValueError("fields live on different grids")
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, x, y, wx, wy, dtype=float):
        return cls(x, y, wx, wy, np.zeros((len(x), len(y)), dtype=dtype))


def uniform_grid(lo, hi, spacing):
    """Uniform nodes with trapezoid weights covering [lo, hi]."""
    n = max(2, int(np.ceil((hi - lo) / spacing)) + 1)
    x = np.linspace(lo, hi, n)
    w = np.full(n, (hi - lo) / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w
