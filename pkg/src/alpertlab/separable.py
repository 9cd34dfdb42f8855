"""One-dimensional factors of tensor-product functions and their integrals.

Father wavelets and smooth atoms are both sums of products f(y1) g(y2), so
every oscillatory integral against a separable kernel reduces to a few 1D
quadratures.  A factor exposes its values (n, p), its breakpoints and the
zones where it needs finer panels.
"""

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import composite_rule

QUAD = (8, 16, 8)
MIN_POINTS_PER_WAVELENGTH = 10


class ResolutionError(ValueError):
    """Raised when a quadrature cannot resolve the requested oscillation."""


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


PLATEAU_TRANSITION = 3.0 / 8.0


def _plateau_profile(u):
    a = PLATEAU_TRANSITION
    u = np.asarray(u, dtype=float)
    return smooth_step((u + a) / a) * smooth_step((1.0 + a - u) / a)


def _plateau_norm():
    x, w = composite_rule([-PLATEAU_TRANSITION, 0.0, 1.0, 1.0 + PLATEAU_TRANSITION],
                          fine=[(-PLATEAU_TRANSITION, 0.0), (1.0, 1.0 + PLATEAU_TRANSITION)])
    return math.sqrt(float(w @ _plateau_profile(x) ** 2))


PLATEAU_NORM = _plateau_norm()


@dataclass(frozen=True)
class PlateauFactor:
    """1D factor of a father wavelet on [corner, corner + side], unit L^2 norm.

    Equals a constant on the interval and falls to zero over 3/8 of a side
    on either end, so its support sits inside the doubled interval.
    """
    side: float
    corner: float

    width = 1

    @property
    def peak(self):
        return 1.0 / (math.sqrt(self.side) * PLATEAU_NORM)

    def values(self, x):
        u = (np.asarray(x, dtype=float) - self.corner) / self.side
        return (self.peak * _plateau_profile(u))[:, None]

    def support(self):
        a = PLATEAU_TRANSITION * self.side
        return self.corner - a, self.corner + self.side + a

    def breaks(self):
        lo, hi = self.support()
        c0, c1 = self.corner, self.corner + self.side
        return np.array([lo, c0, c1, hi]), np.array([[lo, c0], [c1, hi]])


@dataclass(frozen=True)
class PieceFactor:
    """The 2*kappa 1D pieces of the atoms on one interval."""
    system: object
    side: float
    corner: float
    smooth: bool = True

    @property
    def width(self):
        return 2 * self.system.kappa

    def values(self, x):
        return self.system.pieces_at(x, self.side, self.corner, self.smooth)

    def support(self):
        return self.system.support_at(self.side, self.corner, self.smooth)

    def breaks(self):
        return self.system.breakpoints_at(self.side, self.corner, self.smooth)


def piece_factor(system, level, i, smooth=True):
    side = 2.0 ** (-level)
    return PieceFactor(system, side, i * side, smooth)


def max_spacing_for(freq, points_per_wavelength=MIN_POINTS_PER_WAVELENGTH):
    """Largest mean node spacing giving the requested points per wavelength."""
    if points_per_wavelength < MIN_POINTS_PER_WAVELENGTH:
        raise ResolutionError(f"need at least {MIN_POINTS_PER_WAVELENGTH} points per "
                              f"wavelength, got {points_per_wavelength}")
    freq = float(np.max(np.abs(freq))) if np.size(freq) else 0.0
    if freq == 0.0:
        return None
    return 2.0 * math.pi / freq / points_per_wavelength


def common_rule(factors, max_spacing=None, quad=QUAD, max_nodes=None):
    """Quadrature on the intersection of the factors' supports."""
    lo = max(f.support()[0] for f in factors)
    hi = min(f.support()[1] for f in factors)
    if hi <= lo:
        return np.zeros(0), np.zeros(0)
    breaks = [np.array([lo, hi])]
    zones = []
    for f in factors:
        b, z = f.breaks()
        breaks.append(b[(b > lo) & (b < hi)])
        if len(z):
            zones.append(z)
    zones = np.concatenate(zones) if zones else np.zeros((0, 2))
    order, fine_order, fine_panels = quad
    x, w = composite_rule(np.concatenate(breaks), order, zones, fine_order, fine_panels,
                          max_spacing=max_spacing)
    if max_nodes is not None and len(x) > max_nodes:
        raise ResolutionError(f"oscillation needs {len(x)} quadrature nodes, "
                              f"limit is {max_nodes}")
    return x, w


def product_integrals(f, g, freq=0.0, points_per_wavelength=MIN_POINTS_PER_WAVELENGTH,
                      quad=QUAD, max_nodes=None):
    """Matrix of integrals of exp(i freq x) f_m(x) g_n(x), shape (f.width, g.width)."""
    x, w = common_rule([f, g], max_spacing_for(freq, points_per_wavelength), quad, max_nodes)
    if len(x) == 0:
        return np.zeros((f.width, g.width), dtype=complex)
    k = w * np.exp(1j * freq * x) if freq else w.astype(complex)
    return (f.values(x) * k[:, None]).T @ g.values(x)


def kernel_integrals(f, kernel, max_spacing=None, quad=QUAD):
    """Integrals of kernel(x)[:, k] * f_m(x); ``kernel`` maps nodes (n,) to (n, K).

    Returns shape (K, f.width).
    """
    x, w = common_rule([f], max_spacing, quad)
    if len(x) == 0:
        return None
    return (kernel(x) * w[:, None]).T @ f.values(x)
