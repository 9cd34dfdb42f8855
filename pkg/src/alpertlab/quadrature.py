"""Gauss-Legendre building blocks: single panels, composite rules on breakpoints,
and a tanh-mapped rule for integrands carrying the exp(-1/(1-w^2)) bump."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n, a=-1.0, b=1.0):
    x, w = _gl(n)
    h = 0.5 * (b - a)
    return a + h * (x + 1.0), h * w


def composite_rule(breaks, order=8, fine=(), fine_order=16, fine_panels=8, max_len=None,
                   max_spacing=None):
    """Composite Gauss-Legendre rule on consecutive breakpoints.

    ``fine`` is a sequence of (lo, hi) intervals (transition zones); panels
    whose midpoint falls inside one are split into ``fine_panels`` equal
    pieces with ``fine_order`` nodes each.  Other panels are split so that
    no piece is longer than ``max_len``.  ``max_spacing`` caps the mean node
    spacing everywhere (used to resolve oscillating kernels).
    """
    b = np.unique(np.asarray(breaks, dtype=float))
    fine = np.asarray(fine, dtype=float).reshape(-1, 2)
    xs, ws = [], []
    for lo, hi in zip(b[:-1], b[1:]):
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        in_fine = bool(np.any((fine[:, 0] <= mid) & (mid <= fine[:, 1]))) if len(fine) else False
        if in_fine:
            m, n = fine_panels, fine_order
        else:
            m = 1 if max_len is None else max(1, int(np.ceil((hi - lo) / max_len)))
            n = order
        if max_spacing is not None:
            m = max(m, int(np.ceil((hi - lo) / (n * max_spacing))))
        edges = np.linspace(lo, hi, m + 1)
        for a, c in zip(edges[:-1], edges[1:]):
            x, w = gauss_legendre(n, a, c)
            xs.append(x)
            ws.append(w)
    if not xs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ws)


TANH_CUTOFF = 3.2


@lru_cache(maxsize=None)
def _tanh_nodes(n):
    return _gl(n)


def bump_rule(wlo, whi, n=80):
    """Nodes and weights for integrals of g(w) * exp(-1/(1-w^2)) over [wlo, whi].

    Substituting w = tanh(v) turns the bump into exp(-cosh(v)^2) times the
    Jacobian sech(v)^2, an analytic integrand that decays double
    exponentially, so plain Gauss-Legendre in v converges fast.  Arrays
    ``wlo`` and ``whi`` of equal shape give one rule per entry; results have
    shape ``wlo.shape + (n,)``.  The returned weights already include the
    bump factor.
    """
    t = np.tanh(TANH_CUTOFF)
    wlo = np.clip(np.asarray(wlo, dtype=float), -t, t)
    whi = np.clip(np.asarray(whi, dtype=float), -t, t)
    vlo, vhi = np.arctanh(wlo), np.arctanh(whi)
    x, w = _tanh_nodes(n)
    h = 0.5 * (vhi - vlo)[..., None]
    v = vlo[..., None] + h * (x + 1.0)
    c = np.cosh(v)
    nodes = np.tanh(v)
    weights = h * w * np.exp(-c * c) / (c * c)
    return nodes, np.where(h > 0, weights, 0.0)
