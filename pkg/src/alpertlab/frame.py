"""Frame operators for smooth Alpert atoms on a truncated dyadic window.

For an expansion f = sum_K c_K h_K of smooth atoms, T f = sum_I <f, h_I> h_I
has coefficients G c with G the Gram matrix of the atoms, so T, its Neumann
inverse and the pseudoprojections all act on coefficient vectors.  Field
versions (quadrature on a breakpoint-aligned tensor grid) are provided for
cross-checks on small windows.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy import sparse

from .alpert import AlpertSystem
from .dyadic import DyadicSquare, ROOT, dtree, halos_intersect, window_squares
from .fields import SampledField2D
from .quadrature import composite_rule


class FrameError(RuntimeError):
    pass


# --------------------------------------------------------- coefficient maps

class CoefficientMap:
    """Sparse map (square, atom index) -> complex value, stored per square."""

    def __init__(self, dim, blocks=None, window=None):
        self.dim = dim
        self.window = window
        self.blocks = {}
        for Q, v in (blocks or {}).items():
            self[Q] = v

    def _check(self, Q):
        if self.window is not None and not self.window[0] <= Q.level <= self.window[1]:
            raise FrameError(f"{Q} lies outside the window {self.window}")

    def __setitem__(self, key, value):
        if isinstance(key, tuple):
            Q, a = key
            self._check(Q)
            self.blocks.setdefault(Q, np.zeros(self.dim, complex))[a] = value
        else:
            self._check(key)
            v = np.asarray(value, complex)
            if v.shape != (self.dim,):
                raise FrameError(f"block for {key} must have length {self.dim}")
            self.blocks[key] = v.copy()

    def __getitem__(self, key):
        if isinstance(key, tuple):
            Q, a = key
            b = self.blocks.get(Q)
            return 0j if b is None else b[a]
        return self.blocks.get(key, np.zeros(self.dim, complex))

    def squares(self):
        return sorted(self.blocks)

    def items(self):
        for Q in self.squares():
            for a, v in enumerate(self.blocks[Q]):
                yield (Q, a), v

    def __len__(self):
        return len(self.blocks)

    def copy(self):
        return CoefficientMap(self.dim, self.blocks, self.window)

    def scaled(self, c):
        return CoefficientMap(self.dim, {Q: c * v for Q, v in self.blocks.items()}, self.window)

    def max_abs(self):
        return max((float(np.max(np.abs(v))) for v in self.blocks.values()), default=0.0)

    def rows(self):
        """(square address, atom index, real, imag) in deterministic order."""
        return [(Q.address, a, v.real, v.imag) for (Q, a), v in self.items()]


# ------------------------------------------------------ 1D cross integrals

class CrossIntegrals:
    """Cached 1D integrals of products of smooth pieces of two dyadic intervals.

    The value depends only on the level difference and on the offset of the
    finer interval inside the coarser one's frame, by the scale invariance of
    the L^2-normalised pieces.
    """

    def __init__(self, system, order=8, fine_order=16, fine_panels=8):
        self.system = system
        self.quad = (order, fine_order, fine_panels)
        self._cache = {}

    def _canonical(self, d, off):
        key = (d, off)
        X = self._cache.get(key)
        if X is None:
            s = self.system
            b1, z1 = s.breakpoints(0, 0)
            b2, z2 = s.breakpoints(d, off)
            lo = max(s.support(0, 0)[0], s.support(d, off)[0])
            hi = min(s.support(0, 0)[1], s.support(d, off)[1])
            k2 = 2 * s.kappa
            if hi <= lo:
                X = np.zeros((k2, k2))
            else:
                br = np.concatenate([b1, b2, [lo, hi]])
                br = br[(br >= lo) & (br <= hi)]
                o, fo, fp = self.quad
                x, w = composite_rule(br, o, np.concatenate([z1, z2]), fo, fp)
                X = (s.pieces(x, 0, 0) * w[:, None]).T @ s.pieces(x, d, off)
            self._cache[key] = X
        return X

    def __call__(self, l1, i1, l2, i2):
        if l1 <= l2:
            d = l2 - l1
            return self._canonical(d, i2 - (i1 << d))
        d = l1 - l2
        return self._canonical(d, i1 - (i2 << d)).T


# ------------------------------------------------------------ frame context

@dataclass
class FrameContext:
    """Truncated smooth Alpert frame on the levels [level_min, level_max] of U."""
    system: AlpertSystem
    level_min: int = 0
    level_max: int = 2
    neumann_tol: float = 1e-8
    max_terms: int = 500
    halo_factor: float = None
    base: DyadicSquare = ROOT
    quad: tuple = (8, 16, 8)

    def __post_init__(self):
        if self.level_max < self.level_min:
            raise FrameError("empty window")
        if self.halo_factor is None:
            # halo frames must cover the transition bands of the mollified atoms
            self.halo_factor = 4.0 * self.system.mollifier.radius * self.system.eta
        self.squares = window_squares(self.level_min, self.level_max, self.base)
        self.position = {Q: i for i, Q in enumerate(self.squares)}
        self.cross = CrossIntegrals(self.system, *self.quad)

    @property
    def window(self):
        return (self.level_min, self.level_max)

    @property
    def dim(self):
        return self.system.dim

    @property
    def size(self):
        return len(self.squares) * self.dim

    @property
    def halo_width(self):
        return self.halo_factor

    # ---- vectors

    def to_vector(self, c):
        v = np.zeros(self.size, complex)
        d = self.dim
        for Q, b in c.blocks.items():
            if Q not in self.position:
                raise FrameError(f"{Q} is not in the window {self.window}")
            i = self.position[Q]
            v[i * d:(i + 1) * d] = b
        return v

    def from_vector(self, v, drop_zero=False):
        d = self.dim
        out = CoefficientMap(d, window=self.window)
        for i, Q in enumerate(self.squares):
            b = v[i * d:(i + 1) * d]
            if drop_zero and not np.any(b):
                continue
            out[Q] = b
        return out

    def random_coefficients(self, rng, complex_values=False):
        v = rng.standard_normal(self.size)
        if complex_values:
            v = v + 1j * rng.standard_normal(self.size)
        return self.from_vector(v)

    # ---- Gram structure

    def gram_block(self, I, J):
        C = self.system.factor_matrices
        X = self.cross(I.level, I.ix, J.level, J.ix)
        Y = self.cross(I.level, I.iy, J.level, J.iy)
        return np.einsum("amn,mp,nq,bpq->ab", C, X, Y, C)

    @cached_property
    def pairs(self):
        """Square pairs (i <= j) whose halos meet; all others have zero Gram blocks."""
        out = []
        for i, I in enumerate(self.squares):
            for j in range(i, len(self.squares)):
                J = self.squares[j]
                if halos_intersect(I, J, self.halo_width):
                    out.append((i, j))
        return out

    @cached_property
    def gram(self):
        """Sparse symmetric Gram matrix of the smooth atoms on the window."""
        d = self.dim
        rows, cols, vals = [], [], []
        ar = np.arange(d)
        for i, j in self.pairs:
            B = self.gram_block(self.squares[i], self.squares[j])
            r = (i * d + ar)[:, None].repeat(d, 1)
            c = (j * d + ar)[None, :].repeat(d, 0)
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(B.ravel())
            if i != j:
                rows.append(c.T.ravel())
                cols.append(r.T.ravel())
                vals.append(B.T.ravel())
        G = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.size, self.size))
        return G

    def gram_dense(self):
        return self.gram.toarray()

    def contraction_estimate(self, iterations=30, seed=0):
        """Power-iteration estimate of the spectral norm of I - G."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.size)
        v /= np.linalg.norm(v)
        lam = 0.0
        G = self.gram
        for _ in range(iterations):
            w = v - G @ v
            lam = float(np.linalg.norm(w))
            if lam == 0.0:
                break
            v = w / lam
        return lam

    def l2_norm(self, v):
        """L^2 norm of sum_K v_K h_K."""
        return math.sqrt(max(float(np.real(np.vdot(v, self.gram @ v))), 0.0))

    # ---- operators in coefficient space

    def apply_T_coefficients(self, v):
        return self.gram @ v

    def neumann(self, v, tol=None, max_terms=None, check=True):
        """Partial Neumann sum sum_n (I - G)^n v.

        Stops once the L^2 norm of the newest term drops below tol times the
        norm of the input.  Returns (result, info) where info holds the term
        count, the term norms and the contraction estimate.
        """
        tol = self.neumann_tol if tol is None else tol
        max_terms = self.max_terms if max_terms is None else max_terms
        rho = self.contraction_estimate() if check else float("nan")
        if check and rho >= 1.0:
            raise FrameError(f"no contraction: |I - T| ~ {rho:.3f} on the window; "
                             "use a smaller eta or a larger kappa")
        G = self.gram
        v = np.asarray(v)
        ref = self.l2_norm(v)
        term = v.copy()
        total = v.copy()
        norms = [ref]
        n = 0
        while ref > 0 and norms[-1] >= tol * ref:
            if n >= max_terms:
                raise FrameError(f"Neumann series did not reach tol {tol} in {max_terms} terms")
            term = term - G @ term
            total = total + term
            norms.append(self.l2_norm(term))
            n += 1
        ratios = [b / a for a, b in zip(norms[:-1], norms[1:]) if a > 0]
        return total, {"terms": n, "norms": norms, "contraction": rho,
                       "max_ratio": max(ratios) if ratios else 0.0}

    def invert_T_coefficients(self, c, tol=None):
        v = self.to_vector(c) if isinstance(c, CoefficientMap) else c
        out, info = self.neumann(v, tol)
        return (self.from_vector(out) if isinstance(c, CoefficientMap) else out), info

    def pseudoprojection_coefficients(self, c, tol=None):
        """Per-square coefficients <T^-1 f, h_{I,a}> for f = sum c h."""
        v = self.to_vector(c) if isinstance(c, CoefficientMap) else np.asarray(c)
        d, info = self.neumann(v, tol)
        return self.gram @ d, info

    # ---- field path

    def grid(self, fine_panels=2, fine_order=16, order=8):
        x, y, wx, wy = self.system.quadrature_grid(self.squares, order, fine_order, fine_panels)
        return x, y, wx, wy

    def synthesize(self, c, grid, smooth=True):
        """sum_{(Q,a)} c[Q,a] atom on the tensor grid; c is a CoefficientMap or vector."""
        if not isinstance(c, CoefficientMap):
            c = self.from_vector(c, drop_zero=True)
        x, y, wx, wy = grid
        vals = np.zeros((len(x), len(y)), complex)
        s = self.system
        for Q in c.squares():
            b = c[Q]
            if not np.any(b):
                continue
            rx = _support_slice(x, s.support(Q.level, Q.ix, smooth))
            ry = _support_slice(y, s.support(Q.level, Q.iy, smooth))
            Cm = np.tensordot(b, s.factor_matrices, axes=(0, 0))
            F1 = s.pieces(x[rx], Q.level, Q.ix, smooth)
            F2 = s.pieces(y[ry], Q.level, Q.iy, smooth)
            vals[rx, ry] += F1 @ Cm @ F2.T
        if np.all(vals.imag == 0):
            vals = vals.real
        return SampledField2D(x, y, wx, wy, vals)

    def analyze(self, g, smooth=True):
        """Coefficients <g, h_{I,a}> over the window by quadrature on g's grid."""
        s = self.system
        out = CoefficientMap(self.dim, window=self.window)
        for Q in self.squares:
            rx = _support_slice(g.x, s.support(Q.level, Q.ix, smooth))
            ry = _support_slice(g.y, s.support(Q.level, Q.iy, smooth))
            F1 = s.pieces(g.x[rx], Q.level, Q.ix, smooth) * g.wx[rx, None]
            F2 = s.pieces(g.y[ry], Q.level, Q.iy, smooth) * g.wy[ry, None]
            M = F1.T @ g.values[rx, ry] @ F2
            out[Q] = np.einsum("amn,mn->a", s.factor_matrices, M)
        return out


def _support_slice(nodes, support):
    lo, hi = np.searchsorted(nodes, support[0], "left"), np.searchsorted(nodes, support[1], "right")
    return slice(lo, hi)


# ------------------------------------------------------------ operator API

def apply_S(ctx, c, grid=None):
    """Smooth synthesis sum c_{I,a} h^eta_{I,a} on the working grid."""
    if isinstance(c, CoefficientMap) and c.window is not None and c.window != ctx.window:
        if not all(ctx.level_min <= Q.level <= ctx.level_max for Q in c.squares()):
            raise FrameError("coefficient window does not match the frame window")
    return ctx.synthesize(c, grid or ctx.grid())


def apply_S_star(ctx, g):
    """Coefficients <g, h^eta_{I,a}> over the window."""
    return ctx.analyze(g, smooth=True)


def apply_T(ctx, g):
    return apply_S(ctx, apply_S_star(ctx, g), grid=(g.x, g.y, g.wx, g.wy))


def invert_T(ctx, g, tol=None, max_terms=None):
    """Neumann partial sum of T^-1 applied to a field, with term-norm stopping.

    Returns (field, info).
    """
    tol = ctx.neumann_tol if tol is None else tol
    max_terms = ctx.max_terms if max_terms is None else max_terms
    rho = ctx.contraction_estimate()
    if rho >= 1.0:
        raise FrameError(f"no contraction: |I - T| ~ {rho:.3f}; use a smaller eta or a larger kappa")
    ref = g.norm()
    term = g
    total = g
    norms = [ref]
    n = 0
    while ref > 0 and norms[-1] >= tol * ref:
        if n >= max_terms:
            raise FrameError(f"Neumann series did not reach tol {tol} in {max_terms} terms")
        term = term - apply_T(ctx, term)
        total = total + term
        norms.append(term.norm())
        n += 1
    return total, {"terms": n, "norms": norms, "contraction": rho}


def pseudoprojection_T(ctx, f, I, tol=None):
    """Doubly smooth pseudoprojection sum_a <T^-1 f, h_{I,a}> h_{I,a} of a field f."""
    inv, _ = invert_T(ctx, f, tol)
    coeff = apply_S_star(ctx, inv)
    single = CoefficientMap(ctx.dim, {I: coeff[I]}, ctx.window)
    return apply_S(ctx, single, grid=(f.x, f.y, f.wx, f.wy))


def pseudoprojections(ctx, c, tol=None):
    """All pseudoprojection coefficients of f = sum c h, as a CoefficientMap of <T^-1 f, h_I>."""
    v, info = ctx.pseudoprojection_coefficients(c, tol)
    return ctx.from_vector(v), info


def reproduction_residual(ctx, c, tol=None, grid=None):
    """Relative L^2 error of sum_I Delta_I f against f for f = sum c h.

    With ``grid`` both functions are synthesised and compared by quadrature;
    otherwise the Gram form is used.
    """
    v = ctx.to_vector(c) if isinstance(c, CoefficientMap) else np.asarray(c)
    p, info = ctx.pseudoprojection_coefficients(v, tol)
    if grid is None:
        return ctx.l2_norm(p - v) / ctx.l2_norm(v), info
    f = ctx.synthesize(v, grid)
    r = ctx.synthesize(p, grid)
    return (r - f).norm() / f.norm(), info


def square_function(ctx, c, grid, p=2, tol=None):
    """Pointwise (sum_I |Delta_I f|^2)^(1/2) for f = sum c h, and its L^p norm."""
    v = ctx.to_vector(c) if isinstance(c, CoefficientMap) else np.asarray(c)
    pv, _ = ctx.pseudoprojection_coefficients(v, tol)
    acc = np.zeros((len(grid[0]), len(grid[1])))
    d = ctx.dim
    for i, Q in enumerate(ctx.squares):
        b = pv[i * d:(i + 1) * d]
        if not np.any(b):
            continue
        part = ctx.synthesize(CoefficientMap(d, {Q: b}), grid)
        acc += np.abs(part.values) ** 2
    field_ = SampledField2D(grid[0], grid[1], grid[2], grid[3], np.sqrt(acc))
    return field_, field_.norm(p)


# ------------------------------------------------------------------ scans

@dataclass
class DecayTable:
    rows: list           # (dtree, max_abs, count_pairs)
    slope: float
    intercept: float
    fit_range: tuple

    def as_dict(self):
        return {d: m for d, m, _ in self.rows}


def fit_slope(rows, d_lo=2, d_hi=None):
    """Least-squares slope of log2(max_abs) against d on [d_lo, d_hi].

    ``d_hi`` defaults to one below the largest distance present.
    """
    ds = [d for d, m, _ in rows if m > 0]
    if not ds:
        return float("nan"), float("nan"), (d_lo, d_hi)
    if d_hi is None:
        d_hi = max(ds) - 1
    pts = [(d, math.log2(m)) for d, m, _ in rows if d_lo <= d <= d_hi and m > 0]
    if len(pts) < 2:
        return float("nan"), float("nan"), (d_lo, d_hi)
    x, y = np.array(pts).T
    slope, icpt = np.polyfit(x, y, 1)
    return float(slope), float(icpt), (d_lo, d_hi)


def _scan_rows(ctx, block_value, pair_list):
    best, count = {}, {}
    for i, j in pair_list:
        I, J = ctx.squares[i], ctx.squares[j]
        d = dtree(I, J, top=min(ctx.level_min, 0))
        m = block_value(i, j)
        best[d] = max(best.get(d, 0.0), m)
        count[d] = count.get(d, 0) + 1
    return [(d, best[d], count[d]) for d in sorted(best)]


def gram_decay_scan(ctx, d_lo=2, d_hi=None):
    """Max |<h_J, h_I>| per tree distance over halo-meeting pairs, and the fitted slope."""
    if ctx.level_max - ctx.level_min < 3:
        raise FrameError("the decay scan needs a window of at least 4 levels")
    G = ctx.gram
    d = ctx.dim

    def value(i, j):
        return float(np.max(np.abs(G[i * d:(i + 1) * d, j * d:(j + 1) * d].toarray())))

    rows = _scan_rows(ctx, value, ctx.pairs)
    slope, icpt, rng = fit_slope(rows, d_lo, d_hi)
    return DecayTable(rows, slope, icpt, rng)


def inverse_expansion_matrix(ctx, power=1, tol=None):
    """Coefficients of T^-power h_J in the smooth atoms, for every J (columns).

    Computed with the Neumann series applied to the identity, then powered.
    """
    tol = ctx.neumann_tol if tol is None else tol
    rho = ctx.contraction_estimate()
    if rho >= 1.0:
        raise FrameError(f"no contraction: |I - T| ~ {rho:.3f}")
    G = ctx.gram_dense()
    n = ctx.size
    term = np.eye(n)
    total = np.eye(n)
    for k in range(ctx.max_terms):
        term = term - G @ term
        total += term
        if np.max(np.abs(term)) < tol:
            break
    else:
        raise FrameError("Neumann series for the inverse did not converge")
    out = total
    for _ in range(power - 1):
        out = out @ total
    return out


def well_localized_scan(ctx, power=1, d_lo=2, d_hi=None, tol=None):
    """Max |coefficient of h_I in T^-power h_J| per tree distance over all pairs."""
    if ctx.level_max - ctx.level_min < 3:
        raise FrameError("the decay scan needs a window of at least 4 levels")
    A = inverse_expansion_matrix(ctx, power, tol)
    d = ctx.dim
    m = len(ctx.squares)
    blocks = np.abs(A).reshape(m, d, m, d).max(axis=(1, 3))
    pairs = [(i, j) for i in range(m) for j in range(i, m)]
    rows = _scan_rows(ctx, lambda i, j: float(max(blocks[i, j], blocks[j, i])), pairs)
    slope, icpt, rng = fit_slope(rows, d_lo, d_hi)
    return DecayTable(rows, slope, icpt, rng)


def largest_contracting_eta(kappa, level_min=0, level_max=2, etas=None):
    """Largest eta on a grid of candidates for which |I - G| < 1 on the window."""
    etas = etas if etas is not None else [0.01, 0.02, 0.03, 0.05, 0.07, 0.09]
    best = None
    report = []
    for e in etas:
        ctx = FrameContext(AlpertSystem(kappa, e), level_min, level_max)
        rho = ctx.contraction_estimate()
        report.append((e, rho))
        if rho < 1.0:
            best = e
    return best, report
