"""Fourier extension from the paraboloid, L^q norms on balls, square functions.

Densities are given in unit coordinates y on [0, 1]^2 together with a
placement x = corner + side * y in the physical plane; the default places U
at [-1/4, 1/4]^2.  The extension

    E f(xi) = integral over U of exp(-i (x . xi' + |x|^2 xi_3)) f(x) dx

factors over the two axes for every fixed xi_3, so a frequency cube is
evaluated slice by slice with 1D quadratures and small matrix products.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .dyadic import nu_disjoint_triple
from .fields import SampledField2D
from .separable import PieceFactor, PlateauFactor, ResolutionError, common_rule
from .modulation import father_factors

EXT_QUAD = (8, 16, 4)
EXT_POINTS_PER_WAVELENGTH = 8
# a father piece whose phase frequency times its transition width exceeds this
# on some axis has a transform below ~1e-13 of its peak there
NEGLIGIBLE_PHASE = 400.0


class ExtensionError(ValueError):
    pass


@dataclass(frozen=True)
class Placement:
    """Affine map from unit coordinates to the physical plane."""
    corner: tuple = (-0.25, -0.25)
    side: float = 0.5

    def physical(self, y, axis):
        return self.corner[axis] + self.side * np.asarray(y, dtype=float)

    def sub(self, Q):
        """Placement of the dyadic square Q (unit coordinates) as a unit square."""
        x0, y0 = Q.corner
        return Placement((self.corner[0] + self.side * x0, self.corner[1] + self.side * y0),
                         self.side * Q.side)

    def physical_frequency(self, u):
        return np.asarray(u, dtype=float)[:2] / self.side

    def modulation_phase(self, u):
        """exp(-i u . corner / side), the constant picked up by unit-coordinate modulation."""
        u = np.asarray(u, dtype=float)[:2]
        return np.exp(-1j * (u[0] * self.corner[0] + u[1] * self.corner[1]) / self.side)


UNIT_PLACEMENT = Placement()


@dataclass(frozen=True)
class FrequencyGrid:
    """Cubic lattice h Z^3 restricted to the ball of the given radius."""
    radius: float
    spacing: float = 0.5

    def __post_init__(self):
        if not 0 < self.spacing <= 1:
            raise ExtensionError(f"spacing {self.spacing} must lie in (0, 1]")
        if self.radius <= 0:
            raise ExtensionError("radius must be positive")

    @property
    def axis(self):
        n = int(math.ceil(self.radius / self.spacing - 1e-12))
        return self.spacing * np.arange(-n, n + 1)

    @property
    def weight(self):
        return self.spacing ** 3

    def slice_mask(self, xi3, radius=None):
        r = self.radius if radius is None else radius
        a = self.axis
        return a[:, None] ** 2 + a[None, :] ** 2 + xi3 ** 2 <= r * r * (1 + 1e-12)

    def slices(self, radius=None):
        """(k, xi3, mask) for slices that meet the ball of the given radius."""
        r = self.radius if radius is None else radius
        for k, z in enumerate(self.axis):
            if abs(z) <= r * (1 + 1e-12):
                yield k, z, self.slice_mask(z, r)

    def ball_count(self, radius=None):
        return sum(int(m.sum()) for _, _, m in self.slices(radius))


@dataclass
class ExtensionField:
    grid: FrequencyGrid
    values: np.ndarray      # (n, n, n) indexed [xi1, xi2, xi3]

    def at(self, i, j, k):
        return self.values[i, j, k]


# --------------------------------------------------------------- 1D banks

class AxisBank:
    """1D extension transforms of several factors along one physical axis.

    For each factor f (values (n, p)) and slice xi_3 it returns
    side * integral exp(-i (p xi + p^2 xi_3)) f(y) dy over the frequencies
    ``xi - shift``, shape (len(xi), p).
    """

    def __init__(self, factors, placement, axis, xi, xi3_max, shift=0.0, quad=EXT_QUAD,
                 points_per_wavelength=EXT_POINTS_PER_WAVELENGTH):
        self.factors = list(factors)
        self.xi = np.asarray(xi, dtype=float) - shift
        side = placement.side
        pmax = max(abs(placement.physical(0.0, axis)), abs(placement.physical(1.0, axis))) + side
        freq = side * (np.max(np.abs(self.xi)) + 2 * pmax * abs(xi3_max))
        spacing = None if freq == 0 else 2 * math.pi / freq / points_per_wavelength
        self._e1, self._v, self._p2 = [], [], []
        for f in self.factors:
            y, w = common_rule([f], spacing, quad)
            p = placement.physical(y, axis)
            self._e1.append(np.exp(-1j * np.outer(p, self.xi)))
            self._v.append(f.values(y) * (w * side)[:, None])
            self._p2.append(p * p)

    def __call__(self, xi3):
        return [e.T @ (np.exp(-1j * xi3 * p2)[:, None] * v)
                for e, v, p2 in zip(self._e1, self._v, self._p2)]


# ------------------------------------------------------ sampled densities

def _check_resolution(nodes, placement, axis, xi_max, xi3_max, ppw=EXT_POINTS_PER_WAVELENGTH):
    if len(nodes) < 2:
        return
    p = placement.physical(nodes, axis)
    gap = float(np.max(np.diff(np.sort(p))))
    freq = xi_max + 2 * float(np.max(np.abs(p))) * xi3_max
    if freq == 0:
        return
    need = 2 * math.pi / freq / ppw
    if gap > need:
        span = float(p.max() - p.min())
        n = int(math.ceil(span / need)) + 1
        raise ResolutionError(f"source grid too coarse on axis {axis}: node gap {gap:.3g} > "
                              f"{need:.3g}; use at least {n} nodes")


class FieldExtension:
    """Slices of E f for a density sampled on a tensor grid."""

    def __init__(self, f, grid, placement=UNIT_PLACEMENT, shift=(0.0, 0.0)):
        self.f = f
        self.grid = grid
        self.placement = placement
        xi = grid.axis
        R = grid.radius
        _check_resolution(f.x, placement, 0, np.max(np.abs(xi - shift[0])), R)
        _check_resolution(f.y, placement, 1, np.max(np.abs(xi - shift[1])), R)
        side = placement.side
        self.px = placement.physical(f.x, 0)
        self.py = placement.physical(f.y, 1)
        self.ex = np.exp(-1j * np.outer(xi - shift[0], self.px)) * (f.wx * side)
        self.ey = np.exp(-1j * np.outer(xi - shift[1], self.py)) * (f.wy * side)

    def slice(self, xi3):
        ax = self.ex * np.exp(-1j * xi3 * self.px ** 2)
        ay = self.ey * np.exp(-1j * xi3 * self.py ** 2)
        return ax @ self.f.values @ ay.T


def fourier_extension(f, grid, placement=UNIT_PLACEMENT):
    """E f on the whole frequency cube (values outside the ball are computed too)."""
    src = FieldExtension(f, grid, placement)
    a = grid.axis
    out = np.empty((len(a), len(a), len(a)), complex)
    for k, z in enumerate(a):
        out[:, :, k] = src.slice(z)
    return ExtensionField(grid, out)


def extension_at(f, xi, placement=UNIT_PLACEMENT):
    """E f at scattered frequencies xi (m, 3) by the same tensor quadrature."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    side = placement.side
    px = placement.physical(f.x, 0)
    py = placement.physical(f.y, 1)
    out = np.empty(len(xi), complex)
    for i, (a, b, c) in enumerate(xi):
        kx = np.exp(-1j * (px * a + px ** 2 * c)) * f.wx * side
        ky = np.exp(-1j * (py * b + py ** 2 * c)) * f.wy * side
        out[i] = kx @ f.values @ ky
    return out


# ----------------------------------------------------------- atom sources

class KakeyaExtension:
    """Per-outer-square extension blocks of a Kakeya-type polynomial.

    ``blocks(xi3)`` returns an array (n_outer, n, n) holding
    b_I E(sum_J e^{i c_J.u_I} h_J) without the martingale signs.
    """

    def __init__(self, f, grid, placement=UNIT_PLACEMENT, quad=EXT_QUAD):
        self.f = f
        self.grid = grid
        self.placement = placement
        self.outer = f.outer_squares
        s = f.system
        t = f.inner_level
        side = 2.0 ** (-t)
        self._ix, self._iy = {}, {}
        xs, ys = set(), set()
        for I in self.outer:
            Js = f.inner_squares(I)
            xs.update(J.ix for J in Js)
            ys.update(J.iy for J in Js)
        xs, ys = sorted(xs), sorted(ys)
        self._xpos = {i: k for k, i in enumerate(xs)}
        self._ypos = {j: k for k, j in enumerate(ys)}
        R = grid.radius
        self.bx = AxisBank([PieceFactor(s, side, i * side) for i in xs], placement, 0,
                           grid.axis, R, quad=quad)
        self.by = AxisBank([PieceFactor(s, side, j * side) for j in ys], placement, 1,
                           grid.axis, R, quad=quad)
        C = s.factor_matrices[f.atom_index]
        self._layout = []
        for I in self.outer:
            Js = f.inner_squares(I)
            ctr = np.array([J.center for J in Js])
            c = f.b[I] * np.exp(1j * (ctr @ f.u.horizontal(I)))
            cx = sorted({J.ix for J in Js})
            cy = sorted({J.iy for J in Js})
            M = np.zeros((len(cx), len(cy)), complex)
            for J, v in zip(Js, c):
                M[cx.index(J.ix), cy.index(J.iy)] = v
            big = np.einsum("ij,mn->imjn", M, C).reshape(len(cx) * C.shape[0], len(cy) * C.shape[1])
            self._layout.append(([self._xpos[i] for i in cx], [self._ypos[j] for j in cy], big))

    def blocks(self, xi3):
        Ax = self.bx(xi3)
        Ay = self.by(xi3)
        out = []
        for cx, cy, big in self._layout:
            A = np.concatenate([Ax[i] for i in cx], axis=1)
            B = np.concatenate([Ay[j] for j in cy], axis=1)
            out.append(A @ big @ B.T)
        return np.stack(out)

    def signs_vector(self, signs=None):
        signs = signs if signs is not None else (self.f.signs or {})
        return np.array([signs.get(I, 1) for I in self.outer], dtype=float)

    def slice(self, xi3, signs=None):
        return np.tensordot(self.signs_vector(signs), self.blocks(xi3), axes=(0, 0))


def kakeya_extension(f, grid, placement=UNIT_PLACEMENT):
    src = KakeyaExtension(f, grid, placement)
    a = grid.axis
    out = np.empty((len(a), len(a), len(a)), complex)
    for k, z in enumerate(a):
        out[:, :, k] = src.slice(z)
    return ExtensionField(grid, out)


# ------------------------------------------------------------------ norms

def lq_norm_ball(F, q, R=None):
    """(sum over grid points in B(0, R) of h^3 |F|^q)^(1/q); a quasi-norm for q < 1."""
    if q <= 0:
        raise ExtensionError("q must be positive")
    g = F.grid
    R = g.radius if R is None else R
    if R > g.radius * (1 + 1e-12):
        raise ExtensionError(f"radius {R} exceeds the grid radius {g.radius}")
    total = 0.0
    for k, _, mask in g.slices(R):
        total += float(np.sum(np.abs(F.values[:, :, k][mask]) ** q))
    return (g.weight * total) ** (1.0 / q)


def _as_source(f, grid, placement):
    if isinstance(f, SampledField2D):
        return FieldExtension(f, grid, placement)
    return KakeyaExtension(f, grid, placement)


def _check_triple(squares, nu):
    if squares is None or nu is None:
        return True
    ok = nu_disjoint_triple(*squares, nu)
    if not ok:
        warnings.warn(f"supports {[str(Q) for Q in squares]} are not {nu}-disjoint", stacklevel=3)
    return ok


def ball_radius(s, delta):
    return 2.0 ** (s / (1.0 - delta))


def trilinear_norm(f1, f2, f3, q, s, delta=0.5, spacing=0.5, placements=None, squares=None,
                   nu=None):
    """|| E f1 E f2 E f3 ||_{L^{q/3}(B(0, 2^{s/(1-delta)}))} on a lattice of the given spacing."""
    R = ball_radius(s, delta)
    grid = FrequencyGrid(R, spacing)
    placements = placements or (UNIT_PLACEMENT,) * 3
    _check_triple(squares, nu)
    srcs = [_as_source(f, grid, p) for f, p in zip((f1, f2, f3), placements)]
    r = q / 3.0
    total = 0.0
    for _, z, mask in grid.slices():
        prod = np.ones(mask.shape)
        for src in srcs:
            prod = prod * np.abs(src.slice(z))
        total += float(np.sum(prod[mask] ** r))
    return (grid.weight * total) ** (1.0 / r)


# -------------------------------------------------------- square functions

def _plateau_bank_1d(factor, placement, axis, xi_shifted, xi3, quad=EXT_QUAD):
    """side * integral exp(-i (p w + p^2 xi3)) chi(y) dy for each w in xi_shifted."""
    lo, hi = factor.support()
    p_lo, p_hi = placement.physical(lo, axis), placement.physical(hi, axis)
    pmax = max(abs(p_lo), abs(p_hi))
    freq = placement.side * (np.max(np.abs(xi_shifted)) + 2 * pmax * abs(xi3))
    spacing = 2 * math.pi / freq / EXT_POINTS_PER_WAVELENGTH if freq > 0 else None
    y, w = common_rule([factor], spacing, quad)
    p = placement.physical(y, axis)
    k = np.exp(-1j * (np.outer(xi_shifted, p) + xi3 * p * p)) * (w * placement.side)
    return k @ factor.values(y)[:, 0]


def _negligible(factor, placement, axis, xi_shifted, xi3):
    """True when every phase frequency on the factor's support is far above its transitions."""
    lo, hi = factor.support()
    p = placement.physical(np.array([lo, hi]), axis)
    lo_f = np.min(xi_shifted) + 2 * xi3 * p
    hi_f = np.max(xi_shifted) + 2 * xi3 * p
    lo_f, hi_f = lo_f.min(), hi_f.max()
    if lo_f <= 0 <= hi_f:
        return False
    omega = min(abs(lo_f), abs(hi_f))
    width = placement.side * factor.side * 3.0 / 8.0
    return omega * width > NEGLIGIBLE_PHASE


@dataclass
class FatherPieceExtension:
    """Extension of c_I M_{u_I} phi_I for father pieces on one placement, slice by slice."""
    coefficients: dict
    u: object
    grid: FrequencyGrid
    placement: Placement = UNIT_PLACEMENT
    skipped: int = field(default=0, init=False)
    evaluated: int = field(default=0, init=False)

    def piece(self, I, xi3):
        """E(c_I M_u phi_I) on the slice as an outer-product pair (a, b) or None if negligible."""
        pl = self.placement
        fx, fy = father_factors(I)
        w = pl.physical_frequency(self.u.horizontal(I))
        a = self.grid.axis
        if _negligible(fx, pl, 0, a - w[0], xi3) or _negligible(fy, pl, 1, a - w[1], xi3):
            self.skipped += 1
            return None
        self.evaluated += 1
        ax = _plateau_bank_1d(fx, pl, 0, a - w[0], xi3)
        ay = _plateau_bank_1d(fy, pl, 1, a - w[1], xi3)
        c = self.coefficients[I] * pl.modulation_phase(self.u.horizontal(I))
        return c * ax, ay

    def square_slice(self, xi3):
        """sum_I |E(M_u Delta_I f)|^2 on one slice."""
        n = len(self.grid.axis)
        acc = np.zeros((n, n))
        for I in self.coefficients:
            pr = self.piece(I, xi3)
            if pr is None:
                continue
            ax, ay = pr
            acc += np.outer(np.abs(ax) ** 2, np.abs(ay) ** 2)
        return acc


def _piece_coefficients(pieces):
    from .modulation import father_coefficient, father_peak
    out = {}
    for I, p in pieces.items():
        if isinstance(p, SampledField2D):
            # a father projection c phi_I: recover c from its plateau value
            cx, cy = I.center
            i = int(np.argmin(np.abs(p.x - cx)))
            j = int(np.argmin(np.abs(p.y - cy)))
            out[I] = p.values[i, j] / father_peak(I)
        else:
            out[I] = complex(p)
    return out


def fourier_square_function(pieces, u, grid, placement=UNIT_PLACEMENT):
    """(sum_I |E(M_{u_I} Delta_I f)|^2)^(1/2) on the frequency cube.

    ``pieces`` maps I to the father projection <f, phi_I> phi_I (as a sampled
    field) or directly to the coefficient <f, phi_I>.  Each modulated piece is
    evaluated as the unmodulated extension at xi - (u_I / side, 0).
    """
    for I in pieces:
        if I.level != u.level or I not in u:
            raise ExtensionError(f"piece {I} does not match the modulation sequence")
    src = FatherPieceExtension(_piece_coefficients(pieces), u, grid, placement)
    a = grid.axis
    out = np.empty((len(a), len(a), len(a)))
    for k, z in enumerate(a):
        out[:, :, k] = np.sqrt(src.square_slice(z))
    return out


def kakeya_square_function(f, grid, placement=UNIT_PLACEMENT):
    """(sum_I |b_I E(inner block of I)|^2)^(1/2) on the frequency cube."""
    src = KakeyaExtension(f, grid, placement)
    a = grid.axis
    out = np.empty((len(a), len(a), len(a)))
    for k, z in enumerate(a):
        out[:, :, k] = np.sqrt(np.sum(np.abs(src.blocks(z)) ** 2, axis=0))
    return out


# ------------------------------------------------------------- Khintchine

@dataclass
class KhintchineResult:
    mc_mean: float
    mc_stderr: float
    square_value: float
    ratio: float
    samples: np.ndarray = field(repr=False)
    plain: float = float("nan")     # all signs +1


def khintchine_trilinear(f1, f2, f3, q, n_samples=200, seed=0, s=None, delta=0.5,
                         spacing=0.5, radius=None, placements=None):
    """MC mean over independent sign vectors of ||prod_k E M_{+-} f_k||_{L^{q/3}(ball)}
    next to the Kakeya square-function value ||prod_k S f_k||_{L^{q/3}(ball)}.
    """
    if n_samples < 50:
        raise ExtensionError("use at least 50 samples")
    if radius is None:
        if s is None:
            raise ExtensionError("give s or an explicit radius")
        radius = ball_radius(s, delta)
    grid = FrequencyGrid(radius, spacing)
    placements = placements or (UNIT_PLACEMENT,) * 3
    srcs = [KakeyaExtension(f, grid, p) for f, p in zip((f1, f2, f3), placements)]
    rng = np.random.default_rng(seed)
    signs = [rng.choice([-1.0, 1.0], size=(n_samples, len(src.outer))) for src in srcs]
    r = q / 3.0
    acc = np.zeros(n_samples)
    sq = 0.0
    plain = 0.0
    for _, z, mask in grid.slices():
        prod = np.ones((n_samples, int(mask.sum())))
        sprod = np.ones(int(mask.sum()))
        pprod = np.ones(int(mask.sum()))
        for src, sg in zip(srcs, signs):
            B = src.blocks(z)[:, mask]
            prod = prod * np.abs(sg @ B)
            sprod = sprod * np.sqrt(np.sum(np.abs(B) ** 2, axis=0))
            pprod = pprod * np.abs(B.sum(axis=0))
        acc += np.sum(prod ** r, axis=1)
        sq += float(np.sum(sprod ** r))
        plain += float(np.sum(pprod ** r))
    vals = (grid.weight * acc) ** (1.0 / r)
    sqv = (grid.weight * sq) ** (1.0 / r)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    return KhintchineResult(mean, se, sqv, mean / sqv if sqv > 0 else float("nan"), vals,
                            (grid.weight * plain) ** (1.0 / r))
