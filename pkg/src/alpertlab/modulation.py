"""Father wavelets, modulations and Kakeya-type Alpert polynomials.

Everything lives in unit coordinates on U = [0, 1]^2.  A father wavelet on a
dyadic square I is the tensor product of two plateau factors, so each
modulated inner product against a smooth atom is a product of two 1D
oscillatory integrals.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .alpert import AlpertSystem
from .dyadic import DyadicError, DyadicSquare, ROOT, dtree, squares_at_level
from .fields import SampledField2D
from .frame import CoefficientMap, FrameContext, fit_slope, inverse_expansion_matrix
from .quadrature import composite_rule
from .separable import (MIN_POINTS_PER_WAVELENGTH, QUAD, PieceFactor, PlateauFactor,
                        ResolutionError, common_rule, piece_factor, product_integrals)


class ModulationError(ValueError):
    pass


# ------------------------------------------------------------ father wavelets

def father_factors(I):
    """The x and y plateau factors of the father wavelet on I."""
    l = I.side
    x0, y0 = I.corner
    return PlateauFactor(l, x0), PlateauFactor(l, y0)


def father_support(I):
    fx, fy = father_factors(I)
    return fx.support() + fy.support()


def father_peak(I):
    fx, fy = father_factors(I)
    return fx.peak * fy.peak


def _father_grid(I, quad=QUAD):
    fx, fy = father_factors(I)
    x, wx = common_rule([fx], quad=quad)
    y, wy = common_rule([fy], quad=quad)
    return x, y, wx, wy


def father_wavelet(I, grid=None):
    """phi_I sampled on ``grid`` (x, y, wx, wy), by default its own composite grid."""
    x, y, wx, wy = grid if grid is not None else _father_grid(I)
    fx, fy = father_factors(I)
    return SampledField2D(x, y, wx, wy, fx.values(x) @ fy.values(y).T)


def father_coefficient(f, I):
    """<f, phi_I> by quadrature on f's grid."""
    fx, fy = father_factors(I)
    return (f.wx * fx.values(f.x)[:, 0]) @ f.values @ (f.wy * fy.values(f.y)[:, 0])


def father_projection(f, I):
    """Rank-one pseudoprojection <f, phi_I> phi_I on f's grid."""
    c = father_coefficient(f, I)
    phi = father_wavelet(I, (f.x, f.y, f.wx, f.wy))
    return phi.with_values(c * phi.values)


def flat_constant():
    """<phi, phi> for the unit father wavelet; 1 by construction."""
    fx, _ = father_factors(ROOT)
    x, w = common_rule([fx])
    return float(w @ fx.values(x)[:, 0] ** 2) ** 2


# ------------------------------------------------------- modulation sequences

def modulation_window(level):
    return 2.0 ** (2 * level), 2.0 ** (2 * level + 10)


@dataclass(frozen=True)
class ModulationSequence:
    """Horizontal frequencies u_I = (u_I', 0) for squares I of one level."""
    level: int
    vectors: dict
    check_window: bool = True

    def __post_init__(self):
        lo, hi = modulation_window(self.level)
        clean = {}
        for I, u in self.vectors.items():
            if I.level != self.level:
                raise ModulationError(f"{I} is not at level {self.level}")
            u = np.asarray(u, dtype=float)
            if u.shape == (2,):
                u = np.append(u, 0.0)
            if u.shape != (3,) or u[2] != 0.0:
                raise ModulationError(f"modulation at {I} must be horizontal, got {u}")
            m = math.hypot(u[0], u[1])
            if self.check_window and not (lo * (1 - 1e-12) <= m <= hi * (1 + 1e-12)):
                raise ModulationError(f"|u| = {m:g} at {I} outside [{lo:g}, {hi:g}]")
            u.setflags(write=False)
            clean[I] = u
        object.__setattr__(self, "vectors", clean)

    @classmethod
    def zero(cls, squares, level):
        return cls(level, {I: np.zeros(3) for I in squares}, check_window=False)

    @classmethod
    def constant(cls, squares, level, u, check_window=True):
        return cls(level, {I: np.asarray(u, float) for I in squares}, check_window)

    def __getitem__(self, I):
        return self.vectors[I]

    def __contains__(self, I):
        return I in self.vectors

    def horizontal(self, I):
        return self.vectors[I][:2]

    @property
    def squares(self):
        return sorted(self.vectors)


def random_modulation(squares, level, rng):
    """Quasi-uniform directions and log-uniform magnitudes over the level's window."""
    squares = list(squares)
    n = len(squares)
    theta = 2 * math.pi * (np.arange(n) + rng.random()) / max(n, 1)
    theta = theta[rng.permutation(n)]
    mag = 2.0 ** (2 * level + 10 * rng.random(n))
    vec = {I: np.array([m * math.cos(t), m * math.sin(t), 0.0])
           for I, m, t in zip(squares, mag, theta)}
    return ModulationSequence(level, vec)


def modulate(pieces, u):
    """Sum of e^{i u_I . y} times each piece; pieces share one grid."""
    pieces = dict(pieces)
    if not pieces:
        raise ModulationError("no pieces to modulate")
    first = next(iter(pieces.values()))
    out = np.zeros(first.shape, dtype=complex)
    for I, p in pieces.items():
        if I.level != u.level:
            raise ModulationError(f"piece at {I} does not match modulation level {u.level}")
        if I not in u:
            raise ModulationError(f"no modulation given for {I}")
        if not p.same_grid(first):
            raise ModulationError("pieces live on different grids")
        u1, u2 = u.horizontal(I)
        out += np.exp(1j * u1 * p.x)[:, None] * p.values * np.exp(1j * u2 * p.y)[None, :]
    return first.with_values(out)


# --------------------------------------------------- modulated coefficients

def _boxes_meet(a, b):
    return a[0] < b[1] and b[0] < a[1] and a[2] < b[3] and b[2] < a[3]


def _axis_integrals(I, system, level, ix, iy, u, ppw, max_nodes, sign=1):
    fx, fy = father_factors(I)
    X = product_integrals(fx, piece_factor(system, level, ix), sign * u[0], ppw,
                          max_nodes=max_nodes)[0]
    Y = product_integrals(fy, piece_factor(system, level, iy), sign * u[1], ppw,
                          max_nodes=max_nodes)[0]
    return X, Y


def modulated_coefficient(I, J, u, system, index=None,
                          points_per_wavelength=MIN_POINTS_PER_WAVELENGTH, max_nodes=None):
    """Integral of e^{i u . y} phi_I(y) h_{J,a}(y) for all atoms a on J (or one index).

    Zero without quadrature when the supports are disjoint.
    """
    u = np.asarray(u, dtype=float)[:2]
    s = system
    atom_box = s.support(J.level, J.ix) + s.support(J.level, J.iy)
    if not _boxes_meet(father_support(I), atom_box):
        out = np.zeros(s.dim, dtype=complex)
    else:
        X, Y = _axis_integrals(I, s, J.level, J.ix, J.iy, u, points_per_wavelength, max_nodes)
        out = np.einsum("m,amn,n->a", X, s.factor_matrices, Y)
    return out if index is None else out[index]


def _level_coefficients(I, system, level, u, ppw, sign=1):
    """Coefficients for every square of one level whose atoms meet supp phi_I.

    Levels below zero use the single square of side 2^-level with corner 0.
    Returns (ix list, iy list, array (nx, ny, dim)).
    """
    s = system
    lo_x, hi_x, lo_y, hi_y = father_support(I)
    l = 2.0 ** (-level)
    r = s.reach * l
    n = 1 if level <= 0 else 1 << level

    def indices(lo, hi):
        a = max(0, int(math.floor((lo - r) / l)))
        b = min(n - 1, int(math.floor((hi + r) / l)))
        return list(range(a, b + 1))

    ixs, iys = indices(lo_x, hi_x), indices(lo_y, hi_y)
    fx, fy = father_factors(I)
    X = np.array([product_integrals(fx, PieceFactor(s, l, i * l), sign * u[0], ppw)[0] for i in ixs])
    Y = np.array([product_integrals(fy, PieceFactor(s, l, j * l), sign * u[1], ppw)[0] for j in iys])
    coef = np.einsum("im,amn,jn->ija", X, s.factor_matrices, Y)
    return ixs, iys, coef


def grid_distance(J, I, t):
    """Tree distance from J to the level-t squares inside I (t >= I.level)."""
    s = I.level
    if J.level >= s and J.ancestor(s) == I:
        return abs(J.level - t)
    if J.level <= s and I.ancestor(J.level) == J:
        return t - J.level
    a = min(J.level, s)
    A, B = J.ancestor(a), I.ancestor(a)
    while A != B:
        A, B, a = A.parent, B.parent, a - 1
    return J.level + t - 2 * a


@dataclass
class ScaleScan:
    level_mass: dict          # level -> fraction of l^2 mass
    distance_max: list        # (dtree, max |coefficient|, count)
    slope: float
    case2_rows: list          # (r - 2s, max |coefficient| over J inside 2I at level r)
    case2_rate: float
    total_mass: float
    records: list = field(repr=False, default_factory=list)   # (level, dtree, |coef|) per square

    def concentration(self, center, radius):
        return sum(m for L, m in self.level_mass.items() if abs(L - center) <= radius)


def scales_decay_scan(I, u, system, level_max=None, super_levels=3,
                      points_per_wavelength=MIN_POINTS_PER_WAVELENGTH, check_window=True,
                      fit_range=(2, 6)):
    """Modulated coefficients of phi_I against every atom of the U tree meeting supp phi_I.

    Covers levels -super_levels (squares containing U) through ``level_max``
    (default 2s + 6).  Reports per-level mass fractions, maxima per tree
    distance to the level-2s squares inside I with a fitted slope, and the
    finer-than-2s decay inside 2I.
    """
    s = I.level
    t = 2 * s
    u = np.asarray(u, dtype=float)[:2]
    lo, hi = modulation_window(s)
    if check_window and not lo * (1 - 1e-12) <= math.hypot(*u) <= hi * (1 + 1e-12):
        raise ModulationError(f"|u| = {math.hypot(*u):g} outside [{lo:g}, {hi:g}]")
    level_max = t + 6 if level_max is None else level_max
    mass = {}
    dist = {}
    case2 = {}
    records = []
    two_i = I.dilate(2.0)
    for L in range(-super_levels, level_max + 1):
        ixs, iys, coef = _level_coefficients(I, system, L, u, points_per_wavelength)
        mags = np.abs(coef)
        mass[L] = float(np.sum(mags ** 2))
        blockmax = mags.max(axis=2)
        for a, ix in enumerate(ixs):
            for b, iy in enumerate(iys):
                m = float(blockmax[a, b])
                J = DyadicSquare(L, ix, iy) if L >= 0 else DyadicSquare(L, 0, 0)
                d = grid_distance(J, I, t) if L >= 0 else t - L
                records.append((L, d, m))
                if m == 0.0:
                    continue
                best, cnt = dist.get(d, (0.0, 0))
                dist[d] = (max(best, m), cnt + 1)
                if L >= t:
                    x0, x1, y0, y1 = J.bounds
                    if x0 >= two_i[0] and x1 <= two_i[1] and y0 >= two_i[2] and y1 <= two_i[3]:
                        case2[L - t] = max(case2.get(L - t, 0.0), m)
    total = sum(mass.values())
    frac = {L: (m / total if total > 0 else 0.0) for L, m in mass.items()}
    rows = [(d, dist[d][0], dist[d][1]) for d in sorted(dist)]
    slope, _, _ = fit_slope(rows, *fit_range)
    c2 = [(k, case2[k], 1) for k in sorted(case2)]
    rate, _, _ = fit_slope(c2, 1, max(case2) if case2 else None)
    return ScaleScan(frac, rows, slope, [(k, m) for k, m, _ in c2], -rate, total, records)


# ------------------------------------------------------ factorization check

def _transform_axis(fa, fb, freq, ppw):
    # integral of e^{-i freq x} fa(x) fb(x)
    return product_integrals(fa, fb, -freq, ppw)


def mod_factorization_check(I, J, u, system, index=0,
                            points_per_wavelength=MIN_POINTS_PER_WAVELENGTH):
    """Fourier transform of phi_I h_J at u against e^{-i u.c_J} times the centred reference.

    The reference product uses the father wavelet of the side-2^-s square
    centred at the origin and the atom on the side-2^-t square centred at
    the origin, t = J.level.  Both sides are computed by separate quadratures.
    """
    cx, cy = J.center
    x0, x1, y0, y1 = I.bounds
    if not (x0 <= cx <= x1 and y0 <= cy <= y1):
        raise ModulationError(f"centre of {J} is not in {I}")
    u = np.asarray(u, dtype=float)[:2]
    s = system
    C = s.factor_matrices[index]
    fx, fy = father_factors(I)
    X = _transform_axis(fx, piece_factor(s, J.level, J.ix), u[0], points_per_wavelength)[0]
    Y = _transform_axis(fy, piece_factor(s, J.level, J.iy), u[1], points_per_wavelength)[0]
    lhs = X @ C @ Y
    lI, lJ = I.side, J.side
    gx = PlateauFactor(lI, -lI / 2)
    hx = PieceFactor(s, lJ, -lJ / 2)
    Xr = _transform_axis(gx, hx, u[0], points_per_wavelength)[0]
    Yr = _transform_axis(gx, hx, u[1], points_per_wavelength)[0]
    rhs = np.exp(-1j * (u[0] * cx + u[1] * cy)) * (Xr @ C @ Yr)
    return complex(lhs), complex(rhs), float(abs(lhs - rhs))


def plateau_interior(I, J, system):
    """True when J's smooth support lies inside the plateau (I itself) of phi_I."""
    s = system
    ax = s.support(J.level, J.ix)
    ay = s.support(J.level, J.iy)
    x0, x1, y0, y1 = I.bounds
    return x0 <= ax[0] and ax[1] <= x1 and y0 <= ay[0] and ay[1] <= y1


# ------------------------------------------------------ Kakeya polynomials

@dataclass(frozen=True)
class KakeyaPolynomial:
    """sum_I b_I sum_{J in G_t[I]} e^{i c_J . u_I} h_{J,a}, t = 2s, for one atom index a.

    ``b`` holds the outer coefficients after the subunit rescale; ``scale``
    is the factor that was applied to the caller's coefficients.
    """
    system: AlpertSystem = field(repr=False)
    level: int
    b: dict
    u: ModulationSequence
    atom_index: int = 0
    scale: float = 1.0
    signs: dict = None

    @property
    def inner_level(self):
        return 2 * self.level

    @property
    def outer_squares(self):
        return sorted(self.b)

    def inner_squares(self, I):
        return squares_at_level(self.inner_level, I)

    def effective_b(self, I):
        sg = 1 if self.signs is None else self.signs[I]
        return sg * self.b[I]

    def coefficient(self, I, J):
        if J.level != self.inner_level or J.ancestor(self.level) != I:
            raise ModulationError(f"{J} is not a level-{self.inner_level} square inside {I}")
        c = np.array(J.center)
        return self.effective_b(I) * np.exp(1j * float(c @ self.u.horizontal(I)))

    def block_coefficients(self, I):
        """(squares J, coefficients) of the inner block attached to I."""
        Js = self.inner_squares(I)
        ctr = np.array([J.center for J in Js])
        ph = np.exp(1j * (ctr @ self.u.horizontal(I)))
        return Js, self.effective_b(I) * ph

    def coefficient_map(self):
        d = self.system.dim
        out = CoefficientMap(d)
        for I in self.outer_squares:
            Js, c = self.block_coefficients(I)
            for J, v in zip(Js, c):
                e = np.zeros(d, complex)
                e[self.atom_index] = v
                out[J] = e
        return out

    def level_matrix(self, outer=None):
        """Coefficients on the level-t grid as an (n, n) array indexed [ix, iy]."""
        n = 1 << self.inner_level
        M = np.zeros((n, n), complex)
        for I in (self.outer_squares if outer is None else outer):
            Js, c = self.block_coefficients(I)
            for J, v in zip(Js, c):
                M[J.ix, J.iy] = v
        return M

    def evaluate(self, x, y, outer=None):
        """Values on the tensor grid x by y (optionally only some outer blocks)."""
        return evaluate_level(self.system, self.inner_level, self.level_matrix(outer),
                              self.atom_index, x, y)

    def sample_grid(self, oversampling=4):
        Js = squares_at_level(self.inner_level, ROOT)
        n = 1 << self.inner_level
        x, y, wx, wy = self.system.quadrature_grid(
            [DyadicSquare(self.inner_level, i, i) for i in range(n)], order=oversampling * 2,
            fine_order=8, fine_panels=2)
        del Js
        return x, y, wx, wy

    def sup_norm(self, oversampling=4):
        x, y, _, _ = self.sample_grid(oversampling)
        return float(np.max(np.abs(self.evaluate(x, y))))

    def with_signs(self, signs):
        return KakeyaPolynomial(self.system, self.level, self.b, self.u, self.atom_index,
                                self.scale, signs)


def evaluate_level(system, level, M, index, x, y):
    """sum_{ix,iy} M[ix, iy] h_{(level, ix, iy), index} on the grid x by y."""
    n = M.shape[0]
    C = system.factor_matrices[index]
    X = np.stack([system.pieces(x, level, i) for i in range(n)], axis=1)   # (nx, n, 2k)
    Y = np.stack([system.pieces(y, level, j) for j in range(n)], axis=1)
    big = np.einsum("ij,mn->imjn", M, C).reshape(n * C.shape[0], n * C.shape[1])
    return X.reshape(len(x), -1) @ big @ Y.reshape(len(y), -1).T


SUBUNIT_MARGIN = 0.99


def build_kakeya_polynomial(b, u, system, atom_index=0, rescale=True):
    """Kakeya-type polynomial with outer coefficients b on level u.level, rescaled to sup <= 1."""
    b = {I: complex(v) for I, v in dict(b).items()}
    if not b or all(v == 0 for v in b.values()):
        raise ModulationError("outer coefficients are all zero")
    for I in b:
        if I.level != u.level:
            raise ModulationError(f"{I} is not at the modulation level {u.level}")
        if I not in u:
            raise ModulationError(f"no modulation for {I}")
    f = KakeyaPolynomial(system, u.level, b, u, atom_index)
    if not rescale:
        return f
    sup = f.sup_norm()
    scale = SUBUNIT_MARGIN / sup
    return KakeyaPolynomial(system, u.level, {I: v * scale for I, v in b.items()}, u,
                            atom_index, scale)


def martingale_transform(f, signs):
    """Flip the outer coefficients of f by the signs (one per outer square)."""
    signs = dict(signs)
    if set(signs) != set(f.b):
        raise ModulationError("signs must be indexed by exactly the outer squares")
    if any(v not in (1, -1) for v in signs.values()):
        raise ModulationError("signs must be +1 or -1")
    current = f.signs or {I: 1 for I in f.b}
    return f.with_signs({I: current[I] * signs[I] for I in f.b})


def random_signs(squares, rng):
    return {I: (1 if x else -1) for I, x in zip(squares, rng.integers(0, 2, len(squares)))}


# ------------------------------------------------------ gamma coefficients

@dataclass
class GammaResult:
    gamma: CoefficientMap
    tail: dict              # K -> bound on the discarded part of the J-sum
    full: CoefficientMap    # the untruncated sums over the whole local window
    context: FrameContext = field(repr=False)


def _as_father_coefficient(f, I):
    if isinstance(f, SampledField2D):
        return father_coefficient(f, I)
    return complex(f)


def gamma_coefficients(I, u, f, system, N=1, sign=-1, tol=1e-10):
    """gamma_K = sum_J <M_u Delta_I f, h_J> <T^-2 h_J, h_K> with tree-distance truncation.

    The modulated coefficients are taken in Fourier-transform form
    (sign=-1: e^{-i u.y}); sign=+1 gives the literal e^{+i u.y} integral.
    <T^-2 h_J, h_K> is the coefficient of h_K in T^-1 h_J, i.e. the (K, J)
    entry of the inverse Gram matrix on a local window around I.
    """
    if N < 1:
        raise ModulationError("N must be at least 1")
    s, t = I.level, 2 * I.level
    base_level = max(0, min(s, t - 3 * N + 2))
    base = I.ancestor(base_level)
    ctx = FrameContext(system, base_level, t + 3 * N - 2, neumann_tol=tol, base=base)
    if ctx.size > 6000:
        raise ModulationError(f"local window has {ctx.size} atoms; use a smaller N or s")
    fc = _as_father_coefficient(f, I)
    u2 = np.asarray(u, dtype=float)[:2]
    d = system.dim
    cvec = np.zeros(ctx.size, complex)
    for i, J in enumerate(ctx.squares):
        cvec[i * d:(i + 1) * d] = modulated_coefficient(I, J, sign * u2, system)
    cvec *= fc
    A = inverse_expansion_matrix(ctx, 1, tol)
    m = len(ctx.squares)
    dist_grid = np.array([grid_distance(J, I, t) for J in ctx.squares])
    gamma, tail, full = CoefficientMap(d), {}, CoefficientMap(d)
    for k, K in enumerate(ctx.squares):
        if dist_grid[k] >= 2 * N:
            continue
        dk = np.array([dtree(J, K, top=base_level) for J in ctx.squares])
        keep = (dk < N) | (dist_grid < N)
        mask = np.repeat(keep, d)
        rows = A[k * d:(k + 1) * d]
        gamma[K] = rows[:, mask] @ cvec[mask]
        full[K] = rows @ cvec
        tail[K] = float(np.max(np.abs(rows[:, ~mask]) @ np.abs(cvec[~mask]))) if np.any(~mask) else 0.0
    return GammaResult(gamma, tail, full, ctx)


@dataclass
class PhaseFit:
    slope: np.ndarray       # fitted d(arg gamma)/dz
    expected: np.ndarray    # sign * u
    modulus_spread: float   # max relative deviation of |gamma_K| from the mean
    squares: list
    index: int


def gamma_phase_covariance(result, I, u, squares=None, index=None, sign=-1):
    """Regress arg gamma_K against the centre of K over translates K.

    Phases are unwrapped along a path of nearest-neighbour steps so that
    only increments below pi are ever taken modulo 2 pi.
    """
    g = result.gamma
    t = 2 * I.level
    Ks = sorted(squares if squares is not None else squares_at_level(t, I))
    if index is None:
        index = int(np.argmax(np.abs(g[Ks[0]])))
    vals = {K: g[K][index] for K in Ks}
    order = sorted(Ks, key=lambda K: (K.iy, K.ix if K.iy % 2 == 0 else -K.ix))
    phase = {order[0]: 0.0}
    for prev, K in zip(order[:-1], order[1:]):
        phase[K] = phase[prev] + float(np.angle(vals[K] / vals[prev]))
    ctr = np.array([K.center for K in order])
    ph = np.array([phase[K] for K in order])
    X = np.column_stack([ctr - ctr[0], np.ones(len(order))])
    coef, *_ = np.linalg.lstsq(X, ph, rcond=None)
    mods = np.array([abs(vals[K]) for K in order])
    spread = float(np.max(np.abs(mods / mods.mean() - 1.0)))
    return PhaseFit(coef[:2], sign * np.asarray(u, float)[:2], spread, order, index)


# ------------------------------------------------ translation commutation

def _raw_smooth_cross(system, J, I):
    """<smooth h_J, raw h_I> blocks (dim_J x dim_I)."""
    s = system
    X = product_integrals(piece_factor(s, J.level, J.ix), piece_factor(s, I.level, I.ix, False))
    Y = product_integrals(piece_factor(s, J.level, J.iy), piece_factor(s, I.level, I.iy, False))
    return np.einsum("amn,mp,nq,bpq->ab", s.factor_matrices, X, Y, s.factor_matrices)


def _analysis(system, F, levels):
    """Raw analysis <F, h_I> of a smooth expansion F over U's squares on the given levels."""
    s = system
    out = {}
    for L in levels:
        for I in squares_at_level(L):
            acc = np.zeros(s.dim, complex)
            hit = False
            for J, c in F.items():
                box = s.support(J.level, J.ix) + s.support(J.level, J.iy)
                if not _boxes_meet(box, I.bounds):
                    continue
                acc += c @ _raw_smooth_cross(s, J, I)
                hit = True
            if hit:
                out[I] = acc
    return out


def _synthesize_points(system, coeffs, x, y):
    vals = np.zeros((len(x), len(y)), complex)
    for Q, b in coeffs.items():
        vals += system.evaluate(Q, b, x, y)
    return vals


def translation_commutation_check(system, v, z, F=None, depth=2, interior=None, samples=40):
    """max |S tau_z F - tau_z S F| on an interior sample grid.

    S is raw analysis followed by smooth synthesis on levels v .. v + depth of
    U; F maps squares (levels >= v) to smooth-atom coefficient vectors and
    defaults to one atom near the middle of U.  z must lie on the level-v
    lattice.
    """
    z = np.asarray(z, dtype=float)
    l = 2.0 ** (-v)
    k = z / l
    if not np.allclose(k, np.round(k), atol=1e-12):
        raise DyadicError(f"shift {z} is not on the level-{v} lattice")
    k = np.round(k).astype(int)
    if F is None:
        n = 1 << v
        F = {DyadicSquare(v, max(0, n // 2 - 1), max(0, n // 2 - 1)): np.eye(system.dim)[0]}
    if any(Q.level < v for Q in F):
        raise ModulationError("F must live on levels >= v")
    shifted = {}
    for Q, c in F.items():
        m = 1 << (Q.level - v)
        shifted[DyadicSquare(Q.level, Q.ix + m * k[0], Q.iy + m * k[1])] = c
    n_levels = range(v, v + depth + 1)
    SF = _analysis(system, F, n_levels)
    SFz = _analysis(system, shifted, n_levels)
    lo, hi = interior if interior is not None else (0.25, 0.75)
    x = np.linspace(lo, hi, samples)
    a = _synthesize_points(system, SFz, x, x)
    b = _synthesize_points(system, SF, x - z[0], x - z[1])
    return float(np.max(np.abs(a - b)))
