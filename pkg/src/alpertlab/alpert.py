"""Alpert wavelets on dyadic squares, the moment-corrected mollifier, and
smooth (mollified) atoms.

Raw atoms are piecewise polynomials of total degree < kappa on the four
children of a square, orthonormal and orthogonal to every polynomial of
total degree < kappa.  The mollifier is a tensor product of a 1D profile
(polynomial times the bump exp(-1/(1-w^2))) so that a mollified atom is a
short sum of products g(x1) g(x2) of 1D smoothed pieces.  Every integral
downstream (Gram entries, moments, oscillatory transforms) factors into 1D
quadratures through these pieces.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from .dyadic import DyadicSquare, ROOT
from .fields import SampledField2D, uniform_grid
from .quadrature import bump_rule, composite_rule, gauss_legendre


class AlpertError(ValueError):
    pass


ETA_MAX = 0.1
PROFILE_RADIUS = 1.0 / math.sqrt(2.0)   # 1D support radius; the 2D support sits in B(0, 1)


def multi_indices(kappa):
    """Multi-indices of total degree < kappa, ordered by degree then by x-power descending."""
    return [(i, d - i) for d in range(kappa) for i in range(d, -1, -1)]


def poly_dim(kappa):
    return kappa * (kappa + 1) // 2


def alpert_dim(kappa):
    """Dimension of the moment-free piecewise polynomial space on four children."""
    return 3 * poly_dim(kappa)


# --------------------------------------------------------------- raw basis

def _half_monomial_integral(h, j, p):
    """Integral over the half [h/2, (h+1)/2] of t^j x^p, with t = 4x - 2h - 1."""
    x, w = gauss_legendre(j + p + 2, 0.5 * h, 0.5 * (h + 1))
    return float(np.sum(w * (4 * x - 2 * h - 1) ** j * x**p))


def _child_halves(k):
    return k % 2, k // 2


def _unit_basis(kappa, rank_tol=1e-10):
    """Coefficients (d, 4, P) of the orthonormal raw atoms on the unit square."""
    idx = multi_indices(kappa)
    P = len(idx)
    n = 4 * P
    M = np.zeros((P, n))
    B = np.zeros((n, n))
    for k in range(4):
        hx, hy = _child_halves(k)
        for a, (a1, a2) in enumerate(idx):
            col = k * P + a
            for b, (b1, b2) in enumerate(idx):
                M[b, col] = _half_monomial_integral(hx, a1, b1) * _half_monomial_integral(hy, a2, b2)
                B[col, k * P + b] = (_half_monomial_integral(hx, a1 + b1, 0)
                                     * _half_monomial_integral(hy, a2 + b2, 0))
    _, S, Vt = np.linalg.svd(M)
    rank = int(np.sum(S > rank_tol * S[0]))
    if rank != P:
        raise AlpertError(f"moment constraint rank {rank} differs from the expected {P}; "
                          f"singular values {S}")
    null = Vt[rank:].T
    Q = _gram_schmidt(null, B)
    if Q.shape[1] != n - P:
        raise AlpertError("orthonormalisation lost directions in the constraint null space")
    for c in range(Q.shape[1]):
        i = int(np.argmax(np.abs(Q[:, c]) > 1e-12 * np.max(np.abs(Q[:, c]))))
        if Q[i, c] < 0:
            Q[:, c] = -Q[:, c]
    return Q.T.reshape(n - P, 4, P), idx, B, M


def _gram_schmidt(V, B, drop_tol=1e-10):
    """Modified Gram-Schmidt of the columns of V in the inner product B, two passes."""
    out = []
    for v in V.T:
        v = v.copy()
        base = math.sqrt(abs(v @ B @ v))
        for _ in range(2):
            for q in out:
                v -= (q @ B @ v) * q
        nv = math.sqrt(abs(v @ B @ v))
        if nv > drop_tol * base:
            out.append(v / nv)
    return np.array(out).T


@dataclass(frozen=True)
class PiecewisePoly:
    """sum over children k and multi-indices alpha of coeffs[k, alpha] 1_{K_k} t^alpha,
    with t the child-centred coordinates scaled to [-1, 1]^2, times side^-1."""
    square: DyadicSquare
    kappa: int
    coeffs: np.ndarray

    @property
    def indices(self):
        return multi_indices(self.kappa)

    def _local(self, x, y):
        l = self.square.side
        u = (np.asarray(x, float) - self.square.ix * l) / l
        v = (np.asarray(y, float) - self.square.iy * l) / l
        return u, v

    def __call__(self, x, y):
        u, v = self._local(x, y)
        out = np.zeros(np.broadcast(u, v).shape)
        inside = (u >= 0) & (u <= 1) & (v >= 0) & (v <= 1)
        hx = (u >= 0.5).astype(int)
        hy = (v >= 0.5).astype(int)
        tx, ty = 4 * u - 2 * hx - 1, 4 * v - 2 * hy - 1
        k = hx + 2 * hy
        for kk in range(4):
            m = inside & (k == kk)
            for a, (a1, a2) in enumerate(self.indices):
                out = out + np.where(m, self.coeffs[kk, a] * tx**a1 * ty**a2, 0.0)
        return out / self.square.side

    def monomial_integral(self, beta):
        """Exact integral against x^beta in absolute coordinates."""
        b1, b2 = beta
        l = self.square.side
        x0, y0 = self.square.corner
        total = 0.0
        for k in range(4):
            hx, hy = _child_halves(k)
            for a, (a1, a2) in enumerate(self.indices):
                c = self.coeffs[k, a]
                if c == 0:
                    continue
                ix = _abs_half_integral(hx, a1, b1, x0, l)
                iy = _abs_half_integral(hy, a2, b2, y0, l)
                total += c * ix * iy
        return total / l

    def inner(self, other):
        if other.square != self.square:
            raise AlpertError("exact inner products need a common square")
        total = 0.0
        for k in range(4):
            hx, hy = _child_halves(k)
            for a, (a1, a2) in enumerate(self.indices):
                for b, (b1, b2) in enumerate(other.indices):
                    total += (self.coeffs[k, a] * other.coeffs[k, b]
                              * _half_monomial_integral(hx, a1 + b1, 0)
                              * _half_monomial_integral(hy, a2 + b2, 0))
        return total


def _abs_half_integral(h, j, p, x0, l):
    """Integral over the absolute half interval of t^j x^p (t local to the half)."""
    a = x0 + 0.5 * h * l
    x, w = gauss_legendre(j + p + 2, a, a + 0.5 * l)
    t = 4 * (x - x0) / l - 2 * h - 1
    return float(np.sum(w * t**j * x**p))


# --------------------------------------------------------------- mollifier

def _bump(w):
    w = np.asarray(w, float)
    out = np.zeros_like(w)
    m = np.abs(w) < 1
    out[m] = np.exp(-1.0 / (1.0 - w[m] ** 2))
    return out


@dataclass
class Mollifier:
    """Tensor mollifier phi(x) = p(x1) p(x2) with 1D profile p(z) = c(z/r) bump(z/r).

    ``coeffs`` are the ascending coefficients of c in the variable w = z/r;
    p integrates to 1 and has vanishing moments of orders 1..kappa-1, so phi
    has vanishing moments for every multi-index with 0 < |gamma| < kappa.
    """
    eta: float
    kappa: int
    coeffs: np.ndarray
    radius: float = PROFILE_RADIUS
    condition: float = 1.0
    residual: float = 0.0

    def profile(self, z):
        w = np.asarray(z, float) / self.radius
        return np.polynomial.polynomial.polyval(w, self.coeffs) * _bump(w)

    def __call__(self, x1, x2):
        return self.profile(x1) * self.profile(x2)

    def scaled(self, x1, x2, eps=None):
        """phi_eps(x) = eps^-2 phi(x / eps); eps defaults to eta."""
        e = self.eta if eps is None else eps
        return self(np.asarray(x1) / e, np.asarray(x2) / e) / e**2

    def profile_moments(self, orders, nodes=160):
        z, w = bump_rule(np.array(-1.0), np.array(1.0), nodes)
        c = np.polynomial.polynomial.polyval(z, self.coeffs)
        r = self.radius
        return np.array([r ** (j + 1) * np.sum(w * c * z**j) for j in orders])

    def moments(self, max_degree=None, nodes=160):
        """2D moments {gamma: integral of phi x^gamma} for |gamma| <= max_degree."""
        D = self.kappa - 1 if max_degree is None else max_degree
        m1 = self.profile_moments(range(D + 1), nodes)
        return {(i, d - i): m1[i] * m1[d - i] for d in range(D + 1) for i in range(d + 1)}

    def sample(self, spacing=None, eps=None):
        """phi_eps on a uniform grid over its support square."""
        e = self.eta if eps is None else eps
        R = self.radius * e
        h = spacing if spacing is not None else R / 32
        x, w = uniform_grid(-R, R, h)
        return SampledField2D(x, x, w, w, self.scaled(x[:, None], x[None, :], e))


def build_mollifier(eta, kappa, eta_max=ETA_MAX, nodes=160, cond_max=1e12):
    if not 0 < eta < eta_max:
        raise AlpertError(f"eta={eta} outside (0, {eta_max})")
    if kappa < 1:
        raise AlpertError("kappa must be at least 1")
    r = PROFILE_RADIUS
    z, w = bump_rule(np.array(-1.0), np.array(1.0), nodes)
    mu = np.array([np.sum(w * z**k) for k in range(2 * kappa - 1)])
    H = np.array([[mu[i + j] for i in range(kappa)] for j in range(kappa)])
    cond = float(np.linalg.cond(H))
    if cond > cond_max:
        raise AlpertError(f"mollifier moment system condition {cond:.3g} exceeds {cond_max:.0e}; "
                          "use a smaller kappa or a finer quadrature")
    rhs = np.zeros(kappa)
    rhs[0] = 1.0 / r
    c = np.linalg.solve(H, rhs)
    mol = Mollifier(eta, kappa, c, r, cond)
    # independent check on a finer rule
    fine = mol.moments(nodes=2 * nodes)
    mol.residual = max(abs(v - (1.0 if g == (0, 0) else 0.0)) for g, v in fine.items())
    return mol


# ---------------------------------------------------------- the atom system

class AlpertSystem:
    """Raw and mollified Alpert atoms of order kappa with mollifier width eta.

    Atoms are built once on the unit square and transported to any dyadic
    square Q by x -> (x - corner) / side with the L^2 factor side^-1.  A
    mollified atom is sum_{m,n} C[a, m, n] G_m(x1) G_n(x2), where the 2*kappa
    functions G_m, m = h*kappa + j, are the 1D pieces t^j 1_{half h}
    convolved with the 1D profile at width eta * side.
    """

    def __init__(self, kappa, eta, mollifier=None, inner_nodes=64):
        if kappa < 1:
            raise AlpertError("kappa must be at least 1")
        self.kappa = int(kappa)
        self.eta = float(eta)
        self.mollifier = mollifier if mollifier is not None else build_mollifier(eta, kappa)
        if self.mollifier.kappa < self.kappa:
            raise AlpertError("mollifier has fewer vanishing moments than the atoms")
        self.inner_nodes = inner_nodes
        coeffs, self.indices, self._gram, self._constraints = _unit_basis(self.kappa)
        self.unit_coeffs = coeffs
        self.dim = coeffs.shape[0]
        k = self.kappa
        C = np.zeros((self.dim, 2 * k, 2 * k))
        for kk in range(4):
            hx, hy = _child_halves(kk)
            for a, (a1, a2) in enumerate(self.indices):
                C[:, hx * k + a1, hy * k + a2] = coeffs[:, kk, a]
        self.factor_matrices = C

    @property
    def reach(self):
        """Half-width of the transition zones, in units of the square side."""
        return self.eta * self.mollifier.radius

    # ---- 1D pieces in unit coordinates

    def raw_pieces(self, u):
        u = np.asarray(u, float)
        k = self.kappa
        out = np.zeros(u.shape + (2 * k,))
        for h in (0, 1):
            a = 0.5 * h
            m = (u >= a) & ((u < a + 0.5) if h == 0 else (u <= 1.0))
            t = 4 * u - 2 * h - 1
            for j in range(k):
                out[..., h * k + j] = np.where(m, t**j, 0.0)
        return out

    def smooth_pieces(self, u):
        """G_m(u) on the unit interval's scale (mollifier width eta)."""
        u = np.asarray(u, float)
        k = self.kappa
        eps = self.eta
        rz = self.mollifier.radius
        reach = eps * rz
        out = np.zeros(u.shape + (2 * k,))
        flat_u = u.reshape(-1)
        flat = out.reshape(-1, 2 * k)
        for h in (0, 1):
            a, b = 0.5 * h, 0.5 * h + 0.5
            t = 4 * flat_u - 2 * h - 1
            interior = (flat_u >= a + reach) & (flat_u <= b - reach)
            for j in range(k):
                flat[interior, h * k + j] = t[interior] ** j
            zone = ((np.abs(flat_u - a) < reach) | (np.abs(flat_u - b) < reach))
            if not np.any(zone):
                continue
            uz = flat_u[zone]
            wlo = np.maximum(-1.0, (uz - b) / (eps * rz))
            whi = np.minimum(1.0, (uz - a) / (eps * rz))
            w, wt = bump_rule(wlo, whi, self.inner_nodes)
            prof = np.polynomial.polynomial.polyval(w, self.mollifier.coeffs) * rz * wt
            y = uz[:, None] - eps * rz * w
            ty = 4 * y - 2 * h - 1
            vals = np.empty((len(uz), k))
            p = np.ones_like(ty)
            for j in range(k):
                vals[:, j] = np.sum(prof * p, axis=1)
                p = p * ty
            flat[zone, h * k:(h + 1) * k] = vals
        return out

    def pieces(self, x, level, i, smooth=True):
        """1D pieces for the interval [i 2^-level, (i+1) 2^-level], L^2 scaled by side^-1/2."""
        l = 2.0 ** (-level)
        return self.pieces_at(x, l, i * l, smooth)

    def pieces_at(self, x, side, corner, smooth=True):
        """1D pieces for an arbitrary interval [corner, corner + side]."""
        u = (np.asarray(x, float) - corner) / side
        f = self.smooth_pieces(u) if smooth else self.raw_pieces(u)
        return f / math.sqrt(side)

    def breakpoints(self, level, i, smooth=True):
        """(breaks, zones) for the interval's pieces in absolute coordinates."""
        l = 2.0 ** (-level)
        return self.breakpoints_at(l, i * l, smooth)

    def breakpoints_at(self, side, corner, smooth=True):
        pts = np.array([0.0, 0.5, 1.0])
        if not smooth:
            return corner + side * pts, np.zeros((0, 2))
        r = self.reach
        zones = np.stack([pts - r, pts + r], axis=1)
        br = np.concatenate([pts - r, pts, pts + r])
        return corner + side * br, corner + side * zones

    def support(self, level, i, smooth=True):
        l = 2.0 ** (-level)
        return self.support_at(l, i * l, smooth)

    def support_at(self, side, corner, smooth=True):
        r = self.reach if smooth else 0.0
        return (corner - r * side, corner + side + r * side)

    def raw_gram(self):
        """Exact Gram matrix of the raw atoms on any square (identity up to rounding)."""
        A = self.unit_coeffs.reshape(self.dim, -1)
        return A @ self._gram @ A.T

    def moment_table(self, square, max_degree=None, smooth=True, **quad):
        """Moments of every atom on ``square`` against x^beta, |beta| <= max_degree.

        Returns (betas, table) with table[a, b] the moment of atom a for betas[b].
        """
        D = self.kappa - 1 if max_degree is None else max_degree
        powers = np.arange(D + 1)
        kern = lambda x: x[:, None] ** powers[None, :]
        m1 = self.piece_integrals(square.level, square.ix, kern, smooth=smooth, **quad)
        m2 = self.piece_integrals(square.level, square.iy, kern, smooth=smooth, **quad)
        betas = [(i, d - i) for d in range(D + 1) for i in range(d, -1, -1)]
        tab = np.einsum("pm,amn,qn->apq", m1, self.factor_matrices, m2)
        return betas, np.array([tab[:, b1, b2] for (b1, b2) in betas]).T

    # ---- atoms

    def atom(self, square, a):
        return WaveletAtom(square, a, self)

    def atoms(self, square):
        return [WaveletAtom(square, a, self) for a in range(self.dim)]

    def raw_poly(self, square, a):
        return PiecewisePoly(square, self.kappa, self.unit_coeffs[a])

    def evaluate(self, square, coeffs, x, y, smooth=True):
        """sum_a coeffs[a] atom_a on the tensor grid x by y."""
        Cm = np.tensordot(np.asarray(coeffs), self.factor_matrices, axes=(0, 0))
        F1 = self.pieces(x, square.level, square.ix, smooth)
        F2 = self.pieces(y, square.level, square.iy, smooth)
        return F1 @ Cm @ F2.T

    def quadrature_grid(self, squares, order=8, fine_order=16, fine_panels=8, smooth=True):
        """Tensor composite rule aligned with every breakpoint of the given squares."""
        xs, ys, zx, zy = [], [], [], []
        for Q in squares:
            b, z = self.breakpoints(Q.level, Q.ix, smooth)
            xs.append(b)
            zx.append(z)
            b, z = self.breakpoints(Q.level, Q.iy, smooth)
            ys.append(b)
            zy.append(z)
        x, wx = composite_rule(np.concatenate(xs), order, np.concatenate(zx), fine_order, fine_panels)
        y, wy = composite_rule(np.concatenate(ys), order, np.concatenate(zy), fine_order, fine_panels)
        return x, y, wx, wy

    def piece_integrals(self, level, i, kernel, order=8, fine_order=16, fine_panels=8, smooth=True):
        """integral of kernel(x)[..., None] * G_m(x) dx for the pieces of one interval.

        ``kernel`` maps an array of nodes (n,) to (n,) or (n, F); result is
        (2 kappa,) or (F, 2 kappa).
        """
        b, z = self.breakpoints(level, i, smooth)
        x, w = composite_rule(b, order, z, fine_order, fine_panels)
        G = self.pieces(x, level, i, smooth) * w[:, None]
        K = kernel(x)
        return K.T @ G if K.ndim == 2 else K @ G


@dataclass
class WaveletAtom:
    square: DyadicSquare
    index: int
    system: AlpertSystem = field(repr=False)

    @property
    def kappa(self):
        return self.system.kappa

    @property
    def eta(self):
        return self.system.eta

    @cached_property
    def raw(self):
        return self.system.raw_poly(self.square, self.index)

    @property
    def factor_matrix(self):
        return self.system.factor_matrices[self.index]

    def smooth(self, x, y):
        """Mollified atom on the tensor grid x by y."""
        e = np.zeros(self.system.dim)
        e[self.index] = 1.0
        return self.system.evaluate(self.square, e, np.atleast_1d(x), np.atleast_1d(y))

    def smooth_points(self, x, y):
        """Mollified atom at scattered points."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        Q = self.square
        F1 = self.system.pieces(x, Q.level, Q.ix)
        F2 = self.system.pieces(y, Q.level, Q.iy)
        return np.einsum("pm,mn,pn->p", F1.reshape(-1, F1.shape[-1]), self.factor_matrix,
                         F2.reshape(-1, F2.shape[-1])).reshape(np.broadcast(x, y).shape)

    @property
    def support_box(self):
        s = self.system
        x0, x1 = s.support(self.square.level, self.square.ix)
        y0, y1 = s.support(self.square.level, self.square.iy)
        return (x0, x1, y0, y1)

    def quadrature_field(self, order=8, fine_order=16, fine_panels=8):
        """The mollified atom on its own breakpoint-aligned composite grid."""
        x, y, wx, wy = self.system.quadrature_grid([self.square], order, fine_order, fine_panels)
        return SampledField2D(x, y, wx, wy, self.smooth(x, y))

    def sampled(self, oversampling=16):
        """Uniform samples over (1 + 2 eta) Q with spacing eta * side / oversampling."""
        if oversampling < 4:
            raise AlpertError(f"oversampling {oversampling} resolves eta*side with fewer than 4 samples")
        l = self.square.side
        h = self.eta * l / oversampling
        box = self.square.dilate(1 + 2 * self.eta)
        x, wx = uniform_grid(box[0], box[1], h)
        y, wy = uniform_grid(box[2], box[3], h)
        return SampledField2D(x, y, wx, wy, self.smooth(x, y))


def build_alpert_basis(Q, kappa, eta=0.02, mollifier=None):
    """The d(kappa) atoms on Q; raw parts are exact piecewise polynomials."""
    return AlpertSystem(kappa, eta, mollifier).atoms(Q)


def smooth_atom(atom, mollifier):
    """Re-home ``atom`` on a system that uses ``mollifier``."""
    if mollifier.kappa < atom.kappa:
        raise AlpertError("mollifier has fewer vanishing moments than the atom")
    system = AlpertSystem(atom.kappa, mollifier.eta, mollifier)
    return WaveletAtom(atom.square, atom.index, system)


def moment(f, beta, **quad):
    """Signed moment of f against x^beta.

    Exact for PiecewisePoly, weighted sum for SampledField2D, and composite
    Gauss-Legendre on the atom's own grid for a WaveletAtom (smooth part).
    """
    if isinstance(f, PiecewisePoly):
        return f.monomial_integral(beta)
    if isinstance(f, SampledField2D):
        return f.moment(beta)
    if isinstance(f, WaveletAtom):
        s = f.system
        Q = f.square
        b1, b2 = beta
        m1 = s.piece_integrals(Q.level, Q.ix, lambda x: x**b1, **quad)
        m2 = s.piece_integrals(Q.level, Q.iy, lambda x: x**b2, **quad)
        return float(m1 @ f.factor_matrix @ m2)
    raise TypeError(f"cannot take moments of {type(f).__name__}")


def exact_smooth_moment(atom, beta):
    """Moment of the mollified atom via the convolution identity
    int (h * phi_e) x^beta = sum binom(beta, g) e^|g| mom(phi, g) mom(h, beta - g);
    independent of any quadrature of the smoothed pieces."""
    Q = atom.square
    e = atom.eta * Q.side
    mom_phi = atom.system.mollifier.moments(max_degree=sum(beta) + 1)
    total = 0.0
    for g1 in range(beta[0] + 1):
        for g2 in range(beta[1] + 1):
            mp = mom_phi.get((g1, g2))
            if mp is None:
                continue
            total += (math.comb(beta[0], g1) * math.comb(beta[1], g2) * e ** (g1 + g2) * mp
                      * atom.raw.monomial_integral((beta[0] - g1, beta[1] - g2)))
    return total
