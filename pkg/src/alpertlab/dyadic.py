"""Dyadic squares over the unit base square, tree distance, halos and slices.

All geometry is expressed in unit coordinates: the base square U is [0, 1]^2
and a square at level s has side 2**-s.  Levels below zero describe the short
chain of squares strictly larger than U that contain it.
"""

from dataclasses import dataclass, field
from itertools import combinations
import math

import numpy as np


class DyadicError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class DyadicSquare:
    level: int
    ix: int
    iy: int

    @property
    def side(self):
        return 2.0 ** (-self.level)

    @property
    def corner(self):
        return (self.ix * self.side, self.iy * self.side)

    @property
    def center(self):
        h = self.side
        return ((self.ix + 0.5) * h, (self.iy + 0.5) * h)

    @property
    def bounds(self):
        """(x0, x1, y0, y1)."""
        h = self.side
        return (self.ix * h, (self.ix + 1) * h, self.iy * h, (self.iy + 1) * h)

    @property
    def parent(self):
        return DyadicSquare(self.level - 1, self.ix >> 1, self.iy >> 1)

    def children(self, max_level=None):
        """The four squares of the next level, ordered LL, LR, UL, UR."""
        if max_level is not None and self.level >= max_level:
            raise DyadicError(f"cannot refine {self.address}: depth limit {max_level} reached")
        s, x, y = self.level + 1, 2 * self.ix, 2 * self.iy
        return [DyadicSquare(s, x, y), DyadicSquare(s, x + 1, y),
                DyadicSquare(s, x, y + 1), DyadicSquare(s, x + 1, y + 1)]

    def ancestor(self, level):
        if level > self.level:
            raise DyadicError("ancestor level must not exceed the square's level")
        k = self.level - level
        return DyadicSquare(level, self.ix >> k, self.iy >> k)

    def contains(self, other):
        return other.level >= self.level and other.ancestor(self.level) == self

    def dilate(self, factor):
        """Concentric box with side scaled by ``factor``, as (x0, x1, y0, y1)."""
        cx, cy = self.center
        h = 0.5 * factor * self.side
        return (cx - h, cx + h, cy - h, cy + h)

    @property
    def address(self):
        return f"{self.level}:{self.ix}:{self.iy}"

    @classmethod
    def parse(cls, text):
        s, x, y = (int(t) for t in text.split(":"))
        return cls(s, x, y)

    def __str__(self):
        return self.address


ROOT = DyadicSquare(0, 0, 0)


def squares_at_level(s, base=ROOT):
    """All level-s squares inside ``base`` in row-major (iy, ix) order."""
    if s < base.level:
        raise DyadicError("level above the base square")
    k = s - base.level
    n = 1 << k
    x0, y0 = base.ix << k, base.iy << k
    return [DyadicSquare(s, x0 + i, y0 + j) for j in range(n) for i in range(n)]


def window_squares(level_min, level_max, base=ROOT):
    out = []
    for s in range(level_min, level_max + 1):
        out.extend(squares_at_level(s, base))
    return out


def nearest_common_ancestor(I, J):
    s = min(I.level, J.level)
    a, b = I.ancestor(s), J.ancestor(s)
    while a != b:
        a, b = a.parent, b.parent
    return a


def dtree(I, J, top=0):
    """Length of the tree path joining I and J.

    The tree is rooted at the level-``top`` square containing U; squares
    whose ancestors at that level differ belong to different trees.
    """
    if I.level < top or J.level < top or I.ancestor(top) != J.ancestor(top):
        raise DyadicError(f"{I} and {J} are not in the same tree rooted at level {top}")
    A = nearest_common_ancestor(I, J)
    return (I.level - A.level) + (J.level - A.level)


@dataclass(frozen=True)
class GridSlice:
    level: int
    squares: tuple
    separation: float = None

    def __post_init__(self):
        if any(Q.level != self.level for Q in self.squares):
            raise DyadicError("slice squares must share the slice level")

    def __iter__(self):
        return iter(self.squares)

    def __len__(self):
        return len(self.squares)

    def __contains__(self, Q):
        return Q in self.squares


def dtree_to_slice(J, slice_, top=0):
    if len(slice_) == 0:
        raise DyadicError("empty slice")
    return min(dtree(J, I, top) for I in slice_)


def grid_slice(s, base=ROOT):
    return GridSlice(s, tuple(squares_at_level(s, base)))


def separated_slice(s, parity=(0, 0), base=ROOT):
    """Squares of level s whose (ix, iy) parities equal ``parity``.

    Distinct members are at least 2**-s apart; the four parity classes
    partition the full level.
    """
    if s < 1:
        raise DyadicError("separated slices need s >= 1")
    px, py = parity
    sq = tuple(Q for Q in squares_at_level(s, base) if Q.ix % 2 == px and Q.iy % 2 == py)
    return GridSlice(s, sq, separation=2.0 ** (-s))


def box_distance(a, b):
    """Euclidean distance between closed boxes (x0, x1, y0, y1)."""
    dx = max(0.0, a[0] - b[1], b[0] - a[1])
    dy = max(0.0, a[2] - b[3], b[2] - a[3])
    return math.hypot(dx, dy)


def square_distance(I, J):
    return box_distance(I.bounds, J.bounds)


def min_pairwise_gap(squares):
    return min((square_distance(a, b) for a, b in combinations(squares, 2)), default=math.inf)


def nu_disjoint_triple(U1, U2, U3, nu):
    """Comparable sides (nu <= side <= 2 nu) and pairwise separation >= nu."""
    if not 0 < nu < 1:
        raise DyadicError("nu must lie in (0, 1)")
    sq = (U1, U2, U3)
    if not all(nu <= Q.side <= 2 * nu for Q in sq):
        return False
    return all(square_distance(a, b) >= nu for a, b in combinations(sq, 2))


# ---------------------------------------------------------------- halos

@dataclass(frozen=True)
class Halo:
    """Union of the four frames (1+eta)K minus the open box (1-eta)K over children K."""
    square: DyadicSquare
    eta: float
    frames: tuple = field(init=False)

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise DyadicError("halo width must lie in (0, 1)")
        fr = tuple((K.dilate(1 + self.eta), K.dilate(1 - self.eta)) for K in self.square.children())
        object.__setattr__(self, "frames", fr)

    def contains(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        for (o, i) in self.frames:
            in_outer = (x >= o[0]) & (x <= o[1]) & (y >= o[2]) & (y <= o[3])
            in_inner = (x > i[0]) & (x < i[1]) & (y > i[2]) & (y < i[3])
            inside |= in_outer & ~in_inner
        return inside

    @property
    def area(self):
        """Exact area (frames of distinct children overlap near shared edges)."""
        # inclusion-exclusion is messy; integrate the indicator on a grid
        # aligned with every frame edge, where it is piecewise constant
        xs = sorted({v for (o, i) in self.frames for v in (o[0], o[1], i[0], i[1])})
        ys = sorted({v for (o, i) in self.frames for v in (o[2], o[3], i[2], i[3])})
        xs, ys = np.array(xs), np.array(ys)
        mx, my = 0.5 * (xs[1:] + xs[:-1]), 0.5 * (ys[1:] + ys[:-1])
        cell = np.outer(np.diff(xs), np.diff(ys))
        X, Y = np.meshgrid(mx, my, indexing="ij")
        return float(np.sum(cell[self.contains(X, Y)]))


def halo(J, eta):
    return Halo(J, eta)


def _box_minus_open_box(b, hole):
    """Closed pieces covering b minus the open box ``hole``; [] if b lies inside it."""
    pieces = []
    if b[0] <= hole[0]:
        pieces.append((b[0], min(b[1], hole[0]), b[2], b[3]))
    if b[1] >= hole[1]:
        pieces.append((max(b[0], hole[1]), b[1], b[2], b[3]))
    if b[2] <= hole[2]:
        pieces.append((b[0], b[1], b[2], min(b[3], hole[2])))
    if b[3] >= hole[3]:
        pieces.append((b[0], b[1], max(b[2], hole[3]), b[3]))
    return pieces


def _frames_meet(f1, f2):
    (o1, i1), (o2, i2) = f1, f2
    b = (max(o1[0], o2[0]), min(o1[1], o2[1]), max(o1[2], o2[2]), min(o1[3], o2[3]))
    if b[0] > b[1] or b[2] > b[3]:
        return False
    for p in _box_minus_open_box(b, i1):
        inside_hole2 = p[0] > i2[0] and p[1] < i2[1] and p[2] > i2[2] and p[3] < i2[3]
        if not inside_hole2:
            return True
    return False


def halos_intersect(I, J, eta):
    if I == J:
        return True
    # frames live inside the dilated squares; cheap rejection first
    if box_distance(I.dilate(1 + eta), J.dilate(1 + eta)) > 0:
        return False
    hI, hJ = Halo(I, eta), Halo(J, eta)
    return any(_frames_meet(a, b) for a in hI.frames for b in hJ.frames)


# ------------------------------------------------------- omega counting

def omega_count(J, L, depth, eta, top=0):
    """Number of squares K down to level ``depth`` with dtree(J, K) = L whose halo meets J's."""
    count = 0
    for K in window_squares(top, depth, ROOT.ancestor(top) if top < 0 else ROOT):
        if dtree(J, K, top) == L and halos_intersect(J, K, eta):
            count += 1
    return count


def fit_omega_constant(counts):
    """Largest shift c with count <= max(4**(L - c), L) for every (L, count) pair.

    Returns ``inf`` when the linear branch alone covers all counts.
    """
    cs = [L - 0.5 * math.log2(n) for L, n in counts if n > max(L, 0)]
    return min(cs) if cs else math.inf
