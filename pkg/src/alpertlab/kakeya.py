"""Tube families in R^3 and rasterized overlap norms.

A tube is a solid cylinder of length 1 and diameter delta around a unit
direction close to e3.  Overlap functions sum_T 1_T are accumulated on a
cell grid of spacing delta/4 by sweeping each tube layer by layer in z;
the norms are plain Riemann sums over cell centres.
"""

from dataclasses import dataclass, field
import math

import numpy as np


class KakeyaError(ValueError):
    pass


CUBE = 2.0
MAX_CELLS = 60_000_000
MAX_TILT = math.pi / 4


@dataclass(frozen=True)
class Tube:
    direction: tuple
    center: tuple
    width: float
    length: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if n == 0:
            raise KakeyaError("zero direction")
        d = d / n
        if d[2] < 0:
            d = -d
        if math.acos(min(1.0, d[2])) > MAX_TILT + 1e-12:
            raise KakeyaError(f"direction {d} is more than 45 degrees from e3")
        if not 0 < self.width <= self.length:
            raise KakeyaError("width must lie in (0, length]")
        object.__setattr__(self, "direction", tuple(float(v) for v in d))
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @property
    def volume(self):
        return math.pi * self.width ** 2 / 4 * self.length

    @property
    def aspect(self):
        return self.length / self.width

    def contains(self, pts):
        p = np.asarray(pts, dtype=float) - np.asarray(self.center)
        d = np.asarray(self.direction)
        a = p @ d
        r2 = np.sum(p * p, axis=-1) - a * a
        return (np.abs(a) <= self.length / 2) & (r2 <= self.width ** 2 / 4)

    def extent(self):
        """Axis-aligned bounding box (lo, hi) arrays."""
        d = np.asarray(self.direction)
        c = np.asarray(self.center)
        half = 0.5 * self.length * np.abs(d) + 0.5 * self.width * np.sqrt(np.maximum(0, 1 - d * d))
        return c - half, c + half


def angle(u, v):
    return math.acos(max(-1.0, min(1.0, float(np.dot(u, v)))))


def min_direction_angle(dirs):
    D = np.asarray(dirs, dtype=float)
    if len(D) < 2:
        return math.inf
    G = np.clip(D @ D.T, -1.0, 1.0)
    np.fill_diagonal(G, -1.0)
    return float(np.arccos(G.max()))


@dataclass
class TubeFamily:
    tubes: list
    delta: float
    kind: str = "custom"
    min_angle: float = field(init=False)

    def __post_init__(self):
        for T in self.tubes:
            if abs(T.width - self.delta) > 1e-12:
                raise KakeyaError("all tubes must have width delta")
            lo, hi = T.extent()
            if np.any(lo < -CUBE) or np.any(hi > CUBE):
                raise KakeyaError(f"tube at {T.center} leaves [-2, 2]^3")
        self.min_angle = min_direction_angle([T.direction for T in self.tubes])
        if self.min_angle < self.delta * (1 - 1e-9):
            raise KakeyaError(f"directions are not delta-separated: min angle "
                              f"{self.min_angle:.4g} < {self.delta}")

    def __len__(self):
        return len(self.tubes)

    @property
    def separated(self):
        return self.min_angle >= self.delta * (1 - 1e-9)

    def rows(self):
        return [T.direction + T.center + (T.width,) for T in self.tubes]


# ----------------------------------------------------------- directions

def _rotation_to(axis):
    """Rotation matrix taking e3 to the unit vector ``axis``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    e3 = np.array([0.0, 0.0, 1.0])
    v = np.cross(e3, a)
    c = float(e3 @ a)
    if np.linalg.norm(v) < 1e-15:
        return np.eye(3)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1 + c)


def lattice_directions(delta, cap_radius=MAX_TILT, axis=(0.0, 0.0, 1.0)):
    """Directions from a square lattice in the gnomonic chart of a cap.

    The step starts at delta and grows by 2% until every pairwise angle is at
    least delta (the chart shrinks lengths away from its centre).
    """
    rho = math.tan(cap_radius)
    step = delta
    while True:
        n = int(math.floor(rho / step + 1e-12))
        k = np.arange(-n, n + 1) * step
        a, b = np.meshgrid(k, k, indexing="ij")
        keep = a ** 2 + b ** 2 <= rho * rho * (1 + 1e-12)
        v = np.column_stack([a[keep], b[keep], np.ones(keep.sum())])
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        if min_direction_angle(v) >= delta:
            return v @ _rotation_to(axis).T
        step *= 1.02


def random_directions(delta, rng, cap_radius=MAX_TILT, axis=(0.0, 0.0, 1.0), patience=500):
    """Greedy dart throwing of delta-separated directions, uniform on the cap."""
    cos_min = math.cos(delta)
    c0 = math.cos(cap_radius)
    out = []
    fails = 0
    while fails < patience:
        z = c0 + (1 - c0) * rng.random()
        phi = 2 * math.pi * rng.random()
        r = math.sqrt(max(0.0, 1 - z * z))
        d = np.array([r * math.cos(phi), r * math.sin(phi), z])
        if out and np.max(np.asarray(out) @ d) > cos_min:
            fails += 1
            continue
        out.append(d)
        fails = 0
    return np.asarray(out) @ _rotation_to(axis).T


# -------------------------------------------------------------- families

def generate_family(kind, delta, seed=0, cap_radius=MAX_TILT, axis=(0.0, 0.0, 1.0), retries=5):
    """bush: all tubes through the origin; grid-directions: lattice directions with
    centres spread over the plane z = 0; random: dart-thrown directions with
    random centres in [-1/2, 1/2]^3.
    """
    if not 0 < delta <= 0.5:
        raise KakeyaError("delta must lie in (0, 1/2]")
    last = None
    for attempt in range(retries):
        rng = np.random.default_rng([seed, attempt])
        if kind == "random":
            dirs = random_directions(delta, rng, cap_radius, axis)
            centers = rng.uniform(-0.5, 0.5, size=(len(dirs), 3))
        else:
            dirs = lattice_directions(delta, cap_radius, axis)
            if kind == "bush":
                centers = np.zeros((len(dirs), 3))
            elif kind == "grid-directions":
                R = _rotation_to(axis)
                local = dirs @ R
                centers = np.column_stack([local[:, 0] / local[:, 2], local[:, 1] / local[:, 2],
                                           np.zeros(len(dirs))]) * 0.5
                centers = centers @ R.T
            else:
                raise KakeyaError(f"unknown family kind {kind!r}")
        try:
            return TubeFamily([Tube(tuple(d), tuple(c), delta) for d, c in zip(dirs, centers)],
                              delta, kind)
        except KakeyaError as exc:
            last = exc
            if kind != "random":
                break
    raise KakeyaError(f"could not generate a separated {kind} family: {last}")


def cap_axes(nu, tilt=0.6):
    """Three cap centres at mutual angle well above nu (tilted from e3, 120 degrees apart)."""
    axes = []
    for k in range(3):
        phi = 2 * math.pi * k / 3
        axes.append((math.sin(tilt) * math.cos(phi), math.sin(tilt) * math.sin(phi), math.cos(tilt)))
    return axes


def nu_disjoint_families(delta, nu, kind="bush", seed=0, tilt=0.6):
    """Three families whose directions lie in caps at mutual angular gap >= nu."""
    axes = cap_axes(nu, tilt)
    centre_gap = angle(axes[0], axes[1])
    cap = min(MAX_TILT - tilt, (centre_gap - nu) / 2)
    if cap <= delta:
        raise KakeyaError(f"nu = {nu} leaves caps narrower than delta")
    fams = [generate_family(kind, delta, seed + k, cap, axis) for k, axis in enumerate(axes)]
    return fams, cap


def family_gap(f1, f2):
    """Smallest angle between a direction of f1 and a direction of f2."""
    A = np.array([T.direction for T in f1.tubes])
    B = np.array([T.direction for T in f2.tubes])
    if len(A) == 0 or len(B) == 0:
        return math.inf
    return float(np.arccos(np.clip(A @ B.T, -1, 1).max()))


# ---------------------------------------------------------- rasterizing

@dataclass
class Raster:
    origin: np.ndarray   # centre of cell (0, 0, 0)
    spacing: float
    counts: np.ndarray

    @property
    def cell_volume(self):
        return self.spacing ** 3

    def norm(self, p):
        if p <= 0:
            raise KakeyaError("p must be positive")
        c = self.counts[self.counts > 0].astype(float)
        return float(self.cell_volume * np.sum(c ** p)) ** (1.0 / p)


def _raster_box(families, h):
    los, his = [], []
    for fam in families:
        for T in fam.tubes:
            lo, hi = T.extent()
            los.append(lo)
            his.append(hi)
    if not los:
        return None
    lo = np.floor(np.min(los, axis=0) / h) - 1
    hi = np.ceil(np.max(his, axis=0) / h) + 1
    return lo.astype(int), hi.astype(int)


def rasterize(family, spacing, box=None, max_cells=MAX_CELLS):
    """Counts of tubes covering each cell centre h (k + 1/2) of the lattice."""
    h = float(spacing)
    if box is None:
        box = _raster_box([family], h)
    if box is None:
        return Raster(np.zeros(3), h, np.zeros((0, 0, 0), np.uint16))
    lo, hi = box
    shape = hi - lo
    if int(np.prod(shape)) > max_cells:
        raise KakeyaError(f"raster of {int(np.prod(shape))} cells exceeds the cap {max_cells}")
    counts = np.zeros(tuple(shape), dtype=np.uint16)
    origin = (lo + 0.5) * h
    for T in family.tubes:
        _add_tube(counts, origin, h, T)
    return Raster(origin, h, counts)


def _add_tube(counts, origin, h, T):
    d = np.asarray(T.direction)
    c = np.asarray(T.center)
    r = T.width / 2
    tlo, thi = T.extent()
    k0 = max(0, int(math.floor((tlo[2] - origin[2]) / h)))
    k1 = min(counts.shape[2] - 1, int(math.ceil((thi[2] - origin[2]) / h)))
    if k1 < k0:
        return
    ks = np.arange(k0, k1 + 1)
    z = origin[2] + ks * h
    # axis point in each layer
    s = (z - c[2]) / d[2]
    ax = c[0] + s * d[0]
    ay = c[1] + s * d[1]
    half = r / d[2] + h
    w = int(math.ceil(2 * half / h)) + 2
    i0 = np.floor((ax - half - origin[0]) / h).astype(int)
    j0 = np.floor((ay - half - origin[1]) / h).astype(int)
    off = np.arange(w)
    I = i0[:, None, None] + off[None, :, None]
    J = j0[:, None, None] + off[None, None, :]
    I, J, K = np.broadcast_arrays(I, J, ks[:, None, None])
    px = origin[0] + I * h - c[0]
    py = origin[1] + J * h - c[1]
    pz = origin[2] + K * h - c[2]
    a = px * d[0] + py * d[1] + pz * d[2]
    r2 = px * px + py * py + pz * pz - a * a
    m = (np.abs(a) <= T.length / 2) & (r2 <= r * r)
    m &= (I >= 0) & (I < counts.shape[0]) & (J >= 0) & (J < counts.shape[1])
    counts[I[m], J[m], K[m]] += 1


def overlap_norm(family, p, spacing=None, max_cells=MAX_CELLS):
    """Discrete L^p norm of sum_T 1_T on a lattice of spacing delta/4 (default)."""
    if p <= 0:
        raise KakeyaError("p must be positive")
    if len(family) == 0:
        return 0.0
    h = family.delta / 4 if spacing is None else spacing
    return rasterize(family, h, max_cells=max_cells).norm(p)


def trilinear_overlap_norm(f1, f2, f3, spacing=None, max_cells=MAX_CELLS):
    """Discrete L^{1/2} quasi-norm of prod_k sum_{T in f_k} 1_T on a shared raster."""
    fams = (f1, f2, f3)
    if any(len(f) == 0 for f in fams):
        return 0.0
    h = min(f.delta for f in fams) / 4 if spacing is None else spacing
    box = _raster_box(fams, h)
    lo, hi = box
    if int(np.prod(hi - lo)) > max_cells:
        raise KakeyaError(f"raster of {int(np.prod(hi - lo))} cells exceeds the cap {max_cells}")
    prod = None
    for fam in fams:
        c = rasterize(fam, h, box, max_cells).counts.astype(np.float64)
        prod = c if prod is None else prod * c
    return float(h ** 3 * np.sum(np.sqrt(prod))) ** 2


def fit_exponent(deltas, norms):
    """Least-squares eps with norm ~ C delta^-eps; returns (eps, log2 C) or None."""
    pts = [(math.log2(1 / d), math.log2(n)) for d, n in zip(deltas, norms) if n > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    eps, c = np.polyfit(x, y, 1)
    return float(eps), float(c)
