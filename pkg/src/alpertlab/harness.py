"""Experiment runner: configuration, suites, CSV tables, figures and reports.

Every suite takes an :class:`ExperimentConfig`, returns a :class:`SuiteRun`
holding its tables, invariant gates and notes, and is written to disk by
:func:`write_run`.  Growth exponents are always fitted outputs.
"""

import csv
import hashlib
import io
import math
import time
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .alpert import ETA_MAX, AlpertSystem
from .dyadic import (DyadicSquare, nu_disjoint_triple, separated_slice, squares_at_level)
from .extension import (UNIT_PLACEMENT, FatherPieceExtension, FrequencyGrid, ball_radius,
                        khintchine_trilinear)
from .frame import (FrameContext, FrameError, gram_decay_scan, reproduction_residual,
                    well_localized_scan)
from .kakeya import (MAX_TILT, KakeyaError, Tube, TubeFamily, _raster_box, fit_exponent,
                     generate_family, lattice_directions, nu_disjoint_families, rasterize,
                     trilinear_overlap_norm)
from .modulation import (ModulationSequence, build_kakeya_polynomial, father_factors,
                         mod_factorization_check, plateau_interior, scales_decay_scan,
                         translation_commutation_check)
from .quadrature import gauss_legendre


class ConfigError(ValueError):
    """A configuration value violates an invariant of the requested suite."""


@dataclass(frozen=True)
class ExperimentConfig:
    scales: tuple = (1, 2, 3)
    q: float = 4.0
    delta: float = 0.5
    kappa: int = 3
    eta: float = 0.02
    nu: float = 0.125
    N: int = 2
    seed: int = 0
    spacing: float = 0.5
    outer_squares: int = 4
    u_octaves: float = 2.0
    mc_samples: int = 200
    level_min: int = 0
    level_max: int = 3
    frame_levels: int = 3
    frame_trials: int = 10
    neumann_tol: float = 1e-8
    basis_kappas: tuple = (1, 2, 3, 4)
    scan_scales: tuple = (2,)
    factorization_pairs: int = 20
    kakeya_deltas: tuple = (0.25, 0.125, 0.0625)
    kakeya_p: float = 1.5
    out_dir: str = "results"

    def canonical(self):
        """key=value lines in field order, without the output directory."""
        lines = []
        for f in fields(self):
            if f.name == "out_dir":
                continue
            lines.append(f"{f.name}={_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @property
    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _format_value(v):
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_number(text, kind):
    text = text.strip()
    if kind is int:
        return int(text)
    return float(Fraction(text)) if "/" in text else float(text)


def _coerce(name, raw, default):
    try:
        if isinstance(default, tuple):
            kind = int if name in ("scales", "basis_kappas", "scan_scales") else float
            return tuple(_parse_number(t, kind) for t in raw.split(",") if t.strip())
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw.strip())
        if isinstance(default, float):
            return _parse_number(raw, float)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config(text, base=None):
    """Read ``key = value`` lines ('#' starts a comment) on top of ``base``."""
    base = base or ExperimentConfig()
    known = {f.name: getattr(base, f.name) for f in fields(base)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (t.strip() for t in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _coerce(key, raw, known[key])
    return replace(base, **updates)


def load_config(path=None, **overrides):
    cfg = parse_config(Path(path).read_text()) if path else ExperimentConfig()
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


def validate(cfg, extension=False):
    """Raise ConfigError on any invariant violation; ``extension`` adds q > 3."""
    if cfg.kappa < 1:
        raise ConfigError("kappa must be at least 1")
    if not 0 < cfg.eta < ETA_MAX:
        raise ConfigError(f"eta must lie in (0, {ETA_MAX})")
    if not 0 < cfg.delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    if not 0 < cfg.nu < 1:
        raise ConfigError("nu must lie in (0, 1)")
    if not 0 < cfg.spacing <= 1:
        raise ConfigError("spacing must lie in (0, 1]")
    if not cfg.scales or any(s < 1 for s in cfg.scales) or len(set(cfg.scales)) != len(cfg.scales):
        raise ConfigError("scales must be distinct positive integers")
    if cfg.N < 0:
        raise ConfigError("N must be non-negative")
    if cfg.outer_squares < 1:
        raise ConfigError("outer_squares must be positive")
    if cfg.mc_samples < 50:
        raise ConfigError("mc_samples must be at least 50")
    if cfg.u_octaves < 0:
        raise ConfigError("u_octaves must be non-negative")
    if extension and not cfg.q > 3:
        raise ConfigError(f"extension experiments need q > 3, got {cfg.q}")


def scale_admissible(s, nu):
    """True when 2^-s <= nu; rows failing this are flagged, not dropped."""
    return 2.0 ** (-s) <= nu


# ------------------------------------------------------------------ results

@dataclass
class Gate:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class SuiteRun:
    suite: str
    config: ExperimentConfig
    tables: dict = field(default_factory=dict)     # name -> (header, rows)
    gates: list = field(default_factory=list)
    notes: list = field(default_factory=list)      # (key, value)
    figures: list = field(default_factory=list)    # (file name, draw(fig))
    seconds: float = 0.0

    def table(self, name, header, rows):
        self.tables[name] = (tuple(header), [tuple(r) for r in rows])

    def rows(self, name):
        return self.tables[name][1]

    def column(self, name, key):
        header, rows = self.tables[name]
        i = header.index(key)
        return [r[i] for r in rows]

    def gate(self, name, passed, detail=""):
        self.gates.append(Gate(name, bool(passed), detail))

    def note(self, key, value):
        self.notes.append((key, value))

    def figure(self, name, draw):
        self.figures.append((name, draw))

    @property
    def passed(self):
        return all(g.passed for g in self.gates)


def _cell(v):
    if isinstance(v, DyadicSquare):
        return v.address
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def table_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def report_text(run):
    cfg = run.config
    lines = [f"suite: {run.suite}", f"config_hash: {cfg.digest}", f"seed: {cfg.seed}",
             f"status: {'PASS' if run.passed else 'FAIL'}", f"seconds: {run.seconds:.1f}", "",
             "[gates]"]
    lines += [f"{'PASS' if g.passed else 'FAIL'} {g.name}: {g.detail}" for g in run.gates]
    lines += ["", "[notes]"] + [f"{k} = {_cell(v)}" for k, v in run.notes]
    lines += ["", "[tables]"] + [f"{name}.csv ({len(rows)} rows)"
                                 for name, (_, rows) in run.tables.items()]
    lines += ["", "[config]", cfg.canonical()]
    return "\n".join(lines)


def write_run(run, out_dir, figures=True):
    """Write CSV tables, report.txt and (optionally) PNG figures; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, (header, rows) in run.tables.items():
        p = out / f"{name}.csv"
        p.write_text(table_text(header, rows))
        paths.append(p)
    p = out / "report.txt"
    p.write_text(report_text(run))
    paths.append(p)
    if figures and run.figures:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        for name, draw in run.figures:
            fig = plt.figure(figsize=(5.5, 4))
            draw(fig)
            fig.tight_layout()
            p = out / f"{name}.png"
            fig.savefig(p, dpi=100)
            plt.close(fig)
            paths.append(p)
    return paths


def fit_growth(xs, values):
    """Fit log2 value = eps * x + c; returns (eps, c, rms residual) or NaNs."""
    pts = [(x, math.log2(v)) for x, v in zip(xs, values) if v > 0 and math.isfinite(v)]
    if len(pts) < 2:
        return float("nan"), float("nan"), float("nan")
    x, y = np.array(pts, dtype=float).T
    eps, c = np.polyfit(x, y, 1)
    res = y - (eps * x + c)
    return float(eps), float(c), float(np.sqrt(np.mean(res ** 2)))


def _line_plot(xs, ys, xlabel, ylabel, label=None, log=True):
    def draw(fig):
        ax = fig.add_subplot(111)
        for x, y, lab in zip(xs, ys, label or [None] * len(xs)):
            ax.plot(x, y, "o-", label=lab)
        if log:
            ax.set_yscale("log", base=2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if label:
            ax.legend()
    return draw


# ------------------------------------------------------------------ basis

def run_basis(cfg):
    """Orthonormality and vanishing moments of raw and smooth atoms; atom dump."""
    validate(cfg)
    run = SuiteRun("basis", cfg)
    rows = []
    worst = {}
    for k in cfg.basis_kappas:
        sysk = AlpertSystem(k, cfg.eta)
        gram_err = float(np.max(np.abs(sysk.raw_gram() - np.eye(sysk.dim))))
        betas, raw = sysk.moment_table(DyadicSquare(0, 0, 0), smooth=False)
        _, smooth = sysk.moment_table(DyadicSquare(0, 0, 0), smooth=True)
        for a in range(sysk.dim):
            for b, (b1, b2) in enumerate(betas):
                rows.append((k, a, b1, b2, abs(raw[a, b]), abs(smooth[a, b])))
        worst[k] = (gram_err, float(np.max(np.abs(raw))), float(np.max(np.abs(smooth))))
        run.gate(f"raw orthonormality kappa={k}", gram_err < 1e-12, f"{gram_err:.2e}")
        run.gate(f"raw moments kappa={k}", worst[k][1] < 1e-12, f"{worst[k][1]:.2e}")
        run.gate(f"smooth moments kappa={k}", worst[k][2] < 1e-8, f"{worst[k][2]:.2e}")
    run.table("moments", ("kappa", "atom", "beta1", "beta2", "raw_abs", "smooth_abs"), rows)

    sysk = AlpertSystem(cfg.kappa, cfg.eta)
    dump = []
    for a in range(sysk.dim):
        for child in range(4):
            for m, (a1, a2) in enumerate(sysk.indices):
                dump.append((DyadicSquare(0, 0, 0), a, child, f"{a1}:{a2}",
                             float(sysk.unit_coeffs[a, child, m])))
    run.table("atoms", ("square", "atom", "child", "alpha", "coefficient"), dump)
    ks = sorted(worst)
    run.figure("moments", _line_plot([ks, ks], [[worst[k][1] + 1e-300 for k in ks],
                                                [worst[k][2] + 1e-300 for k in ks]],
                                     "kappa", "max |moment|", ["raw", "smooth"]))
    return run


# ------------------------------------------------------------ frame-verify

def run_frame_verify(cfg):
    """Reproduction of random frame-supported functions on a small window."""
    validate(cfg)
    if cfg.frame_levels < 1:
        raise ConfigError("frame_levels must be positive")
    run = SuiteRun("frame-verify", cfg)
    ctx = FrameContext(AlpertSystem(cfg.kappa, cfg.eta), 0, cfg.frame_levels - 1,
                       neumann_tol=cfg.neumann_tol)
    rho = ctx.contraction_estimate()
    run.note("contraction", rho)
    run.note("atoms", ctx.size)
    run.gate("contraction |I - T| < 1", rho < 1, f"{rho:.4f}")
    if rho >= 1:
        return run
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for trial in range(cfg.frame_trials):
        res, info = reproduction_residual(ctx, ctx.random_coefficients(rng), tol=cfg.neumann_tol)
        rows.append((trial, res, info["terms"], info["max_ratio"]))
    run.table("reproduction", ("trial", "residual", "terms", "max_ratio"), rows)
    worst = max(r[1] for r in rows)
    run.gate("reproduction residual < 1e-4", worst < 1e-4, f"max {worst:.2e}")
    ratio = max(r[3] for r in rows)
    run.gate("Neumann terms contract", ratio < 1, f"max ratio {ratio:.3f}")
    run.figure("reproduction", _line_plot([[r[0] for r in rows]], [[r[1] for r in rows]],
                                          "trial", "relative residual"))
    return run


# ------------------------------------------------------------------ decay

def _scan_square(s):
    c = max(0, (1 << (s - 1)) - 1) if s >= 1 else 0
    return DyadicSquare(s, c, c)


def _direction(rng):
    th = 2 * math.pi * rng.random()
    return np.array([math.cos(th), math.sin(th)])


def _scales_section(run, cfg, system, rng, reference=True):
    records, profile, summary = [], [], []
    for s in cfg.scan_scales:
        I = _scan_square(s)
        d = _direction(rng)
        mags = [("window_min", 2.0 ** (2 * s))]
        if reference:
            mags.append(("one_cycle", 2 * math.pi * 2.0 ** (2 * s)))
        for tag, m in mags:
            scan = scales_decay_scan(I, m * d, system)
            conc = scan.concentration(2 * s, cfg.N)
            summary.append((s, tag, m, conc, scan.slope, scan.case2_rate))
            for L in sorted(scan.level_mass):
                profile.append((s, tag, L, scan.level_mass[L]))
            if tag == "window_min":
                records += [(s, L, dd, c) for L, dd, c in scan.records]
                run.gate(f"scale concentration s={s}", conc >= 0.95,
                         f"{conc:.3f} of the mass within {cfg.N} levels of {2 * s} at |u|={m:g}")
                rate = scan.case2_rate
                run.gate(f"fine-level decay s={s}", rate >= system.kappa + 0.5,
                         f"rate {rate:.2f} vs {system.kappa + 0.5}")
    run.table("scales_scan", ("s", "level", "dtree", "abs_coeff"), records)
    run.table("scales_profile", ("s", "magnitude", "level", "mass_fraction"), profile)
    run.table("scales_summary", ("s", "magnitude", "u_abs", "concentration", "distance_slope",
                                 "fine_rate"), summary)

    def draw(fig):
        ax = fig.add_subplot(111)
        for s in cfg.scan_scales:
            for tag in ("window_min", "one_cycle"):
                pts = [(L, m) for ss, t, L, m in profile if ss == s and t == tag]
                if pts:
                    ax.plot(*zip(*pts), "o-", label=f"s={s} {tag}")
        ax.set_xlabel("level")
        ax.set_ylabel("mass fraction")
        ax.legend()
    run.figure("scales_profile", draw)


def _factorization_pairs(system, rng, count, s=2):
    pairs = []
    tries = 0
    while len(pairs) < count:
        tries += 1
        if tries > 100 * count:
            raise FrameError("could not find interior pairs")
        n = 1 << s
        I = DyadicSquare(s, int(rng.integers(0, n)), int(rng.integers(0, n)))
        t = s + int(rng.integers(2, 5))
        m = 1 << (t - s)
        J = DyadicSquare(t, I.ix * m + int(rng.integers(0, m)), I.iy * m + int(rng.integers(0, m)))
        if plateau_interior(I, J, system) and (I, J) not in pairs:
            pairs.append((I, J))
    return pairs


def run_decay_suite(cfg):
    """Gram and inverse-frame decay, scale concentration, factorization, translation."""
    validate(cfg)
    if cfg.level_max < cfg.level_min:
        raise ConfigError(f"empty window [{cfg.level_min}, {cfg.level_max}]")
    run = SuiteRun("decay", cfg)
    system = AlpertSystem(cfg.kappa, cfg.eta)
    ctx = FrameContext(system, cfg.level_min, cfg.level_max, neumann_tol=cfg.neumann_tol)
    k = cfg.kappa
    header = ("dtree", "max_abs", "count_pairs")
    try:
        g = gram_decay_scan(ctx)
        t1 = well_localized_scan(ctx, 1)
        t2 = well_localized_scan(ctx, 2)
    except FrameError as exc:
        raise ConfigError(f"decay scans on window {ctx.window}: {exc}") from exc
    run.table("gram_decay", header, g.rows)
    run.table("inverse_decay", header, t1.rows)
    run.table("inverse_squared_decay", header, t2.rows)
    run.note("gram_slope", g.slope)
    run.note("inverse_slope", t1.slope)
    run.note("inverse_squared_slope", t2.slope)
    run.gate("Gram slope", g.slope <= -k + 0.5, f"{g.slope:.3f} vs {-k + 0.5}")
    run.gate("inverse slope", t1.slope <= -(k - 3) + 0.5, f"{t1.slope:.3f} vs {-(k - 3) + 0.5}")
    run.gate("inverse squared slope", t2.slope <= t1.slope + 0.5,
             f"{t2.slope:.3f} vs {t1.slope + 0.5:.3f}")
    run.figure("decay", _line_plot([[r[0] for r in t.rows] for t in (g, t1, t2)],
                                   [[r[1] for r in t.rows] for t in (g, t1, t2)],
                                   "tree distance", "max |entry|",
                                   ["Gram", "inverse", "inverse squared"]))

    rng = np.random.default_rng(cfg.seed)
    _scales_section(run, cfg, system, rng, reference=False)

    frows = []
    for I, J in _factorization_pairs(system, rng, cfg.factorization_pairs):
        lo, hi = 2.0 ** (2 * I.level), 2.0 ** (2 * I.level + 10)
        u = _direction(rng) * lo * (hi / lo) ** rng.random()
        lhs, rhs, gap = mod_factorization_check(I, J, u, system)
        frows.append((I, J, float(np.hypot(*u)), abs(lhs), gap / abs(lhs) if lhs else 0.0))
    run.table("factorization", ("I", "J", "u_abs", "abs_lhs", "relative_gap"), frows)
    worst = max(r[4] for r in frows) if frows else 0.0
    run.gate("modulation factorization", worst < 1e-6, f"max relative gap {worst:.2e}")

    trows = []
    v = 2
    for z in [(0.0, 0.0), (0.25, 0.0), (0.0, 0.25), (0.25, 0.25)]:
        trows.append((v, z[0], z[1], translation_commutation_check(system, v, z)))
    run.table("translation", ("v", "z1", "z2", "max_deviation"), trows)
    worst = max(r[3] for r in trows)
    run.gate("translation commutation", worst < 1e-10, f"max {worst:.2e}")
    return run


def run_scales_suite(cfg):
    """Coefficient mass profiles of modulated father pieces across levels."""
    validate(cfg)
    run = SuiteRun("scales", cfg)
    system = AlpertSystem(cfg.kappa, cfg.eta)
    _scales_section(run, cfg, system, np.random.default_rng(cfg.seed))
    return run


# ------------------------------------------------------- shared A/B inputs

def random_triple(level, nu, rng, attempts=10000):
    """Three level-``level`` squares forming a nu-disjoint triple."""
    sq = squares_at_level(level)
    for _ in range(attempts):
        tri = [sq[i] for i in rng.choice(len(sq), 3, replace=False)]
        if nu_disjoint_triple(*tri, nu):
            return sorted(tri)
    raise ConfigError(f"no {nu}-disjoint triple at level {level}")


def triple_level(nu):
    """Level whose side lies in [nu, 2 nu]."""
    level = math.floor(math.log2(1.0 / nu))
    if not nu <= 2.0 ** (-level) <= 2 * nu:
        raise ConfigError(f"no dyadic side in [{nu}, {2 * nu}]")
    return level


def physical_modulation(squares, level, placement, rng, octaves):
    """Frequencies with physical magnitude log-uniform in [2^{2s}, 2^{2s+octaves}],
    expressed in the unit coordinates of ``placement``."""
    vec = {}
    for I in squares:
        m = 2.0 ** (2 * level + octaves * rng.random())
        vec[I] = placement.side * m * np.append(_direction(rng), 0.0)
    return ModulationSequence(level, vec, check_window=False)


def _cell_integrals(factor, level, nodes=16, panels=4):
    """Integrals of a 1D father factor over the 2^level cells of [0, 1]."""
    n = 1 << level
    pts = np.union1d(np.linspace(0.0, 1.0, n + 1), np.clip(factor.breaks()[0], 0.0, 1.0))
    out = np.zeros(n)
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        edges = np.linspace(a, b, panels + 1)
        x, w = (np.concatenate(t) for t in zip(*(gauss_legendre(nodes, lo, hi)
                                                for lo, hi in zip(edges[:-1], edges[1:]))))
        out[min(int((a + b) / 2 * n), n - 1)] += w @ factor.values(x)[:, 0]
    return out


def father_coefficients(values, squares):
    """<f, phi_I> for f piecewise constant on the level-L grid given by ``values`` (2^L, 2^L)."""
    L = int(round(math.log2(values.shape[0])))
    out = {}
    for I in squares:
        fx, fy = father_factors(I)
        out[I] = float(_cell_integrals(fx, L) @ values @ _cell_integrals(fy, L))
    return out


def _stream_product(sources, grid, r):
    total = 0.0
    for _, z, mask in grid.slices():
        prod = np.ones(mask.shape)
        for src in sources:
            prod = prod * np.sqrt(src.square_slice(z))
        total += float(np.sum(prod[mask] ** r))
    return (grid.weight * total) ** (1.0 / r)


def condition_A_lhs(coefficients, modulations, placements, q, s, delta, spacing):
    """|| prod_k S_Fourier f_k ||_{L^{q/3}(B(0, 2^{s/(1-delta)}))} and the extension sources."""
    grid = FrequencyGrid(ball_radius(s, delta), spacing)
    srcs = [FatherPieceExtension(c, u, grid, p)
            for c, u, p in zip(coefficients, modulations, placements)]
    return _stream_product(srcs, grid, q / 3.0), srcs


def run_condition_A(cfg):
    """Trilinear Fourier square-function sweep over the scale list."""
    validate(cfg, extension=True)
    run = SuiteRun("condition-a", cfg)
    rng = np.random.default_rng(cfg.seed)
    tri = random_triple(triple_level(cfg.nu), cfg.nu, rng)
    run.note("triple", " ".join(Q.address for Q in tri))
    placements = [UNIT_PLACEMENT.sub(U) for U in tri]
    rows = []
    for s in sorted(cfg.scales):
        coefs, mods, sups = [], [], []
        for pl in placements:
            vals = rng.uniform(-1.0, 1.0, size=(1 << (s + 1), 1 << (s + 1)))
            vals /= np.max(np.abs(vals))
            Is = separated_slice(s).squares
            coefs.append(father_coefficients(vals, Is))
            mods.append(physical_modulation(Is, s, pl, rng, cfg.u_octaves))
            sups.append(float(np.max(np.abs(vals))))
        lhs, srcs = condition_A_lhs(coefs, mods, placements, cfg.q, s, cfg.delta, cfg.spacing)
        prod = float(np.prod(sups))
        skipped = sum(x.skipped for x in srcs)
        evaluated = sum(x.evaluated for x in srcs)
        rows.append((s, scale_admissible(s, cfg.nu), lhs, prod, lhs / prod, len(coefs[0]),
                     evaluated, skipped))
        if s == min(cfg.scales):
            doubled = [{I: 2 * c for I, c in cf.items()} for cf in coefs]
            lhs2, _ = condition_A_lhs(doubled, mods, placements, cfg.q, s, cfg.delta, cfg.spacing)
            err = abs(lhs2 - 8 * lhs) / (8 * lhs) if lhs > 0 else abs(lhs2)
            run.gate("trilinear homogeneity", err < 1e-10, f"relative deviation {err:.1e}")
    run.table("condition_a", ("s", "scale_admissible", "lhs", "sup_product", "ratio",
                              "pieces_per_function", "pieces_evaluated", "pieces_skipped"), rows)
    _fit_rows(run, "condition_a_fit", [r[0] for r in rows], [r[4] for r in rows])
    flagged = [r[0] for r in rows if not r[1]]
    if flagged:
        run.note("flagged_scales", ",".join(map(str, flagged)))
    run.figure("condition_a", _line_plot([[r[0] for r in rows]], [[r[2] for r in rows]],
                                         "s", "LHS"))
    return run


def _fit_rows(run, name, xs, values):
    eps, c, res = fit_growth(xs, values)
    fit = [("all", len(xs), eps, c, res)]
    if len(xs) >= 3:
        e2, c2, r2 = fit_growth(xs[:-1], values[:-1])
        fit.append(("drop_last", len(xs) - 1, e2, c2, r2))
        run.note("eps_stability", abs(eps - e2))
    run.table(name, ("scales", "count", "eps", "log2_constant", "rms_residual"), fit)
    run.note("eps", eps)
    if len(xs) >= 2:
        run.gate("fitted exponent finite", math.isfinite(eps), f"eps = {eps:.4g}")
    return eps


def kakeya_inputs(cfg, s, placements, rng, system):
    """One Kakeya-type polynomial per placement with random outer layer and phases."""
    out = []
    for pl in placements:
        allI = squares_at_level(s)
        n = min(cfg.outer_squares, len(allI))
        Is = [allI[i] for i in sorted(rng.choice(len(allI), n, replace=False))]
        u = physical_modulation(Is, s, pl, rng, cfg.u_octaves)
        b = {I: np.exp(2j * math.pi * rng.random()) for I in Is}
        out.append(build_kakeya_polynomial(b, u, system))
    return out


def run_condition_B(cfg):
    """Random-sign expectation against the square-function form for Kakeya inputs."""
    validate(cfg, extension=True)
    run = SuiteRun("condition-b", cfg)
    rng = np.random.default_rng(cfg.seed)
    system = AlpertSystem(cfg.kappa, cfg.eta)
    tri = random_triple(triple_level(cfg.nu), cfg.nu, rng)
    run.note("triple", " ".join(Q.address for Q in tri))
    placements = [UNIT_PLACEMENT.sub(U) for U in tri]
    rows = []
    for s in sorted(cfg.scales):
        fs = kakeya_inputs(cfg, s, placements, rng, system)
        k = khintchine_trilinear(*fs, cfg.q, cfg.mc_samples, seed=int(rng.integers(2 ** 31)),
                                 s=s, delta=cfg.delta, spacing=cfg.spacing, placements=placements)
        rows.append((2 * s, s, scale_admissible(s, cfg.nu), k.mc_mean, k.mc_stderr,
                     k.square_value, k.ratio, k.plain, k.mc_mean / k.square_value
                     if k.square_value > 0 else float("nan")))
    header = ("t", "s", "scale_admissible", "mc_lhs", "mc_stderr", "square_lhs", "ratio",
              "all_plus_lhs", "b_over_a")
    run.table("condition_b", header, rows)
    for r in rows:
        run.gate(f"Khintchine ratio t={r[0]}", 1 / 3 <= r[6] <= 3, f"{r[6]:.3f}")
        run.gate(f"B <= 3 A at s={r[1]}", r[3] <= 3 * r[5], f"B/A = {r[8]:.3f}")
    _fit_rows(run, "condition_b_fit", [r[0] for r in rows], [r[3] for r in rows])
    run.table("comparison", ("s", "a_form", "b_form", "b_over_a"),
              [(r[1], r[5], r[3], r[8]) for r in rows])
    run.figure("condition_b", _line_plot([[r[0] for r in rows]] * 2,
                                         [[r[3] for r in rows], [r[5] for r in rows]],
                                         "t", "LHS", ["random signs (B)", "square function (A)"]))
    return run


# ----------------------------------------------------------------- Kakeya

def disjoint_tubes(delta, count=4):
    """Tubes with separated directions placed far enough apart to be disjoint."""
    dirs = lattice_directions(delta)
    if len(dirs) < count:
        raise KakeyaError(f"only {len(dirs)} directions at delta = {delta}")
    centres = [(-0.6, -0.6, 0.0), (0.6, -0.6, 0.0), (-0.6, 0.6, 0.0), (0.6, 0.6, 0.0)]
    if count > len(centres):
        raise KakeyaError("at most four disjoint tubes")
    return TubeFamily([Tube(tuple(d), c, delta) for d, c in zip(dirs[:count], centres)],
                      delta, "disjoint")


def additivity_gap(family, p, spacing=None):
    """Relative gap between ||sum 1_T||_p^p and sum ||1_T||_p^p on one shared raster."""
    h = family.delta / 4 if spacing is None else spacing
    box = _raster_box([family], h)
    whole = rasterize(family, h, box).norm(p) ** p
    parts = sum(rasterize(TubeFamily([T], family.delta), h, box).norm(p) ** p
                for T in family.tubes)
    return abs(whole - parts) / parts


def single_tube_error(delta, rng, p=1.5, spacing=None):
    """Relative error of the rastered L^p norm of one randomly placed tube."""
    d = _direction(rng)
    tilt = MAX_TILT * rng.random()
    direction = (math.sin(tilt) * d[0], math.sin(tilt) * d[1], math.cos(tilt))
    centre = tuple(rng.uniform(-0.5, 0.5, 3))
    fam = TubeFamily([Tube(direction, centre, delta)], delta, "single")
    exact = (math.pi * delta ** 2 / 4) ** (1 / p)
    h = delta / 4 if spacing is None else spacing
    return abs(rasterize(fam, h).norm(p) / exact - 1)


def run_kakeya_suite(cfg):
    """Overlap norms of tube families across the delta list and their fitted exponents."""
    validate(cfg)
    if not cfg.kakeya_deltas:
        raise ConfigError("kakeya_deltas is empty")
    run = SuiteRun("kakeya", cfg)
    deltas = sorted(cfg.kakeya_deltas, reverse=True)
    p = cfg.kakeya_p
    rows, fits, fam_rows = [], [], []
    for kind in ("bush", "random"):
        norms = []
        for d in deltas:
            fam = generate_family(kind, d, cfg.seed)
            r = rasterize(fam, d / 4)
            n, n1 = r.norm(p), r.norm(1.0)
            vol = sum(T.volume for T in fam.tubes)
            norms.append(n)
            rows.append((kind, d, len(fam), fam.min_angle / d, n, n1, vol))
            fam_rows += [(kind, d) + row for row in fam.rows()]
        fit = fit_exponent(deltas, norms)
        if fit is not None:
            fits.append((kind, p, fit[0], fit[1]))
    run.table("norms", ("kind", "delta", "tubes", "min_angle_over_delta", "norm_p", "norm_1",
                        "volume_sum"), rows)
    run.table("families", ("kind", "delta", "dir1", "dir2", "dir3", "c1", "c2", "c3", "width"),
              fam_rows)
    run.table("exponents", ("kind", "p", "eps", "log2_constant"), fits)
    if len(deltas) < 2:
        run.note("exponents", "single delta, raw norms only")

    tri_rows = []
    for d in deltas:
        try:
            fams, cap = nu_disjoint_families(d, cfg.nu, "bush", cfg.seed)
        except KakeyaError as exc:
            run.note(f"trilinear_delta_{d}", f"skipped: {exc}")
            continue
        v = trilinear_overlap_norm(*fams)
        w = trilinear_overlap_norm(fams[2], fams[0], fams[1])
        tri_rows.append((d, cap, len(fams[0]), len(fams[1]), len(fams[2]), v, v == w))
    run.table("trilinear", ("delta", "cap_radius", "tubes1", "tubes2", "tubes3", "norm",
                            "permutation_invariant"), tri_rows)
    if tri_rows:
        run.gate("trilinear norm permutation invariant", all(r[6] for r in tri_rows))
        tri_fit = fit_exponent([r[0] for r in tri_rows], [r[5] for r in tri_rows])
        if tri_fit is not None:
            run.note("trilinear_eps", tri_fit[0])

    rng = np.random.default_rng(cfg.seed)
    errs = [single_tube_error(1 / 16, rng) for _ in range(5)]
    run.gate("single tube L^3/2 norm at delta=1/16", max(errs) < 0.05,
             f"max relative error {max(errs):.3f}")
    gap = additivity_gap(disjoint_tubes(1 / 16), p)
    run.gate("disjoint additivity", gap < 1e-12, f"relative gap {gap:.1e}")
    run.figure("kakeya_norms", _line_plot(
        [[r[1] for r in rows if r[0] == k] for k in ("bush", "random")],
        [[r[4] for r in rows if r[0] == k] for k in ("bush", "random")],
        "delta", f"L^{p} norm", ["bush", "random"]))
    return run


SUITES = {
    "basis": run_basis,
    "frame-verify": run_frame_verify,
    "decay": run_decay_suite,
    "scales": run_scales_suite,
    "condition-a": run_condition_A,
    "condition-b": run_condition_B,
    "kakeya": run_kakeya_suite,
}


def run_suite(name, cfg, out_dir=None, figures=True):
    """Run one suite, write its outputs and return the SuiteRun."""
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}")
    t0 = time.perf_counter()
    run = SUITES[name](cfg)
    run.seconds = time.perf_counter() - t0
    write_run(run, out_dir if out_dir is not None else Path(cfg.out_dir) / name, figures)
    return run
