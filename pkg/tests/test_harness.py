import math
from dataclasses import replace

import numpy as np
import pytest

from alpertlab import harness
from alpertlab.cli import main
from alpertlab.dyadic import separated_slice
from alpertlab.extension import UNIT_PLACEMENT
from alpertlab.harness import (ConfigError, ExperimentConfig, condition_A_lhs,
                               father_coefficients, fit_growth, load_config, parse_config,
                               physical_modulation, random_triple, run_suite, scale_admissible,
                               table_text, triple_level, validate)


def test_parse_config_values_and_comments():
    cfg = parse_config("""
        # a comment
        nu = 1/8          # fraction
        scales = 1, 2
        q = 4.5
        seed = 9
    """)
    assert cfg.nu == 0.125
    assert cfg.scales == (1, 2)
    assert cfg.q == 4.5 and cfg.seed == 9
    assert cfg.kappa == ExperimentConfig().kappa


def test_parse_config_rejects_unknown_key():
    with pytest.raises(ConfigError):
        parse_config("colour = blue")


def test_parse_config_rejects_bad_value():
    with pytest.raises(ConfigError):
        parse_config("kappa = three")
    with pytest.raises(ConfigError):
        parse_config("just words")


def test_load_config_overrides(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("seed = 3\nq = 5\n")
    cfg = load_config(p, seed=11)
    assert cfg.seed == 11 and cfg.q == 5.0
    assert load_config(None, seed=None) == ExperimentConfig()


def test_digest_stable_and_ignores_out_dir():
    a = ExperimentConfig()
    assert a.digest == ExperimentConfig().digest
    assert a.digest == replace(a, out_dir="elsewhere").digest
    assert a.digest != replace(a, seed=1).digest
    assert parse_config(a.canonical()) == a


def test_validate_extension_needs_q_above_three():
    cfg = replace(ExperimentConfig(), q=3.0)
    validate(cfg)
    with pytest.raises(ConfigError):
        validate(cfg, extension=True)


@pytest.mark.parametrize("change", [dict(eta=0.5), dict(kappa=0), dict(delta=1.0),
                                    dict(scales=()), dict(scales=(1, 1)), dict(mc_samples=10),
                                    dict(nu=0.0), dict(spacing=2.0)])
def test_validate_rejects(change):
    with pytest.raises(ConfigError):
        validate(replace(ExperimentConfig(), **change))


def test_scale_admissible():
    assert not scale_admissible(2, 0.125)
    assert scale_admissible(3, 0.125)


def test_decay_suite_rejects_empty_window():
    with pytest.raises(ConfigError):
        harness.run_decay_suite(replace(ExperimentConfig(), level_min=2, level_max=1))


def test_unknown_suite():
    with pytest.raises(ConfigError):
        run_suite("nope", ExperimentConfig())


def test_table_text_formats():
    text = table_text(("a", "b", "c"), [(1, 0.1, True)])
    assert text == "a,b,c\n1,0.1,1\n"


def test_fit_growth_exact_line():
    eps, c, res = fit_growth([1, 2, 3], [2.0 ** (0.5 * x + 1) for x in (1, 2, 3)])
    assert eps == pytest.approx(0.5) and c == pytest.approx(1.0) and res < 1e-12
    assert math.isnan(fit_growth([1], [1.0])[0])


def test_random_triple_is_disjoint():
    from alpertlab.dyadic import nu_disjoint_triple
    level = triple_level(0.125)
    tri = random_triple(level, 0.125, np.random.default_rng(0))
    assert nu_disjoint_triple(*tri, 0.125)


def test_father_coefficients_of_constant():
    # f = 1 on U: the coefficient is the product of the 1D factor integrals over [0, 1]
    from scipy.integrate import quad
    from alpertlab.modulation import father_factors
    Is = separated_slice(1).squares[:2]
    got = father_coefficients(np.ones((4, 4)), Is)
    for I in Is:
        fx, fy = father_factors(I)
        want = 1.0
        for f in (fx, fy):
            want *= quad(lambda t: float(f.values(np.array([t]))[0, 0]), 0, 1,
                         limit=200, points=[0.25, 0.5, 0.75])[0]
        assert got[I] == pytest.approx(want, rel=1e-8)


def _condition_a_inputs(s, zero=False):
    rng = np.random.default_rng(1)
    tri = random_triple(triple_level(0.125), 0.125, rng)
    pls = [UNIT_PLACEMENT.sub(U) for U in tri]
    Is = separated_slice(s).squares
    coefs, mods = [], []
    for pl in pls:
        vals = np.zeros((4, 4)) if zero else rng.uniform(-1, 1, (4, 4))
        coefs.append(father_coefficients(vals, Is))
        mods.append(physical_modulation(Is, s, pl, rng, 2.0))
    return coefs, mods, pls


def test_condition_a_zero_input():
    coefs, mods, pls = _condition_a_inputs(1, zero=True)
    lhs, _ = condition_A_lhs(coefs, mods, pls, 4.0, 1, 0.5, 0.5)
    assert lhs == 0.0


def test_condition_a_homogeneity():
    coefs, mods, pls = _condition_a_inputs(1)
    lhs, _ = condition_A_lhs(coefs, mods, pls, 4.0, 1, 0.5, 0.5)
    scaled = [coefs[0], {I: -3 * c for I, c in coefs[1].items()}, coefs[2]]
    lhs3, _ = condition_A_lhs(scaled, mods, pls, 4.0, 1, 0.5, 0.5)
    assert lhs > 0
    assert lhs3 == pytest.approx(3 * lhs, rel=1e-10)


SMALL = dict(basis_kappas=(1, 2), frame_levels=2, frame_trials=2,
             kakeya_deltas=(0.25, 0.125))


def _csvs(path):
    return {p.name: p.read_bytes() for p in sorted(path.glob("*.csv"))}


@pytest.mark.parametrize("suite", ["basis", "frame-verify", "kakeya"])
def test_suites_are_deterministic(suite, tmp_path):
    cfg = replace(ExperimentConfig(), **SMALL)
    a = run_suite(suite, cfg, tmp_path / "a", figures=False)
    run_suite(suite, cfg, tmp_path / "b", figures=False)
    assert a.passed
    first, second = _csvs(tmp_path / "a"), _csvs(tmp_path / "b")
    assert first and first == second
    assert (tmp_path / "a" / "report.txt").read_text().count(cfg.digest) == 1


def test_figures_written(tmp_path):
    run_suite("basis", replace(ExperimentConfig(), basis_kappas=(1,)), tmp_path)
    assert (tmp_path / "moments.png").stat().st_size > 0


def test_condition_a_single_scale(tmp_path):
    cfg = replace(ExperimentConfig(), scales=(1,))
    run = run_suite("condition-a", cfg, tmp_path, figures=False)
    assert run.passed
    rows = run.rows("condition_a")
    assert len(rows) == 1 and rows[0][2] > 0
    assert not any(g.name == "fitted exponent finite" for g in run.gates)


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("basis_kappas = 1, 2\nframe_levels = 2\nframe_trials = 2\n")
    assert main(["basis", "--config", str(cfg), "--out-dir", str(tmp_path / "o"),
                 "--no-figures"]) == 0
    out = capsys.readouterr().out
    assert "PASS smooth moments kappa=2" in out
    assert (tmp_path / "o" / "moments.csv").exists()
    assert main(["frame-verify", "--config", str(cfg), "--seed", "4",
                 "--out-dir", str(tmp_path / "f"), "--no-figures"]) == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text("eta = 0.9\n")
    assert main(["basis", "--config", str(bad), "--out-dir", str(tmp_path / "x")]) == 2
    assert main(["basis", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_failing_gate_exit_one(tmp_path, monkeypatch):
    def failing(cfg):
        """Always fails."""
        run = harness.SuiteRun("basis", cfg)
        run.gate("always", False, "forced")
        return run
    monkeypatch.setitem(harness.SUITES, "basis", failing)
    assert main(["basis", "--out-dir", str(tmp_path), "--no-figures"]) == 1


def test_decay_suite_rejects_short_window():
    with pytest.raises(ConfigError):
        harness.run_decay_suite(replace(ExperimentConfig(), level_min=0, level_max=1))
