import json

import numpy as np
import pytest

from uipt import _kernels as K
from uipt import experiments as E
from uipt.rng import RandomSource


def power_table(exponent, replicas=5, r_max=64, noise=0.0, seed=0):
    gen = np.random.default_rng(seed)
    r = np.arange(1, r_max + 1, dtype=float)
    vals = 2.5 * r ** exponent * np.exp(noise * gen.standard_normal((replicas, r_max)))
    return {"hull_vol": vals}


def test_fit_exact_power_law():
    fit = E.fit_exponent(power_table(4.0), "hull_vol", (8, 64))
    assert fit.slope == pytest.approx(4.0)
    assert fit.intercept == pytest.approx(np.log(2.5))
    assert fit.r_range == (8, 64) and fit.checkpoints[0] == 8 and fit.checkpoints[-1] == 64
    assert fit.replicas == 5 and fit.stderr == pytest.approx(0, abs=1e-9)


def test_fit_noisy_has_spread():
    fit = E.fit_exponent(power_table(3.0, replicas=40, noise=0.1), "hull_vol", (4, 64))
    assert abs(fit.slope - 3.0) < 4 * fit.stderr + 1e-3
    assert fit.spread > 0 and fit.within(2.6, 3.4)


def test_rescaling_r_keeps_slope():
    r = np.array([4.0, 8, 16, 32, 64])
    y = 7 * r ** 2.2 * (1 + 0.05 * np.sin(r))
    s1, c1 = E.loglog_fit(r, y)
    s2, c2 = E.loglog_fit(r / 4, y)
    assert s1 == pytest.approx(s2)
    assert c2 - c1 == pytest.approx(s1 * np.log(4))


def test_fit_drops_zero_points():
    tab = power_table(2.0, replicas=3)
    tab["hull_vol"][0, 15] = 0
    fit = E.fit_exponent(tab, "hull_vol", (8, 64), checkpoints=[8, 16, 32, 48, 64])
    assert fit.slope == pytest.approx(2.0) and fit.replicas == 3


def test_fit_insufficient_data():
    tab = power_table(2.0)
    with pytest.raises(E.InsufficientData):
        E.fit_exponent(tab, "hull_vol", (8, 64), checkpoints=[8, 16, 32])
    with pytest.raises(E.InsufficientData):
        E.fit_exponent(tab, "hull_vol", (8, 65))
    with pytest.raises(E.InsufficientData):
        E.fit_exponent(tab, "T", (8, 64))
    with pytest.raises(E.InsufficientData):
        E.fit_exponent({"hull_vol": np.zeros((2, 64))}, "hull_vol", (8, 64))


def test_growth_fits_table():
    fits, table = E.growth_fits(16, 4, seed=1, mode="full")
    assert set(fits) == {"T", "M", "hull_vol", "ball_vol"}
    assert table["T"].shape == (4, 16)
    assert np.all(table["ball_vol"] <= table["hull_vol"])


def test_step_gof_and_negative_control():
    assert E.step_law_gof(5, 100_000, RandomSource(1)).passed
    assert E.step_law_gof(60, 100_000, RandomSource(2)).passed
    bad = E.step_law_gof(5, 100_000, RandomSource(3), sampler=K.sample_steps_shifted)
    assert not bad.passed
    with pytest.raises(ValueError):
        E.step_law_gof(5, 100, RandomSource(1))


def test_step_gof_rejects_out_of_support():
    rep = E.step_law_gof(3, 10_000, 0, sampler=lambda g, m, n: np.full(n, -4))
    assert not rep.passed and rep.params["outside_support"] == 10_000


def test_bin_steps_cells():
    x = np.array([1, -1, -2, -19, -20, -25])
    counts = E.bin_steps(x, 30, 20)
    assert counts.sum() == 6 and counts[0] == 1 and counts[20] == 2 and counts[-1] == 0
    assert len(E.step_cells(30, 20)) == 21 and sum(E.step_cells(30, 20)) == 1
    assert len(E.step_cells(4, 20)) == 5 and sum(E.step_cells(4, 20)) == 1


def test_free_size_gof():
    assert E.free_size_gof(3, 50_000, RandomSource(4)).passed
    from uipt.peeling import sample_free_sizes
    shifted = sample_free_sizes(3, 50_000, RandomSource(5)) + 1
    assert not E.free_size_gof(3, 0, None, sizes=shifted).passed


def test_stable_gof_on_exact_draws():
    gen = np.random.default_rng(6)
    exact = 2.0 / (3.0 * gen.standard_normal(5000) ** 2)
    good = E.stable_limit_gof(200, 5000, None, scaled=exact)
    assert good.passed and good.statistic < 0.03 and good.test == "KS"
    bad = E.stable_limit_gof(200, 5000, None, scaled=exact, exponent=1.0)
    assert not bad.passed
    with pytest.raises(ValueError):
        E.stable_limit_gof(200, 10, None)


def test_stable_cdf_family():
    cdf = E.stable_cdf_family(0.5)
    from uipt.combinatorics import stable_half_cdf
    for t in (0.1, 1.0, 9.0):
        assert cdf(t) == pytest.approx(stable_half_cdf(t))
    assert cdf(0.0) == 0.0


def test_two_sample_ks():
    gen = np.random.default_rng(7)
    assert E.two_sample_ks(gen.random(500), gen.random(500)).passed
    assert not E.two_sample_ks(gen.random(500), gen.random(500) + 0.5).passed


def test_heavy_tail_probe():
    h = E.heavy_tail_probe(np.ones(2 ** 14, np.int64), 3)
    assert h.slope == pytest.approx(1.0) and h.monotone
    assert h.checkpoints[0] >= 128 and h.checkpoints[-1] == 2 ** 14
    with pytest.raises(ValueError):
        E.heavy_tail_probe(np.ones(100), 2)

    class Trace:
        X = np.full(20_000, -2)
    assert E.heavy_tail_probe(Trace(), 2).values[-1] == 4 * 20_000


def test_emit_report_empty(tmp_path):
    path = E.emit_report({}, tmp_path)
    doc = json.loads(open(path).read())
    assert doc["schema_version"] == E.SCHEMA_VERSION and doc["count"] == 0
    assert (tmp_path / "report.csv").read_text().splitlines() == ["name,kind,value,threshold,passed"]


def test_emit_report_deterministic(tmp_path):
    def bundle(d):
        res = {"step": E.step_law_gof(2, 20_000, RandomSource(8)),
               "fit": E.fit_exponent(power_table(2.0, noise=0.1), "hull_vol", (4, 64)),
               "tail": E.heavy_tail_probe(np.ones(20_000), 2)}
        E.emit_report(res, d, E.DEFAULT_CONFIG, {"seed": 8})
        return (d / "report.json").read_bytes(), (d / "report.csv").read_bytes()

    a = bundle(tmp_path / "a")
    b = bundle(tmp_path / "b")
    assert a == b
    doc = json.loads(a[0])
    assert doc["results"]["fit"]["kind"] == "FitResult"
    assert doc["config"]["alpha"] == 0.001


def test_emit_report_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        E.emit_report({}, blocker / "sub")


def test_censored_ks_bounds_true_distance():
    gen = np.random.default_rng(9)
    exact = 2.0 / (3.0 * gen.standard_normal(3000) ** 2)
    cdf = E.stable_cdf_family(0.5)
    true = E.ks_distance(exact, cdf)
    assert true == pytest.approx(E.ks_against(exact, cdf, 0.1).statistic)
    cens = exact > np.quantile(exact, 0.99)
    lower = np.where(cens, exact / 10, exact)
    rep = E.ks_censored(lower, cens, cdf, 0.1)
    assert rep.params["censored"] == cens.sum()
    assert rep.statistic >= true
    assert rep.statistic <= true + cens.mean() + 1e-12
    plain = E.ks_censored(exact, np.zeros(3000, bool), cdf, 0.1)
    assert plain.statistic == pytest.approx(true)


def test_marked_scaled_sizes_censoring():
    x, c = E.marked_scaled_sizes(30, 200, RandomSource(10), step_cap=50)
    assert c.any() and np.all(x > 0)
    y, d = E.marked_scaled_sizes(30, 200, RandomSource(10))
    assert not d.any()
    # draws share one stream, so they coincide up to the first censored one,
    # whose partial size cannot exceed the completed size
    i0 = int(np.argmax(c))
    assert np.array_equal(x[:i0], y[:i0]) and x[i0] <= y[i0]
