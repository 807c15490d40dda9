import numpy as np
import pytest

from uipt import percolation as Q
from uipt import triangulation as T
from uipt.rng import RandomSource


def test_clamp():
    assert Q.clamp(-2, 5) == (0, 3)
    assert Q.clamp(3, -1) == (2, 0)
    assert Q.clamp(2, 2) == (2, 2)


def test_extreme_probabilities():
    for i in range(50):
        assert not Q.run_reduced(1.0, 2000, RandomSource(1, i)).died
    dead = [Q.run_reduced(0.0, 2000, RandomSource(2, i)).died for i in range(50)]
    assert all(dead)


def test_reduced_trace():
    o = Q.run_reduced(0.45, 5000, RandomSource(3), keep_trace=True)
    assert o.max_b >= o.trace_b.max()
    if o.died:
        assert len(o.trace_b) == o.death_step and o.trace_b[-1] == 0
        assert np.all(o.trace_b[:-1] > 0)
    assert o.verdict in ("died", "survived")


def test_reduced_errors():
    with pytest.raises(ValueError):
        Q.run_reduced(1.5, 10, 0)
    with pytest.raises(ValueError):
        Q.run_reduced(0.5, -1, 0)
    with pytest.raises(ValueError):
        Q.run_full(-0.1, 10, 0)


def test_full_engine_keeps_two_arcs():
    for i in range(20):
        o = Q.run_full(0.5, 800, RandomSource(4, i), check_arcs=True, keep_mesh=True, keep_trace=True)
        assert T.validate(o.mesh) is None
        if o.died:
            assert o.trace_b[-1] == 0


def test_full_engine_without_filling():
    for i in range(10):
        o = Q.run_full(0.6, 500, RandomSource(5, i), fill_holes=False, check_arcs=True, keep_mesh=True)
        assert T.validate(o.mesh) is None


def test_run_many_deterministic():
    a = Q.run_many(0.5, 300, 20, seed=6)
    b = Q.run_many(0.5, 300, 20, seed=6)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_wilson_interval():
    lo, hi = Q.wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    assert Q.wilson_interval(0, 10)[0] == 0.0
    assert Q.wilson_interval(10, 10)[1] == 1.0
    assert Q.wilson_interval(0, 0) == (0.0, 1.0)


def test_survival_at():
    death = np.array([-1, 5, 20, -1])
    assert Q.survival_at(death, 10) == 0.75
    assert Q.survival_at(death, 30) == 0.5


def test_crossing():
    assert Q.crossing([0.4, 0.5, 0.6], [0.0, 0.2, 0.6], 0.1) == pytest.approx(0.45)
    assert Q.crossing([0.4, 0.5], [0.0, 0.05], 0.1) is None
    assert Q.crossing([0.5, 0.4], [0.3, 0.5], 0.1) == 0.4


def test_sweep_small():
    res = Q.sweep([0.3, 0.7], 2000, 100, seed=7)
    assert res["monotone"]
    f = [r["fraction"] for r in res["rows"]]
    assert f[0] <= f[1]
    for r in res["rows"]:
        assert r["ci"][0] <= r["fraction"] <= r["ci"][1]


def test_compare_engines_small():
    res = Q.compare_engines(0.5, 300, 150, seed=8)
    assert res["pass"], res


def test_logbound_probe():
    res = Q.subcritical_logbound_probe(0.4, [100, 1000], 50, seed=9)
    assert set(res["by_horizon"]) == {100, 1000}
    assert res["ratio_drift"] >= 1
    with pytest.raises(ValueError):
        Q.subcritical_logbound_probe(0.5, [100], 5, seed=1)


def test_crossing_insensitive_to_root_colouring():
    ps = np.round(np.arange(0.40, 0.601, 0.04), 2)
    a = Q.sweep(ps, 10 ** 4, 400, seed=41)
    b = Q.sweep(ps, 10 ** 4, 400, seed=43, all_black=True)
    assert a["crossing"] is not None and b["crossing"] is not None
    assert abs(a["crossing"] - b["crossing"]) < 0.05
    # with p = 0 every new vertex is white, so B after one step reveals the start
    assert Q.run_reduced(0.0, 1, 1, keep_trace=True, all_black=True).trace_b[0] >= 2
    assert Q.run_reduced(0.0, 1, 1, keep_trace=True).trace_b[0] <= 1
