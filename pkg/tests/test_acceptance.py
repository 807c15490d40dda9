"""Acceptance suite: one test per criterion, each logging a PASS/FAIL line.

Tolerances are the contract values; the thresholds are fixed before any
sampling.  Seeds are fixed so every run of the suite sees the same draws.
"""

from fractions import Fraction

import numpy as np

from uipt import boundary_chain as B
from uipt import combinatorics as C
from uipt import experiments as E
from uipt import percolation as Q
from uipt import triangulation as T
from uipt.peeling import grow_uipt, sample_free
from uipt.rng import RandomSource

CFG = E.DEFAULT_CONFIG
WIN = CFG["windows"]


def in_window(x, key):
    lo, hi = WIN[key]
    return x is not None and lo <= x <= hi


# 1 ------------------------------------------------------------------------

def test_criterion_1_exact_laws(acceptance_log):
    bad = []
    for m in range(0, 201):
        if m >= 1 and C.step_law(m).mass() != 1:
            bad.append(("step_law", m))
        if C.marked_step_law(m).mass() != 1:
            bad.append(("marked_step_law", m))
        if C.free_peel_law(m).mass() != 1:
            bad.append(("free_peel_law", m))
    for m in range(1, 101):
        law = C.step_law(m)
        drift = law.p_up - sum(k * p for k, p in enumerate(law.p_down, 1))
        if drift != C.expected_step(m):
            bad.append(("drift", m))
    for n in range(1, 101):
        if C.hitting_prob(n, 0) != Fraction(1, 2 * n + 1):
            bad.append(("hitting", n))
    for m in range(0, 31):
        if C.phi(0, m) != C.catalan(m):
            bad.append(("catalan", m))
        if C.Ztilde(m) != C.Z(m) * Fraction((m + 1) * (2 * m + 1), 3):
            bad.append(("ztilde", m))
    ok = acceptance_log(1, not bad, f"exact identities, failures={bad[:5]}")
    assert ok


# 2 ------------------------------------------------------------------------

def test_criterion_2_samplers_vs_laws(acceptance_log):
    notes, ok = [], True
    for j, m in enumerate((1, 5, 50)):
        rep = E.step_law_gof(m, 10 ** 6, RandomSource(2001, j))
        ok &= rep.passed
        notes.append(f"step m={m} chi2={rep.statistic:.1f}/{rep.threshold:.1f}")
    # two independent routes to the free size law at m=3
    rep = E.free_size_gof(3, 10 ** 5, RandomSource(2002))
    ok &= rep.passed
    notes.append(f"free size (size-only) chi2={rep.statistic:.1f}/{rep.threshold:.1f}")
    gen = RandomSource(2003).generator()
    sizes = np.array([sample_free(3, gen).n_vertices - 5 for _ in range(10 ** 5)])
    rep = E.free_size_gof(3, 0, None, sizes=sizes)
    ok &= rep.passed
    notes.append(f"free size (full mesh) chi2={rep.statistic:.1f}/{rep.threshold:.1f}")
    # runs climbing above the cap are counted as misses; the bias this causes
    # is at most hitting_prob(cap + 1, 2)
    n, cap = 10 ** 5, 1000
    freq, cens = B.hit_frequency(5, 2, n, RandomSource(2004), stop_above=cap)
    p = float(C.hitting_prob(5, 2))
    se = np.sqrt(p * (1 - p) / n)
    bias = float(C.hitting_prob(cap + 1, 2))
    hit_ok = abs(freq - p) <= 3 * se
    ok &= hit_ok
    notes.append(f"hit 5->2 freq={freq:.5f} exact={p:.5f} 3SE={3 * se:.5f} censor_bias<={bias:.5f}")
    assert acceptance_log(2, ok, "; ".join(notes))


# 3 ------------------------------------------------------------------------

def test_criterion_3_stable_limit(acceptance_log):
    rep = E.stable_limit_gof(200, 10 ** 4, RandomSource(3001))
    cens = rep.params.get("censored", 0)
    assert acceptance_log(3, rep.passed and rep.statistic <= 0.1,
                          f"KS(m=200, 1e4)={rep.statistic:.4f} <= 0.1, censored draws={cens}")


def test_stable_limit_control_on_same_draws():
    x, c = E.marked_scaled_sizes(100, 2000, RandomSource(3002))
    right = E.stable_limit_gof(100, 2000, None, scaled=x, censored=c)
    wrong = E.stable_limit_gof(100, 2000, None, exponent=1.0, scaled=x, censored=c)
    assert right.passed and not wrong.passed


# 4 ------------------------------------------------------------------------

def test_criterion_4_growth_exponents(acceptance_log):
    fits, _ = E.growth_fits(128, 100, seed=4001, r_range=(16, 128), quantities=["T", "M", "hull_vol"])
    # same lower cutoff r >= 16 as the skeleton fits; below it the ball is far from scaling
    full, _ = E.growth_fits(32, 60, seed=4002, mode="full", r_range=(16, 32), quantities=["ball_vol"])
    checks = {"T": fits["T"], "M": fits["M"], "hull_vol": fits["hull_vol"], "ball_vol": full["ball_vol"]}
    ok = all(in_window(f.slope, k) for k, f in checks.items())
    detail = ", ".join(f"{k}={f.slope:.3f}+-{f.stderr:.3f} in {WIN[k]}" for k, f in checks.items())
    assert acceptance_log(4, ok, detail)


# 5 ------------------------------------------------------------------------

def test_criterion_5_chain_scaling(acceptance_log):
    fit = E.chain_growth_fit(10 ** 6, 50, seed=5001)
    tails, monotone = E.chain_heavy_tails(10 ** 6, 50, seed=5002)
    ok = in_window(fit.slope, "chain") and monotone
    ok &= in_window(tails[2]["slope"], "v2") and in_window(tails[3]["slope"], "v3")
    detail = (f"M_n slope={fit.slope:.3f} in {WIN['chain']}, V_T(2)={tails[2]['slope']:.3f} in "
              f"{WIN['v2']}, V_T(3)={tails[3]['slope']:.3f} in {WIN['v3']}, monotone={monotone}")
    assert acceptance_log(5, ok, detail)


# 6 ------------------------------------------------------------------------

def test_criterion_6_percolation(acceptance_log):
    H, n = 10 ** 5, 1000
    notes, ok = [], True
    lo = Q.estimate_survival(0.40, H, n, seed=6001)
    hi = Q.estimate_survival(0.60, H, n, seed=6002)
    ok &= lo["fraction"] <= 0.01 and hi["fraction"] >= 0.2
    notes.append(f"S(0.40)={lo['fraction']:.3f} S(0.60)={hi['fraction']:.3f}")
    # independent batches at increasing horizons
    fr = [Q.estimate_survival(0.5, h, n, seed=6003 + j) for j, h in enumerate((10 ** 3, 10 ** 4, H))]
    dec = fr[0]["fraction"] >= fr[1]["fraction"] >= fr[2]["fraction"] and fr[2]["ci"][1] < fr[0]["ci"][0]
    ok &= dec
    notes.append("S(0.5; 1e3,1e4,1e5)=" + ",".join(f"{r['fraction']:.3f}" for r in fr))
    sw = Q.sweep(np.round(np.arange(0.40, 0.601, 0.02), 2), H, n, seed=6010)
    x = sw["crossing"]
    ok &= sw["monotone"] and x is not None and 0.45 <= x <= 0.55
    notes.append(f"crossing={x} monotone={sw['monotone']}")
    for j, p in enumerate((0.3, 0.5, 0.7)):
        cmp = Q.compare_engines(p, 10 ** 4, n, seed=6020 + j, alpha=CFG["alpha"])
        ok &= cmp["pass"]
        notes.append(f"engines p={p}: fisher={cmp['fisher_p']:.3g} ks={cmp['ks_p']:.3g}")
    probe = Q.subcritical_logbound_probe(0.4, [10 ** 3, 10 ** 4, 10 ** 5], n, seed=6030)
    meds = [v["median_max_b"] for v in probe["by_horizon"].values()]
    growth = meds[-1] / meds[0]
    ok &= growth <= 3
    notes.append(f"median max_B={meds} growth={growth:.2f}")
    assert acceptance_log(6, ok, "; ".join(notes))


# 7 ------------------------------------------------------------------------

def test_criterion_7_structure(acceptance_log, peel_driver, monkeypatch):
    monkeypatch.setattr(T, "DEBUG", 1)       # Euler relation after every mutation
    invalid = []
    for seed in range(100):
        mesh = T.init_root()
        peel_driver(mesh, 10 ** 4, RandomSource(7001, seed).generator())
        if T.validate(mesh) is not None:
            invalid.append(seed)
    monkeypatch.setattr(T, "DEBUG", 0)
    layer_bad, ball_bad = 0, 0
    for i in range(100):
        tr = grow_uipt(16, RandomSource(7002, i), mode="full", snapshot_layers=16)
        d = T.bfs_distances(tr.mesh, 0)
        layer_bad += sum(int(np.any(d[f] != r)) for r, f in enumerate(tr.frontiers, 1))
        ball_bad += int(np.any(tr.ball_vol > tr.hull_vol))
    ok = not invalid and layer_bad == 0 and ball_bad == 0
    assert acceptance_log(7, ok, f"invalid meshes={invalid}, layer mismatches={layer_bad}, "
                                 f"ball>hull={ball_bad}")


# 8 ------------------------------------------------------------------------

RUNS = [
    ["laws", "--step-law", "5"],
    ["chain", "--m0", "3", "--horizon", "5000", "--replicas", "4", "--targets", "1,2", "--seed", "2"],
    ["grow", "--r-max", "8", "--mode", "full", "--replicas", "10", "--seed", "7"],
    ["grow", "--r-max", "16", "--replicas", "5", "--seed", "7", "--trace-steps", "-1"],
    ["perc", "--p", "0.5", "--horizon", "1000", "--replicas", "100", "--seed", "1"],
    ["perc", "--p-list", "0.45,0.55", "--horizon", "2000", "--replicas", "50", "--engine", "full"],
    ["gof", "--test", "free-size", "--m", "3", "--draws", "20000", "--seed", "3"],
    ["report", "--r-max", "8", "--horizon", "10000", "--draws", "10000", "--m-list", "2",
     "--stable-m", "4", "--replicas", "3"],
]


def test_criterion_8_determinism(acceptance_log, tmp_path):
    from uipt import cli

    differ = []
    for j, argv in enumerate(RUNS):
        outs = []
        for rep in ("a", "b"):
            d = tmp_path / f"{j}{rep}"
            assert cli.main(argv + ["--out-dir", str(d)]) == 0
            files = sorted(p.name for p in d.iterdir())
            outs.append({f: (d / f).read_bytes() for f in files if f != "run.cfg"})
            cfg = (d / "run.cfg").read_text().replace(str(d), "")
            outs[-1]["run.cfg"] = cfg.encode()
        if outs[0] != outs[1]:
            differ.append(argv[0])
    assert acceptance_log(8, not differ, f"{len(RUNS)} CLI runs repeated, differing={differ}")
