"""Statistics on top of the samplers: exponent fits, goodness-of-fit tests,
heavy-tail probes and the JSON/CSV report bundle.

Only power-law slopes are estimated.  The growth laws carry polylogarithmic
corrections that these fits make no attempt to separate, which is why the
acceptance windows are wide.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats
from scipy.special import erfc

from uipt import _kernels as K
from uipt import combinatorics as C
from uipt.boundary_chain import growth_exponent_probe, pow2_checkpoints, run_chain
from uipt.peeling import grow_uipt, sample_free_marked, sample_free_sizes, sample_marked_sizes
from uipt.rng import RandomSource, as_generator

SCHEMA_VERSION = 1

# thresholds are fixed here (or in a run config) before anything is sampled
DEFAULT_CONFIG = {
    "alpha": 0.001,
    "step_tail": 20,
    "min_expected": 5.0,
    "ks_max": 0.1,
    "ks_trend_slack": 0.02,
    "marked_step_cap": 2 * 10 ** 8,
    "windows": {
        "T": [2.6, 3.4],
        "M": [1.6, 2.4],
        "hull_vol": [3.5, 4.5],
        "ball_vol": [3.4, 4.6],
        "chain": [0.6, 0.75],
        "v2": [1.1, 1.6],
        "v3": [1.7, 2.3],
    },
}

QUANTITIES = ("T", "M", "hull_vol", "ball_vol")


@dataclass
class FitResult:
    quantity: str
    slope: float
    intercept: float
    stderr: float
    spread: float
    r_range: tuple
    checkpoints: list
    replicas: int
    skipped: int = 0

    def within(self, lo, hi):
        return lo <= self.slope <= hi


@dataclass
class GofReport:
    test: str
    statistic: float
    threshold: float
    passed: bool
    sizes: tuple
    pvalue: float | None = None
    params: dict = field(default_factory=dict)


class InsufficientData(ValueError):
    pass


# --------------------------------------------------------------------------
# exponent fits


def layer_table(traces):
    """Stack per-layer columns of several traces into (replicas, r_max) arrays."""
    traces = list(traces)
    if not traces:
        raise InsufficientData("no traces")
    out = {"T": np.stack([t.T for t in traces]),
           "M": np.stack([t.M for t in traces]),
           "hull_vol": np.stack([t.hull_vol for t in traces])}
    if all(t.ball_vol is not None for t in traces):
        out["ball_vol"] = np.stack([t.ball_vol for t in traces])
    return out


def geometric_checkpoints(lo, hi, points=9):
    return np.unique(np.round(np.geomspace(lo, hi, points)).astype(np.int64))


def loglog_fit(x, y):
    """Least-squares (slope, intercept) of log y against log x."""
    s, c = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(s), float(c)


def fit_exponent(table, quantity, r_range, checkpoints=None):
    """Mean over replicas of the least-squares slope of log(quantity) against log r.

    ``table`` maps quantity names to (replicas, r_max) arrays whose column j
    holds radius j+1.  Non-positive entries (the boundary can be empty at a
    layer time) are dropped per replica; replicas left with fewer than four
    points are skipped and counted.
    """
    if quantity not in table:
        raise InsufficientData(f"quantity {quantity!r} not in table")
    data = np.atleast_2d(np.asarray(table[quantity], float))
    lo, hi = int(r_range[0]), int(r_range[1])
    if lo < 1 or hi > data.shape[1] or lo >= hi:
        raise InsufficientData(f"range {r_range} outside 1..{data.shape[1]}")
    cps = geometric_checkpoints(lo, hi) if checkpoints is None else np.unique(np.asarray(checkpoints))
    cps = cps[(cps >= lo) & (cps <= hi)]
    if cps.size < 4:
        raise InsufficientData("need at least 4 distinct checkpoints")
    slopes, icepts = [], []
    for row in data[:, cps - 1]:
        ok = row > 0
        if ok.sum() < 4:
            continue
        s, c = loglog_fit(cps[ok], row[ok])
        slopes.append(s)
        icepts.append(c)
    if not slopes:
        raise InsufficientData("no replica has enough positive points")
    s = np.array(slopes)
    n = s.size
    sd = float(s.std(ddof=1)) if n > 1 else float("nan")
    return FitResult(quantity, float(s.mean()), float(np.mean(icepts)),
                     sd / math.sqrt(n) if n > 1 else float("nan"), sd,
                     (lo, hi), cps.tolist(), n, data.shape[0] - n)


def growth_fits(r_max, replicas, seed, mode="skeleton", r_range=None, quantities=None):
    """Grow ``replicas`` hulls and fit every per-layer quantity."""
    traces = []
    for i in range(replicas):
        tr = grow_uipt(r_max, RandomSource(seed, i), mode=mode)
        tr.mesh = None      # only per-layer columns are needed
        traces.append(tr)
    table = layer_table(traces)
    r_range = r_range or (max(1, r_max // 8), r_max)
    qs = quantities or [q for q in QUANTITIES if q in table]
    return {q: fit_exponent(table, q, r_range) for q in qs}, table


def chain_growth_fit(horizon, replicas, seed):
    """Slope of log M_n against log n for the UIPT boundary chain."""
    res = growth_exponent_probe(horizon, replicas, RandomSource(seed, 0))
    cps = res["checkpoints"]
    return FitResult("chain_M", res["slope"] if res["slope"] is not None else float("nan"),
                     float("nan"), res["stderr"] if res["stderr"] is not None else float("nan"),
                     res["spread"] if res["spread"] is not None else float("nan"),
                     (cps[0], cps[-1]), cps, replicas - res["absorbed"], res["absorbed"])


# --------------------------------------------------------------------------
# goodness of fit


def _merge_small(expected, observed, min_expected):
    """Merge neighbouring cells, from the tail inwards, until each expects enough."""
    e, o = list(expected), list(observed)
    while len(e) > 1 and e[-1] < min_expected:
        e[-2] += e.pop()
        o[-2] += o.pop()
    j = 0
    while j < len(e) - 1:
        if e[j] < min_expected:
            e[j + 1] += e.pop(j)
            o[j + 1] += o.pop(j)
        else:
            j += 1
    return np.array(e), np.array(o)


def chi_square(observed, probs, alpha=0.001, min_expected=5.0, name="chi-square", params=None):
    """Pearson test of cell counts against exact cell probabilities (summing to 1)."""
    observed = np.asarray(observed, float)
    n = observed.sum()
    probs = np.array([float(p) for p in probs])
    e, o = _merge_small(probs * n, observed, min_expected)
    if e.size < 2:
        return GofReport(name, 0.0, float("nan"), True, (int(n),), 1.0, dict(params or {}, cells=1))
    stat = float(np.sum((o - e) ** 2 / e))
    crit = float(stats.chi2.ppf(1 - alpha, e.size - 1))
    pv = float(stats.chi2.sf(stat, e.size - 1))
    return GofReport(name, stat, crit, stat <= crit, (int(n),), pv,
                     dict(params or {}, cells=int(e.size), alpha=alpha))


def step_cells(m, tail):
    """Exact probabilities of the cells (+1, -1, ..., -(tail-1), <= -tail)."""
    law = C.step_law(m)
    cells = [law.p_up]
    kmax = min(m, tail - 1)
    cells += list(law.p_down[:kmax])
    if m >= tail:
        cells.append(1 - sum(cells, Fraction(0)))
    return cells


def bin_steps(x, m, tail):
    """Cell counts for ``step_cells``; values outside the support land in a last cell."""
    x = np.asarray(x)
    ncell = 1 + min(m, tail - 1) + (1 if m >= tail else 0)
    idx = np.where(x == 1, 0, np.minimum(-x, tail))
    bad = (x == 0) | (x > 1) | (x < -m)
    idx = np.where(bad, ncell, idx)
    return np.bincount(idx, minlength=ncell + 1)


def step_law_gof(m, draws, rng, sampler=None, alpha=None, tail=None, config=DEFAULT_CONFIG):
    """Chi-square of ``draws`` boundary increments at ``m`` against the exact law.

    ``sampler(gen, m, count)`` replaces the production sampler, which is how
    the negative controls are run.
    """
    if draws < 10 ** 4:
        raise ValueError("step_law_gof needs at least 1e4 draws")
    alpha = config["alpha"] if alpha is None else alpha
    tail = config["step_tail"] if tail is None else tail
    sampler = sampler or K.sample_steps
    x = sampler(as_generator(rng), m, draws)
    counts = bin_steps(x, m, tail)
    params = {"m": m, "tail": tail}
    if counts[-1]:
        return GofReport("chi-square", float("inf"), float("nan"), False, (draws,), 0.0,
                         dict(params, outside_support=int(counts[-1])))
    return chi_square(counts[:-1], step_cells(m, tail), alpha, config["min_expected"],
                      params=params)


def free_size_gof(m, samples, rng, n_max=12, sizes=None, alpha=None, config=DEFAULT_CONFIG):
    """Chi-square of free triangulation sizes against the exact size law.

    By default sizes come from the size-only sampler; pass ``sizes`` to test
    another route (for instance internal vertex counts of full meshes).
    """
    alpha = config["alpha"] if alpha is None else alpha
    if sizes is None:
        sizes = sample_free_sizes(m, samples, as_generator(rng))
    sizes = np.asarray(sizes)
    law = C.free_size_law(m, n_max - 1)
    counts = np.bincount(np.minimum(sizes, n_max), minlength=n_max + 1)
    return chi_square(counts, list(law.probs) + [law.tail_mass], alpha,
                      config["min_expected"], params={"m": m, "n_max": n_max})


def stable_cdf_family(exponent=0.5):
    """``t -> erfc((3t)^-exponent)``; exponent 1/2 is the limit law, others are controls."""
    def cdf(t):
        t = np.asarray(t, float)
        with np.errstate(divide="ignore"):
            z = np.where(t > 0, (3.0 * np.maximum(t, 1e-300)) ** -exponent, np.inf)
        return erfc(z)
    return cdf


def ks_distance(x, cdf):
    """Kolmogorov-Smirnov distance of the sample ``x`` (may hold +inf) from ``cdf``."""
    xs = np.sort(np.asarray(x, float))
    n = xs.size
    f = np.asarray(cdf(xs), float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_against(x, cdf, threshold, name="KS", params=None):
    res = stats.kstest(np.asarray(x, float), cdf)
    return GofReport(name, float(res.statistic), threshold, bool(res.statistic <= threshold),
                     (len(x),), float(res.pvalue), dict(params or {}))


def ks_censored(x, censored, cdf, threshold, name="KS", params=None):
    """KS check with right-censored draws (``x`` is a lower bound where ``censored``).

    Whatever the true values of the censored draws, the empirical CDF lies
    pointwise between the one with those draws at their lower bounds and the
    one with them at +inf, so the larger of the two distances bounds the true
    distance.  That bound is the reported statistic.
    """
    x = np.asarray(x, float)
    censored = np.asarray(censored, bool)
    if not censored.any():
        return ks_against(x, cdf, threshold, name, params)
    d_low = ks_distance(x, cdf)
    d_inf = ks_distance(np.where(censored, np.inf, x), cdf)
    stat = max(d_low, d_inf)
    return GofReport(name, stat, threshold, bool(stat <= threshold), (len(x),),
                     float(stats.kstwo.sf(stat, len(x))),
                     dict(params or {}, censored=int(censored.sum()),
                          statistic_at_bounds=d_low, statistic_at_inf=d_inf))


def marked_scaled_sizes(m, replicas, rng, step_cap=None, config=DEFAULT_CONFIG):
    """m^-2 |T| for marked free triangulations, with the censoring mask."""
    cap = config["marked_step_cap"] if step_cap is None else step_cap
    sizes, cens = sample_marked_sizes(m, replicas, as_generator(rng), cap, censor=True)
    return sizes / float(m * m), cens


def stable_limit_gof(m, replicas, rng, exponent=0.5, threshold=None, config=DEFAULT_CONFIG,
                     scaled=None, censored=None, step_cap=None):
    """KS distance between m^-2 |T| under the marked law and the stable-1/2 limit.

    Peeling steps per draw are heavy tailed, so draws are capped at
    ``marked_step_cap`` steps and handled as right-censored (see ``ks_censored``).
    """
    if replicas < 10 ** 3:
        raise ValueError("stable_limit_gof needs at least 1e3 replicas")
    threshold = config["ks_max"] if threshold is None else threshold
    if scaled is None:
        scaled, censored = marked_scaled_sizes(m, replicas, rng, step_cap, config)
    if censored is None:
        censored = np.zeros(len(scaled), bool)
    return ks_censored(scaled, censored, stable_cdf_family(exponent), threshold,
                       params={"m": m, "exponent": exponent})


def two_sample_ks(a, b, alpha=0.001, name="two-sample KS", params=None):
    res = stats.ks_2samp(np.asarray(a), np.asarray(b))
    return GofReport(name, float(res.statistic), alpha, bool(res.pvalue > alpha),
                     (len(a), len(b)), float(res.pvalue), dict(params or {}))


def height_sample(m, replicas, seed):
    """Heights of the mark in full marked samples (distance to the boundary)."""
    return np.array([sample_free_marked(m, RandomSource(seed, i)).height for i in range(replicas)])


# --------------------------------------------------------------------------
# heavy tails of the boundary increments


@dataclass
class HeavyTail:
    gamma: float
    checkpoints: list
    values: list
    slope: float
    monotone: bool


def heavy_tail_probe(trace, gamma, lo=None):
    """V_T = sum_{t<=T} |X_t|^gamma at power-of-two checkpoints in [sqrt(T), T].

    ``trace`` is a sequence of increments or anything with an ``X`` attribute.
    """
    x = getattr(trace, "X", trace)
    x = np.abs(np.asarray(x, np.float64))
    n = x.size
    if n < 10 ** 4:
        raise ValueError("heavy_tail_probe needs a trace of at least 1e4 steps")
    v = np.cumsum(x ** gamma)
    cps = pow2_checkpoints(n)
    cps = cps[cps >= (math.sqrt(n) if lo is None else lo)]
    vals = v[cps - 1]
    slope, _ = loglog_fit(cps, vals)
    return HeavyTail(gamma, cps.tolist(), vals.tolist(), slope, bool(np.all(np.diff(v) >= 0)))


def chain_heavy_tails(horizon, replicas, seed, gammas=(2, 3)):
    """Mean V_T slopes over independent chain traces (one trace in memory at a time)."""
    slopes = {g: [] for g in gammas}
    monotone = True
    for i in range(replicas):
        tr = run_chain(1, horizon, (), RandomSource(seed, i), checkpoints=[0],
                       absorb=False, keep_trace=True).trace
        for g in gammas:
            h = heavy_tail_probe(tr, g)
            slopes[g].append(h.slope)
            monotone &= h.monotone
    return {g: {"slope": float(np.mean(s)), "spread": float(np.std(s, ddof=1)) if len(s) > 1 else None}
            for g, s in slopes.items()}, monotone


# --------------------------------------------------------------------------
# report bundle


def _plain(x):
    if isinstance(x, (FitResult, GofReport, HeavyTail)):
        d = asdict(x)
        d["kind"] = type(x).__name__
        return _plain(d)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


def emit_report(results, out_dir, config=None, seeds=None, name="report"):
    """Write ``<name>.json`` and ``<name>.csv`` into ``out_dir``; returns the JSON path.

    The bundle holds no timestamps or host data, so identical inputs give
    identical bytes.
    """
    os.makedirs(out_dir, exist_ok=True)
    doc = {"schema_version": SCHEMA_VERSION,
           "config": _plain(config or {}),
           "seeds": _plain(seeds or {}),
           "count": len(results),
           "results": _plain(results)}
    jpath = os.path.join(out_dir, f"{name}.json")
    with open(jpath, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["name", "kind", "value", "threshold", "passed"])
        for key in sorted(results):
            r = results[key]
            if isinstance(r, FitResult):
                w.writerow([key, "fit", repr(r.slope), "", ""])
            elif isinstance(r, GofReport):
                w.writerow([key, r.test, repr(r.statistic), repr(r.threshold), int(r.passed)])
            elif isinstance(r, HeavyTail):
                w.writerow([key, "heavy_tail", repr(r.slope), "", ""])
    return jpath
