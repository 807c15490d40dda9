"""Site percolation on the UIPT explored by peeling.

Black vertices (colour 1) belong to the cluster of the black root, white ones
(colour 0) do not.  Peeling along a black/white frontier edge keeps each
colour class a single arc, so the run is described by the counts (M, B, W);
the cluster is finite exactly when the frontier becomes entirely white.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import stats

from uipt import _kernels as K
from uipt.rng import RandomSource, as_generator
from uipt.triangulation import (
    BUDGET, CAPACITY, HOLE, LAST_A, LAST_B, N_V, OK, OUTER_H, OUTER_LEN, RIGHT,
    HalfEdgeMesh, _fits, fill_free, init_root_arrays, peel_new, peel_split,
)
from uipt.peeling import BudgetExceeded, DEFAULT_MAX_VERTICES

BLACK = 1
WHITE = 0
ARC_ERROR = -5

clamp = K.clamp


@dataclass
class PercOutcome:
    died: bool
    death_step: int
    max_b: int
    horizon: int
    trace_b: np.ndarray | None = None
    mesh: HalfEdgeMesh | None = None

    @property
    def verdict(self):
        return "died" if self.died else "survived"


def run_reduced(p, horizon, rng, keep_trace=False, all_black=False):
    """Reduced chain; ``all_black`` colours the whole root triangle black."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    tr = np.zeros(horizon if keep_trace else 0, np.int64)
    d, mb = K.run_reduced(as_generator(rng), p, horizon, tr, all_black)
    return PercOutcome(d >= 0, int(d), int(mb), horizon,
                       tr[: d if d >= 0 else horizon] if keep_trace else None)


@njit(cache=True)
def _colour_changes(a, h):
    n = 0
    g = h
    while True:
        if a.color[a.origin[g]] != a.color[a.origin[a.nxt[g]]]:
            n += 1
        g = a.nxt[g]
        if g == h:
            return n


@njit(cache=True)
def _perc_full(a, rng, p, horizon, stack, fill_holes, check_arcs, step_cap, trace_b):
    init_root_arrays(a)
    for v in range(1, 3):
        a.color[v] = BLACK if rng.random() < p else WHITE
    b = 1 + a.color[1] + a.color[2]
    w = 3 - b
    # start on a bichromatic edge when there is one
    h = a.st[OUTER_H]
    g = h
    for _ in range(3):
        if a.color[a.origin[g]] != a.color[a.origin[a.nxt[g]]]:
            h = g
            break
        g = a.nxt[g]
    m = 1
    mb = b
    nt = trace_b.shape[0]
    t = 0
    while t < horizon:
        if not _fits(a, 1, 4):
            return CAPACITY, t, mb
        x = K.sample_step(rng, m)
        x0 = a.origin[h]
        x1 = a.origin[a.nxt[h]]
        if x == 1:
            col = BLACK if rng.random() < p else WHITE
            peel_new(a, h, col)
            if col == BLACK:
                b += 1
            else:
                w += 1
            if col != a.color[x0] or col == a.color[x1]:
                h = a.st[LAST_A]
            else:
                h = a.st[LAST_B]
        else:
            k = -x
            side = K.sample_side(rng)
            i = k if side == RIGHT else m + 1 - k
            c = peel_split(a, h, i, m + 2)
            if side == RIGHT:
                hole = a.st[LAST_A]
                h = a.st[LAST_B]
            else:
                hole = a.st[LAST_B]
                h = a.st[LAST_A]
            g = hole
            while True:
                a.face[g] = HOLE
                v = a.origin[g]
                if v != c:
                    if a.color[v] == BLACK:
                        b -= 1
                    else:
                        w -= 1
                g = a.nxt[g]
                if g == hole:
                    break
            a.st[OUTER_H] = h
            a.st[OUTER_LEN] = m + 2 - k
            if fill_holes:
                status, _ = fill_free(a, rng, hole, k - 1, stack, step_cap)
                if status != OK:
                    return status, t, mb
        m += x
        if t < nt:
            trace_b[t] = b
        t += 1
        if b > mb:
            mb = b
        if check_arcs:
            if b + w != m + 2 or _colour_changes(a, h) > 2:
                return ARC_ERROR, t, mb
            if b > 0 and w > 0 and a.color[a.origin[h]] == a.color[a.origin[a.nxt[h]]]:
                return ARC_ERROR, t, mb
        if b == 0:
            return OK, t, mb
    return OK, -1, mb


def run_full(p, horizon, rng, fill_holes=True, check_arcs=False, keep_trace=False,
             keep_mesh=False, max_vertices=DEFAULT_MAX_VERTICES, step_cap=10 ** 9):
    """Percolation by peeling an actual triangulation.

    The peeled edge is always the black/white edge created by the previous
    step, so no frontier scan is needed; with an all-black frontier the
    cursor edge is used.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    gen = as_generator(rng)
    state = gen.bit_generator.state
    v_cap = 4 * horizon + 64
    stack_cap = 1024
    while True:
        if v_cap > 2 * max_vertices:
            raise BudgetExceeded(f"percolation mesh would exceed {max_vertices} vertices")
        mesh = HalfEdgeMesh(min(v_cap, max_vertices), 6 * min(v_cap, max_vertices) + 64)
        stack = np.zeros((stack_cap, 2), np.int64)
        tr = np.zeros(horizon if keep_trace else 0, np.int64)
        status, d, mb = _perc_full(mesh.arrays, gen, p, horizon, stack, fill_holes,
                                   check_arcs, step_cap, tr)
        if status != CAPACITY:
            break
        gen.bit_generator.state = state
        v_cap *= 2
        stack_cap *= 2
    if status == ARC_ERROR:
        raise AssertionError("frontier colour classes are not two arcs")
    if status == BUDGET:
        raise BudgetExceeded("percolation: step budget exhausted")
    return PercOutcome(d >= 0, int(d), int(mb), horizon,
                       tr[: d if d >= 0 else horizon] if keep_trace else None,
                       mesh if keep_mesh else None)


def run_many(p, horizon, replicas, seed, engine="reduced", offset=0, **kw):
    """Death steps (-1 when surviving) and max B of independent runs, one stream each."""
    run = run_reduced if engine == "reduced" else run_full
    death = np.empty(replicas, np.int64)
    maxb = np.empty(replicas, np.int64)
    for i in range(replicas):
        o = run(p, horizon, RandomSource(seed, offset + i), **kw)
        death[i] = o.death_step
        maxb[i] = o.max_b
    return death, maxb


def wilson_interval(k, n, level=0.95):
    if n == 0:
        return 0.0, 1.0
    z = stats.norm.ppf(0.5 + level / 2)
    ph = k / n
    den = 1 + z * z / n
    mid = (ph + z * z / (2 * n)) / den
    half = z * np.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)
    return float(lo), float(hi)


def survival_at(death, horizon):
    """Fraction of runs still alive after ``horizon`` steps."""
    death = np.asarray(death)
    return float(np.mean((death < 0) | (death > horizon)))


def estimate_survival(p, horizon, replicas, seed, engine="reduced", level=0.95, **kw):
    death, maxb = run_many(p, horizon, replicas, seed, engine, **kw)
    k = int(np.sum(death < 0))
    lo, hi = wilson_interval(k, replicas, level)
    return {"p": p, "horizon": horizon, "replicas": replicas, "survived": k,
            "fraction": k / replicas, "ci": [lo, hi], "level": level,
            "death": death, "max_b": maxb}


def sweep(p_list, horizon, replicas, seed, engine="reduced", level=0.95, threshold=0.1, **kw):
    """Survival fraction for each p, a monotonicity report and the threshold crossing."""
    rows = []
    for j, p in enumerate(p_list):
        rows.append(estimate_survival(float(p), horizon, replicas, seed + 7919 * j, engine, level, **kw))
    fr = np.array([r["fraction"] for r in rows])
    ps = np.array([r["p"] for r in rows])
    # weak monotonicity: a drop is tolerated when the intervals overlap
    violations = [(rows[j]["p"], rows[j + 1]["p"]) for j in range(len(rows) - 1)
                  if rows[j + 1]["ci"][1] < rows[j]["ci"][0]]
    return {"rows": rows, "monotone": not violations, "violations": violations,
            "crossing": crossing(ps, fr, threshold)}


def crossing(ps, fractions, threshold=0.1):
    """Linear interpolation of the first p at which survival reaches ``threshold``."""
    ps = np.asarray(ps, float)
    fr = np.asarray(fractions, float)
    order = np.argsort(ps)
    ps, fr = ps[order], fr[order]
    for j in range(len(ps) - 1):
        if fr[j] < threshold <= fr[j + 1]:
            return float(ps[j] + (threshold - fr[j]) * (ps[j + 1] - ps[j]) / (fr[j + 1] - fr[j]))
    if len(fr) and fr[0] >= threshold:
        return float(ps[0])
    return None


def subcritical_logbound_probe(p, horizons, replicas, seed):
    """Median over runs of max B / log(horizon), one independent batch per horizon."""
    if not p < 0.5:
        raise ValueError("the probe is for p < 1/2")
    out = {}
    for j, n in enumerate(horizons):
        _, maxb = run_many(p, int(n), replicas, seed + 104729 * j)
        ratio = maxb / np.log(max(n, 2))
        out[int(n)] = {"median_max_b": float(np.median(maxb)),
                       "median_ratio": float(np.median(ratio)),
                       "max_b": maxb}
    meds = [v["median_ratio"] for v in out.values()]
    drift = max(meds) / min(meds) if min(meds) > 0 else float("inf")
    return {"p": p, "by_horizon": out, "ratio_drift": drift}


def compare_engines(p, horizon, replicas, seed, alpha=0.001):
    """Two-sample comparison of reduced and full engines.

    Survival fractions are compared with Fisher's exact test, death times of
    the runs that died with a two-sample KS test.
    """
    dr, _ = run_many(p, horizon, replicas, seed, "reduced")
    df, _ = run_many(p, horizon, replicas, seed, "full", offset=10 ** 6)
    sr, sf = int(np.sum(dr < 0)), int(np.sum(df < 0))
    fisher = stats.fisher_exact([[sr, replicas - sr], [sf, replicas - sf]]).pvalue
    a, b = dr[dr >= 0], df[df >= 0]
    ks = stats.ks_2samp(a, b).pvalue if a.size and b.size else 1.0
    return {"p": p, "survival_reduced": sr / replicas, "survival_full": sf / replicas,
            "fisher_p": float(fisher), "ks_p": float(ks),
            "pass": bool(fisher > alpha and ks > alpha)}
