"""The boundary-length Markov chain of UIPT peeling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from uipt import _kernels as K
from uipt.rng import RandomSource, as_generator

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True)
class StepSample:
    delta: int
    side: str | None = None


@dataclass
class ChainTrajectory:
    m0: int
    checkpoints: np.ndarray
    values: np.ndarray
    steps: int
    max_m: int
    min_m: int
    hits: dict = field(default_factory=dict)
    absorbed_at: int | None = None
    stopped_above: bool = False
    visits: int | None = None
    trace: np.ndarray | None = None

    @property
    def samples(self):
        keep = self.values >= 0
        return list(zip(self.checkpoints[keep].tolist(), self.values[keep].tolist()))


def sample_step(m, rng):
    if m < 1:
        raise ValueError("sample_step needs m >= 1")
    gen = as_generator(rng)
    d = int(K.sample_step(gen, m))
    if d > 0:
        return StepSample(d)
    return StepSample(d, RIGHT if K.sample_side(gen) == 0 else LEFT)


def sample_steps(m, count, rng):
    """Vector of ``count`` increments at fixed ``m`` (sides are not drawn)."""
    if m < 1:
        raise ValueError("sample_steps needs m >= 1")
    return K.sample_steps(as_generator(rng), m, count)


def pow2_checkpoints(horizon):
    c = [0]
    k = 1
    while k <= horizon:
        c.append(k)
        k *= 2
    if c[-1] != horizon:
        c.append(horizon)
    return np.array(c, np.int64)


def run_chain(m0, horizon, targets=(), rng=None, checkpoints=None, absorb=True,
              stop_above=-1, visit_state=-1, keep_trace=False):
    """Run the chain from ``m0`` for ``horizon`` steps.

    With ``absorb`` the run ends when M reaches 0.  ``stop_above >= 0`` ends it
    as soon as M exceeds that level (used to censor runs that have escaped).
    """
    if m0 < 0 or (absorb and m0 < 1):
        raise ValueError("m0 must be positive")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    gen = as_generator(rng)
    cps = pow2_checkpoints(horizon) if checkpoints is None else np.asarray(checkpoints, np.int64)
    tg = np.array(sorted(set(int(x) for x in targets)), np.int64)
    out = np.empty(cps.shape[0], np.int64)
    hits = np.zeros(tg.shape[0], np.int64)
    trace = np.zeros(horizon if keep_trace else 0, np.int64)
    t, absorbed, mx, mn, visits, above = K.run_chain(
        gen, m0, horizon, cps, tg, absorb, stop_above, visit_state, out, hits, trace)
    return ChainTrajectory(
        m0, cps, out, int(t), int(mx), int(mn),
        {int(a): bool(b) for a, b in zip(tg, hits)},
        None if absorbed < 0 else int(absorbed), bool(above),
        int(visits) if visit_state >= 0 else None,
        trace[:t] if keep_trace else None)


def hit_frequency(m0, target, replicas, rng, stop_above, horizon=10 ** 12, absorb=False):
    """Empirical probability that the chain from ``m0`` ever visits ``target``.

    Runs that climb above ``stop_above`` are stopped and counted as misses;
    the induced bias is at most ``hitting_prob(stop_above + 1, target)``.
    Returns (frequency, fraction censored).
    """
    res = K.hit_batch(as_generator(rng), m0, target, replicas, absorb, stop_above, horizon)
    return float(np.mean(res == 1)), float(np.mean(res >= 2))


def visit_counts(n, replicas, rng, stop_above, horizon=10 ** 5):
    """Visits to ``n`` (time 0 included) of the chain started at ``n``.

    A run ends when it climbs above ``stop_above`` or reaches the horizon;
    counts of horizon-censored runs are returned negated.
    """
    return K.visits_batch(as_generator(rng), n, replicas, stop_above, horizon)


def log_log_slope(x, y):
    lx = np.log(np.asarray(x, float))
    ly = np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def growth_exponent_probe(horizon, replicas, rng, absorb=False):
    """Mean least-squares slope of log M_n against log n over [sqrt(horizon), horizon].

    The default chain is the UIPT boundary (state 0 steps to 1), which never
    dies; with ``absorb=True`` runs that hit 0 are dropped and counted.
    Returns a dict with slope, spread (None for one replica) and counts.
    """
    if horizon < 1000:
        raise ValueError("horizon must be at least 1000")
    src = rng if isinstance(rng, RandomSource) else RandomSource(int(rng), 0)
    cps = pow2_checkpoints(horizon)
    cps = cps[cps >= np.sqrt(horizon)]
    slopes = []
    absorbed = 0
    for i in range(replicas):
        tr = run_chain(1, horizon, (), src.child(i), checkpoints=cps, absorb=absorb)
        if np.any(tr.values <= 0):
            absorbed += 1
            continue
        slopes.append(log_log_slope(cps, tr.values))
    if not slopes:
        return {"slope": None, "spread": None, "replicas": replicas, "absorbed": absorbed,
                "degenerate": True, "checkpoints": cps.tolist()}
    s = np.array(slopes)
    return {"slope": float(s.mean()),
            "spread": float(s.std(ddof=1)) if s.size > 1 else None,
            "stderr": float(s.std(ddof=1) / np.sqrt(s.size)) if s.size > 1 else None,
            "replicas": replicas, "absorbed": absorbed, "degenerate": False,
            "checkpoints": cps.tolist()}
