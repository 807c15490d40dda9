"""Samplers built on the peeling process.

* free triangulations of polygons (full mesh or size only),
* free triangulations with a marked internal vertex,
* the UIPT grown layer by layer, either on a mesh or as a skeleton that only
  tracks counts.

Layered ("ordered") peeling keeps a cursor on the frontier.  Every peeled
edge touches a vertex of the current layer, so when the last vertex at
distance r-1 leaves the frontier, every frontier vertex is at distance r and
the explored region is exactly the hull of the ball of radius r (time T_r).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from uipt import _kernels as K
from uipt.rng import as_generator
from uipt.triangulation import (
    BUDGET, CAPACITY, HOLE, LAST_A, LAST_B, LAYER_ERROR, LEFT, N_V, OK, OUTER_H,
    OUTER_LEN, RIGHT, HalfEdgeMesh, _fits, bfs, fill_free, init_root_arrays,
    peel_new, peel_split, polygon_arrays,
)

SNAP_FULL = -4
ENV_ROWS = 1 << 18
DEFAULT_STEP_CAP = 10 ** 9
DEFAULT_MAX_VERTICES = 12_000_000

_ENV = np.zeros((ENV_ROWS, K.ENV_COLS))


class BudgetExceeded(RuntimeError):
    """A run hit its step or memory budget; nothing was truncated silently."""


def size_envelope():
    """Shared per-m cache for the free-size sampler (filled lazily)."""
    return _ENV


@dataclass
class PeelTrace:
    mode: str
    r_max: int
    T: np.ndarray
    M: np.ndarray
    hull_vol: np.ndarray
    ball_vol: np.ndarray | None = None
    X: np.ndarray | None = None
    Y: np.ndarray | None = None
    M_t: np.ndarray | None = None
    layer_t: np.ndarray | None = None
    steps: int = 0
    mesh: HalfEdgeMesh | None = field(default=None, repr=False)
    frontiers: list | None = field(default=None, repr=False)

    def layers(self):
        """Rows (r, T_r, M_{T_r}, hull, ball) for r = 1..r_max."""
        ball = self.ball_vol if self.ball_vol is not None else np.full(self.r_max, -1)
        for j in range(self.r_max):
            yield j + 1, int(self.T[j]), int(self.M[j]), int(self.hull_vol[j]), int(ball[j])

    def v_accumulators(self, gammas=(2, 3)):
        if self.X is None:
            raise ValueError("per-step trace was not recorded")
        ax = np.abs(self.X).astype(np.float64)
        return {g: np.cumsum(ax ** g) for g in gammas}


@dataclass
class MarkedSample:
    size: int
    steps: int
    mesh: HalfEdgeMesh | None = None
    marked: int = -1
    height: int = -1
    boundary: np.ndarray | None = None


# --------------------------------------------------------------------------
# capacity handling: rerun from the saved generator state with larger arrays


def _run_with_capacity(gen, body, v_cap, max_vertices):
    state = gen.bit_generator.state
    stack_cap = 1024
    while True:
        if v_cap > max_vertices:
            raise BudgetExceeded(f"mesh would exceed {max_vertices} vertices")
        mesh = HalfEdgeMesh(v_cap, 6 * v_cap + 64)
        stack = np.zeros((stack_cap, 2), np.int64)
        out = body(mesh, stack)
        if out[0] != CAPACITY:
            return mesh, out
        gen.bit_generator.state = state
        v_cap *= 2
        stack_cap *= 2


def _check_status(status, what):
    if status == BUDGET:
        raise BudgetExceeded(f"{what}: step budget exhausted")
    if status == LAYER_ERROR:
        raise AssertionError(f"{what}: frontier labels disagree with the layer counter")


# --------------------------------------------------------------------------
# free triangulations


def sample_free(m, rng, mode="full", step_cap=DEFAULT_STEP_CAP, max_vertices=DEFAULT_MAX_VERTICES):
    """Free triangulation of the (m+2)-gon.

    ``mode="full"`` returns a :class:`HalfEdgeMesh` whose boundary vertices are
    ``0..m+1``; ``mode="size_only"`` returns the number of internal vertices.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    gen = as_generator(rng)
    if mode == "size_only":
        return int(K.sample_free_size(gen, m, _ENV))
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")

    def body(mesh, stack):
        a = mesh.arrays
        h = polygon_arrays(a, m)
        return fill_free(a, gen, h, m, stack, step_cap)

    guess = int(min(max_vertices, 4 * (m + 2) ** 2 + 64))
    mesh, (status, _) = _run_with_capacity(gen, body, guess, max_vertices)
    _check_status(status, "sample_free")
    return mesh


def sample_free_sizes(m, count, rng):
    return K.sample_free_sizes(as_generator(rng), m, count, _ENV)


@njit(cache=True)
def _marked_sizes(rng, m, count, env, step_cap, out, censored):
    for i in range(count):
        out[i], _, censored[i] = K.sample_marked_size(rng, m, env, step_cap)


def sample_marked_sizes(m, count, rng, step_cap=DEFAULT_STEP_CAP, censor=False):
    """Sizes of ``count`` marked free triangulations (size-only peeling).

    The number of peeling steps per draw is heavy tailed.  With ``censor`` a
    draw that reaches ``step_cap`` keeps the size found so far (a lower bound)
    and ``(sizes, censored_mask)`` is returned; otherwise such a draw raises.
    """
    out = np.empty(count, np.int64)
    cens = np.zeros(count, np.int64)
    _marked_sizes(as_generator(rng), m, count, _ENV, step_cap, out, cens)
    if censor:
        return out, cens.astype(bool)
    if np.any(cens):
        raise BudgetExceeded("sample_free_marked: step budget exhausted")
    return out


@njit(cache=True)
def _marked_full(a, rng, h, m, stack, step_cap):
    steps = 0
    while True:
        if not _fits(a, 1, 4):
            return CAPACITY, -1, steps
        if steps >= step_cap:
            return BUDGET, -1, steps
        code = K.sample_marked_peel(rng, m)
        steps += 1
        if code == 1 or code == 2:
            y = peel_new(a, h, -1)
            h = a.st[LAST_A]
            m += 1
            if code == 2:
                status, _ = fill_free(a, rng, h, m, stack, step_cap)
                return status, y, steps
        else:
            k = -code
            side = K.sample_side(rng)
            i = k if side == RIGHT else m + 1 - k
            peel_split(a, h, i, m + 2)
            if side == RIGHT:
                hole = a.st[LAST_A]
                h = a.st[LAST_B]
            else:
                hole = a.st[LAST_B]
                h = a.st[LAST_A]
            status, _ = fill_free(a, rng, hole, k - 1, stack, step_cap)
            if status != OK:
                return status, -1, steps
            m -= k


def sample_free_marked(m, rng, mode="full", step_cap=DEFAULT_STEP_CAP,
                       max_vertices=DEFAULT_MAX_VERTICES):
    """Free triangulation of the (m+2)-gon with a marked internal vertex.

    Full mode reports the height of the mark (graph distance to the boundary);
    ``mode="size_only"`` only returns the size and the number of marked steps.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    gen = as_generator(rng)
    if mode == "size_only":
        size, steps, cens = K.sample_marked_size(gen, m, _ENV, step_cap)
        if cens:
            raise BudgetExceeded("sample_free_marked: step budget exhausted")
        return MarkedSample(int(size), int(steps))
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")

    def body(mesh, stack):
        a = mesh.arrays
        h = polygon_arrays(a, m)
        return _marked_full(a, gen, h, m, stack, step_cap)

    guess = int(min(max_vertices, 4 * (m + 2) ** 2 + 64))
    mesh, (status, marked, steps) = _run_with_capacity(gen, body, guess, max_vertices)
    _check_status(status, "sample_free_marked")
    boundary = np.arange(m + 2)
    dist = bfs(mesh.arrays, boundary)
    return MarkedSample(mesh.n_vertices - (m + 2), int(steps), mesh, int(marked),
                        int(dist[marked]), boundary)


def height_profile(m, rng, max_vertices=DEFAULT_MAX_VERTICES):
    """Histogram of distances to the boundary of the internal vertices of one free sample."""
    if m < 2:
        raise ValueError("height_profile needs m >= 2")
    mesh = sample_free(m, rng, "full", max_vertices=max_vertices)
    dist = bfs(mesh.arrays, np.arange(m + 2))
    return np.bincount(dist[m + 2:], minlength=1)


# --------------------------------------------------------------------------
# UIPT growth


@njit(cache=True)
def _frontier_labels_equal(a, h, r):
    g = h
    while True:
        if a.label[a.origin[g]] != r:
            return False
        g = a.nxt[g]
        if g == h:
            return True


@njit(cache=True)
def _grow_full(a, rng, r_max, stack, step_cap, alt_rule,
               layer_t, layer_m, layer_hull, tr_x, tr_y, tr_m, tr_r, snaps, snap_off):
    init_root_arrays(a)
    h = a.st[OUTER_H]
    m = 1
    r = 0
    old = 1
    t = 0
    ntr = tr_x.shape[0]
    nsnap_layers = snap_off.shape[0] - 1
    sp = 0
    while r < r_max:
        if t >= step_cap:
            return BUDGET, t
        if not _fits(a, 1, 4):
            return CAPACITY, t
        nv0 = a.st[N_V]
        peel = h
        if alt_rule and K.sample_side(rng) == 1:
            g = a.prv[h]
            if a.label[a.origin[g]] == r:
                peel = g
        x = K.sample_step(rng, m)
        if x == 1:
            peel_new(a, peel, -1)
            if peel == h:
                h = a.st[LAST_A]
        else:
            k = -x
            side = K.sample_side(rng)
            i = k if side == RIGHT else m + 1 - k
            c = peel_split(a, peel, i, m + 2)
            if side == RIGHT:
                hole = a.st[LAST_A]
                keep = a.st[LAST_B]
            else:
                hole = a.st[LAST_B]
                keep = a.st[LAST_A]
            g = hole
            h_lost = False
            while True:
                a.face[g] = HOLE
                w = a.origin[g]
                if w != c and a.label[w] == r:
                    old -= 1
                if g == h:
                    h_lost = True
                g = a.nxt[g]
                if g == hole:
                    break
            if peel == h or h_lost:
                # the cursor moves to the first surviving vertex after the removed arc
                h = keep
            a.st[OUTER_H] = keep
            a.st[OUTER_LEN] = m + 2 - k
            status, _ = fill_free(a, rng, hole, k - 1, stack, step_cap)
            if status != OK:
                return status, t
        m += x
        if old > 0 and a.label[a.origin[h]] != r:
            # only reachable with alt_rule: skip ahead to the next current-layer vertex
            while a.label[a.origin[h]] != r:
                h = a.prv[h]
        if t < ntr:
            tr_x[t] = x
            tr_y[t] = a.st[N_V] - nv0
            tr_m[t] = m
            tr_r[t] = r
        t += 1
        if old == 0:
            layer_t[r] = t
            layer_m[r] = m
            layer_hull[r] = a.st[N_V]
            r += 1
            if not _frontier_labels_equal(a, h, r):
                return LAYER_ERROR, t
            if r < nsnap_layers:
                if snap_off[r] + m + 2 > snaps.shape[0]:
                    return SNAP_FULL, t
                g = h
                j = snap_off[r]
                while True:
                    snaps[j] = a.origin[g]
                    j += 1
                    g = a.nxt[g]
                    if g == h:
                        break
                snap_off[r + 1] = j
            old = m + 2
    return OK, t


def grow_uipt(r_max, rng, mode="skeleton", trace_steps=0, step_cap=DEFAULT_STEP_CAP,
              max_vertices=DEFAULT_MAX_VERTICES, snapshot_layers=0, alt_rule=False,
              ball=True):
    """Grow the UIPT by layered peeling until the hull of radius ``r_max`` is complete.

    ``trace_steps`` bounds the number of per-step records kept (0: none,
    -1: all).  In full mode ``snapshot_layers`` keeps the frontier vertex ids
    at T_1..T_s, and ``alt_rule`` switches to a randomised choice of the peeled
    edge next to the cursor (same law, different exploration order).
    """
    if r_max < 1:
        raise ValueError("r_max must be positive")
    gen = as_generator(rng)
    lt = np.zeros(r_max, np.int64)
    lm = np.zeros(r_max, np.int64)
    lh = np.zeros(r_max, np.int64)

    def trace_arrays(n):
        return (np.zeros(n, np.int64), np.zeros(n, np.int64),
                np.zeros(n, np.int64), np.zeros(n, np.int64))

    if mode == "skeleton":
        if trace_steps < 0:
            # unknown length: retry with a larger buffer
            n = 1 << 16
            state = gen.bit_generator.state
            while True:
                tr = trace_arrays(n)
                t = K.grow_skeleton(gen, r_max, _ENV, step_cap, lt, lm, lh, *tr)
                if t < 0 or t <= n:
                    break
                gen.bit_generator.state = state
                n = 2 * t
        else:
            tr = trace_arrays(trace_steps)
            t = K.grow_skeleton(gen, r_max, _ENV, step_cap, lt, lm, lh, *tr)
        if t == K.BUDGET_EXCEEDED:
            raise BudgetExceeded("grow_uipt: step budget exhausted")
        n = t if trace_steps < 0 else min(t, trace_steps)
        x, y, mt, rt = (a[:n] for a in tr)
        return PeelTrace("skeleton", r_max, lt, lm, lh, None, x, y, mt, rt, int(t))
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")

    ntr = [trace_steps if trace_steps >= 0 else 1 << 16]
    snap_cap = [1024]

    def body(mesh, stack):
        state = gen.bit_generator.state
        while True:
            tr = trace_arrays(ntr[0])
            snaps = np.zeros(snap_cap[0], np.int64)
            off = np.zeros(snapshot_layers + 2 if snapshot_layers else 1, np.int64)
            mesh.st[:] = 0
            status, t = _grow_full(mesh.arrays, gen, r_max, stack, step_cap, alt_rule,
                                   lt, lm, lh, *tr, snaps, off)
            if status == SNAP_FULL:
                snap_cap[0] *= 4
            elif trace_steps < 0 and status == OK and t > ntr[0]:
                ntr[0] = t
            else:
                body.out = (tr, snaps, off)
                return status, t
            gen.bit_generator.state = state

    # hulls hold about r^4 / 4 vertices; the retry doubles when a run needs more
    guess = int(min(max_vertices, r_max ** 4 + 1024))
    mesh, (status, t) = _run_with_capacity(gen, body, guess, max_vertices)
    _check_status(status, "grow_uipt")
    tr, snaps, off = body.out
    n = t if trace_steps < 0 else min(t, trace_steps)
    x, y, mt, rt = (a[:n] for a in tr)
    frontiers = None
    if snapshot_layers:
        frontiers = [snaps[off[r]:off[r + 1]].copy() for r in range(1, min(snapshot_layers, r_max) + 1)]
    ball_vol = None
    if ball:
        dist = bfs(mesh.arrays, np.zeros(1, np.int64))
        counts = np.bincount(dist[dist >= 0], minlength=r_max + 1)
        ball_vol = np.cumsum(counts)[1: r_max + 1]
    return PeelTrace("full", r_max, lt, lm, lh, ball_vol, x, y, mt, rt, int(t), mesh, frontiers)

