"""Half-edge triangulated discs with a circular frontier.

Storage is a set of flat int32 arrays.  Every face lies on the left of its
half-edges; face ids ``>= 0`` are triangles, ``OUTER`` is the unexplored
outer face and ``HOLE`` marks a detached region that still has to be filled.
Removed half-edges keep ``origin == -1``.

Peel geometry, seen from the outer face (the frontier is read against the
``nxt`` direction, starting at the cursor ``x0``)::

            x1 ---- x0 (cursor)
           /          \\   <- peeled half-edge h = x0 -> x_{m+1}
         x2            x_{m+1}
          .            /
            .. x_i ....

``peel_split(h, i)`` adds the triangle (x0, x_{m+1}, x_i).  The cycle through
x0..x_i (``RIGHT`` side, contains the cursor) and the cycle through
x_i..x_{m+1} (``LEFT`` side) are returned; the caller decides which one stays
outer.
"""

from __future__ import annotations

import os
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from numba import njit

from uipt._kernels import sample_free_peel

OUTER = -1
HOLE = -2
DEAD = -3

# slots of the state vector
N_HE, N_V, N_TRI, OUTER_H, OUTER_LEN, N_DEAD, LAST_A, LAST_B = range(8)

OK = 0
BUDGET = -1
CAPACITY = -2
LAYER_ERROR = -3

RIGHT = 0
LEFT = 1

# checks after every python-level mutation: 1 = Euler relation from the
# counters, 2 = full validate()
DEBUG = int(os.environ.get("UIPT_DEBUG", "0") or 0)

MeshArrays = namedtuple("MeshArrays", "origin twin nxt prv face label color st")


class MeshError(ValueError):
    pass


# --------------------------------------------------------------------------
# compiled primitives


@njit(cache=True)
def _fits(a, n_v, n_he):
    return (a.st[N_V] + n_v <= a.label.shape[0]
            and a.st[N_HE] + n_he <= a.origin.shape[0])


@njit(cache=True)
def _new_vertex(a, label, color):
    v = a.st[N_V]
    a.label[v] = label
    a.color[v] = color
    a.st[N_V] = v + 1
    return v


@njit(cache=True)
def _new_pair(a, u, v):
    h = a.st[N_HE]
    a.origin[h] = u
    a.origin[h + 1] = v
    a.twin[h] = h + 1
    a.twin[h + 1] = h
    a.st[N_HE] = h + 2
    return h


@njit(cache=True)
def _link(a, h, g):
    a.nxt[h] = g
    a.prv[g] = h


@njit(cache=True)
def dest(a, h):
    return a.origin[a.nxt[h]]


@njit(cache=True)
def _set_triangle(a, h1, h2, h3):
    f = a.st[N_TRI]
    _link(a, h1, h2)
    _link(a, h2, h3)
    _link(a, h3, h1)
    a.face[h1] = f
    a.face[h2] = f
    a.face[h3] = f
    a.st[N_TRI] = f + 1


@njit(cache=True)
def peel_new(a, h, color):
    """Triangle on ``h`` with a fresh vertex.  Needs room for 1 vertex and 4 half-edges.

    The cycle of ``h`` keeps its face tag; ``st[LAST_A]`` is the new half-edge
    leaving ``origin(h)`` and ``st[LAST_B]`` the one entering ``dest(h)``.
    """
    tag = a.face[h]
    p = a.prv[h]
    q = a.nxt[h]
    x0 = a.origin[h]
    x1 = a.origin[q]
    y = _new_vertex(a, 1 + min(a.label[x0], a.label[x1]), color)
    e1 = _new_pair(a, x1, y)
    e2 = _new_pair(a, y, x0)
    e1t = e1 + 1
    e2t = e2 + 1
    _set_triangle(a, h, e1, e2)
    _link(a, p, e2t)
    _link(a, e2t, e1t)
    _link(a, e1t, q)
    a.face[e1t] = tag
    a.face[e2t] = tag
    if tag == OUTER:
        a.st[OUTER_H] = e2t
        a.st[OUTER_LEN] += 1
    a.st[LAST_A] = e2t
    a.st[LAST_B] = e1t
    return y


@njit(cache=True)
def walk_prv(a, h, i, length):
    """``prv^i(h)`` on a cycle of the given length, walking the short way."""
    if i <= length - i:
        for _ in range(i):
            h = a.prv[h]
    else:
        for _ in range(length - i):
            h = a.nxt[h]
    return h


@njit(cache=True)
def peel_split(a, h, i, length):
    """Triangle (x0, x_{m+1}, x_i) on ``h``, splitting its cycle in two.

    ``length`` is the cycle length m+2 and ``1 <= i <= m``.  Afterwards
    ``st[LAST_A]`` is the half-edge x0 -> x_i (cycle x0..x_i, length i+1) and
    ``st[LAST_B]`` the half-edge x_i -> x_{m+1} (cycle length m+2-i).  Both
    cycles keep the old face tag.  Needs room for 4 half-edges.
    """
    tag = a.face[h]
    q = a.nxt[h]
    gi = walk_prv(a, h, i, length)
    gi1 = a.prv[gi]
    g1 = a.prv[h]
    x0 = a.origin[h]
    x1 = a.origin[q]
    c = a.origin[gi]
    e1 = _new_pair(a, x1, c)
    e2 = _new_pair(a, c, x0)
    e1t = e1 + 1
    e2t = e2 + 1
    _set_triangle(a, h, e1, e2)
    # cycle x0 .. x_i
    _link(a, e2t, gi)
    _link(a, g1, e2t)
    # cycle x_i .. x_{m+1}
    _link(a, e1t, q)
    _link(a, gi1, e1t)
    a.face[e1t] = tag
    a.face[e2t] = tag
    a.st[LAST_A] = e2t
    a.st[LAST_B] = e1t
    return c


@njit(cache=True)
def tag_cycle(a, h, tag):
    n = 0
    g = h
    while True:
        a.face[g] = tag
        n += 1
        g = a.nxt[g]
        if g == h:
            return n


@njit(cache=True)
def cycle_length(a, h):
    n = 0
    g = h
    while True:
        n += 1
        g = a.nxt[g]
        if g == h:
            return n


@njit(cache=True)
def glue_two_gon(a, h):
    """Close the 2-cycle of ``h`` by identifying its two edges."""
    h2 = a.nxt[h]
    t1 = a.twin[h]
    t2 = a.twin[h2]
    a.twin[t1] = t2
    a.twin[t2] = t1
    a.origin[h] = -1
    a.origin[h2] = -1
    a.face[h] = DEAD
    a.face[h2] = DEAD
    a.st[N_DEAD] += 2
    if a.st[OUTER_H] == h or a.st[OUTER_H] == h2:
        a.st[OUTER_H] = t1
        a.st[OUTER_LEN] = 2


@njit(cache=True)
def fill_free(a, rng, h, m, stack, step_cap):
    """Fill the HOLE cycle of ``h`` (length m+2) with a free triangulation, in place.

    Returns (status, peel steps).  ``stack`` is an (n, 2) int64 work array of
    pending (half-edge, m) sub-polygons.
    """
    sp = 0
    stack[0, 0] = h
    stack[0, 1] = m
    sp = 1
    steps = 0
    while sp > 0:
        sp -= 1
        h = stack[sp, 0]
        m = stack[sp, 1]
        while True:
            if steps >= step_cap:
                return BUDGET, steps
            if not _fits(a, 1, 4):
                return CAPACITY, steps
            steps += 1
            code = sample_free_peel(rng, m)
            if code == 0:
                peel_new(a, h, -1)
                h = a.st[LAST_A]
                m += 1
            elif code == -1:
                glue_two_gon(a, h)
                break
            else:
                if sp + 1 >= stack.shape[0]:
                    return CAPACITY, steps
                peel_split(a, h, code, m + 2)
                # keep the smaller part for now, defer the other
                m1 = code - 1
                m2 = m - code
                if m1 <= m2:
                    stack[sp, 0] = a.st[LAST_B]
                    stack[sp, 1] = m2
                    h = a.st[LAST_A]
                    m = m1
                else:
                    stack[sp, 0] = a.st[LAST_A]
                    stack[sp, 1] = m1
                    h = a.st[LAST_B]
                    m = m2
                sp += 1
    return OK, steps


@njit(cache=True)
def init_root_arrays(a):
    r = _new_vertex(a, 0, 1)
    v1 = _new_vertex(a, 1, -1)
    v2 = _new_vertex(a, 1, -1)
    ha = _new_pair(a, r, v2)
    hb = _new_pair(a, v2, v1)
    hc = _new_pair(a, v1, r)
    _set_triangle(a, ha + 1, hc + 1, hb + 1)
    _link(a, ha, hb)
    _link(a, hb, hc)
    _link(a, hc, ha)
    a.face[ha] = OUTER
    a.face[hb] = OUTER
    a.face[hc] = OUTER
    a.st[OUTER_H] = ha
    a.st[OUTER_LEN] = 3


@njit(cache=True)
def polygon_arrays(a, m):
    """(m+2)-gon whose interior is one pending HOLE.  Returns the hole handle."""
    n = m + 2
    v0 = a.st[N_V]
    for _ in range(n):
        _new_vertex(a, 0, -1)
    h0 = a.st[N_HE]
    for j in range(n):
        _new_pair(a, v0 + j, v0 + (j + 1) % n)
    for j in range(n):
        h = h0 + 2 * j
        _link(a, h, h0 + 2 * ((j + 1) % n))
        a.face[h] = OUTER
        t = h + 1
        _link(a, t, h0 + 2 * ((j - 1) % n) + 1)
        a.face[t] = HOLE
    a.st[OUTER_H] = h0
    a.st[OUTER_LEN] = n
    return h0 + 1


@njit(cache=True)
def adjacency(a):
    nv = a.st[N_V]
    nhe = a.st[N_HE]
    deg = np.zeros(nv + 1, np.int64)
    for h in range(nhe):
        o = a.origin[h]
        if o >= 0:
            deg[o + 1] += 1
    for v in range(nv):
        deg[v + 1] += deg[v]
    adj = np.empty(deg[nv], np.int32)
    fill = deg[:nv].copy()
    for h in range(nhe):
        o = a.origin[h]
        if o >= 0:
            adj[fill[o]] = a.origin[a.twin[h]]
            fill[o] += 1
    return deg, adj


@njit(cache=True)
def bfs(a, sources):
    deg, adj = adjacency(a)
    nv = a.st[N_V]
    dist = np.full(nv, -1, np.int64)
    queue = np.empty(nv, np.int64)
    qh = 0
    qt = 0
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            queue[qt] = s
            qt += 1
    while qh < qt:
        v = queue[qh]
        qh += 1
        for j in range(deg[v], deg[v + 1]):
            w = adj[j]
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue[qt] = w
                qt += 1
    return dist


@njit(cache=True)
def _validate(a, expect_outer):
    """Returns (code, half-edge) of the first violation, code 0 if none."""
    nhe = a.st[N_HE]
    nv = a.st[N_V]
    live = 0
    for h in range(nhe):
        if a.origin[h] < 0:
            continue
        live += 1
        t = a.twin[h]
        if t == h or t < 0 or t >= nhe or a.origin[t] < 0 or a.twin[t] != h:
            return 1, h
        if a.origin[h] >= nv:
            return 2, h
        g = a.nxt[h]
        if g < 0 or g >= nhe or a.origin[g] < 0 or a.prv[g] != h:
            return 3, h
        if a.origin[t] != a.origin[g]:
            return 4, h
        if a.origin[g] == a.origin[h]:
            return 5, h
        if a.face[g] != a.face[h]:
            return 6, h
    seen = np.zeros(nhe, np.bool_)
    tri_seen = np.zeros(a.st[N_TRI], np.bool_)
    faces = 0
    outer_cycles = 0
    for h in range(nhe):
        if a.origin[h] < 0 or seen[h]:
            continue
        n = 0
        g = h
        while True:
            seen[g] = True
            n += 1
            g = a.nxt[g]
            if g == h:
                break
            if n > nhe:
                return 7, h
        faces += 1
        f = a.face[h]
        if f >= 0:
            if n != 3:
                return 8, h
            if f >= tri_seen.shape[0] or tri_seen[f]:
                return 9, h
            tri_seen[f] = True
        elif f == OUTER:
            outer_cycles += 1
            if n != a.st[OUTER_LEN]:
                return 10, h
        elif f != HOLE:
            return 11, h
    if expect_outer and outer_cycles != 1:
        return 12, -1
    if expect_outer and a.face[a.st[OUTER_H]] != OUTER:
        return 13, a.st[OUTER_H]
    if nv - live // 2 + faces != 2:
        return 14, -1
    return 0, -1


_VIOLATIONS = {
    1: "twin is not a fixed-point-free involution",
    2: "origin out of range",
    3: "next/prev links inconsistent",
    4: "twin origin differs from destination",
    5: "loop edge",
    6: "face tag differs along a cycle",
    7: "cycle does not close",
    8: "triangle face with a cycle of length != 3",
    9: "triangle id repeated or out of range",
    10: "outer cycle length disagrees with the frontier counter",
    11: "unknown face tag",
    12: "not exactly one outer face",
    13: "outer handle not on the outer face",
    14: "Euler relation fails",
}


# --------------------------------------------------------------------------
# python-facing mesh


def _grow(arr, n, fill=0):
    out = np.full(n, fill, arr.dtype)
    out[: arr.shape[0]] = arr
    return out


class HalfEdgeMesh:
    """Triangulated disc stored as half-edge index arrays."""

    def __init__(self, v_cap=16, he_cap=64):
        v_cap = max(int(v_cap), 4)
        he_cap = max(int(he_cap), 8)
        self.origin = np.full(he_cap, -1, np.int32)
        self.twin = np.full(he_cap, -1, np.int32)
        self.nxt = np.full(he_cap, -1, np.int32)
        self.prv = np.full(he_cap, -1, np.int32)
        self.face = np.full(he_cap, DEAD, np.int32)
        self.label = np.full(v_cap, -1, np.int32)
        self.color = np.full(v_cap, -1, np.int8)
        self.st = np.zeros(8, np.int64)
        self.st[OUTER_H] = -1
        self.pending = None   # holes awaiting a filler, counted on demand

    @property
    def arrays(self):
        return MeshArrays(self.origin, self.twin, self.nxt, self.prv, self.face,
                          self.label, self.color, self.st)

    def reserve(self, n_v, n_he):
        need_v = int(self.st[N_V]) + n_v
        need_he = int(self.st[N_HE]) + n_he
        if need_he >= 2 ** 31 or need_v >= 2 ** 31:
            raise MemoryError("mesh exceeds int32 indexing")
        if need_v > self.label.shape[0]:
            n = max(need_v, 2 * self.label.shape[0])
            self.label = _grow(self.label, n, -1)
            self.color = _grow(self.color, n, -1)
        if need_he > self.origin.shape[0]:
            n = max(need_he, 2 * self.origin.shape[0])
            self.origin = _grow(self.origin, n, -1)
            self.twin = _grow(self.twin, n, -1)
            self.nxt = _grow(self.nxt, n, -1)
            self.prv = _grow(self.prv, n, -1)
            self.face = _grow(self.face, n, DEAD)

    def copy(self):
        out = HalfEdgeMesh.__new__(HalfEdgeMesh)
        for k in ("origin", "twin", "nxt", "prv", "face", "label", "color", "st"):
            setattr(out, k, getattr(self, k).copy())
        out.pending = self.pending
        return out

    # counters
    @property
    def n_vertices(self):
        return int(self.st[N_V])

    @property
    def n_edges(self):
        return int(self.st[N_HE] - self.st[N_DEAD]) // 2

    @property
    def n_triangles(self):
        return int(self.st[N_TRI])

    @property
    def n_faces(self):
        live = self.origin[: self.st[N_HE]] >= 0
        faces = self.face[: self.st[N_HE]][live]
        ncyc = 0
        for tag in (OUTER, HOLE):
            hs = np.flatnonzero(live & (self.face[: self.st[N_HE]] == tag))
            seen = set()
            for h in hs:
                if h in seen:
                    continue
                ncyc += 1
                g = h
                while g not in seen:
                    seen.add(g)
                    g = int(self.nxt[g])
        return len(np.unique(faces[faces >= 0])) + ncyc

    @property
    def outer_edge(self):
        return int(self.st[OUTER_H])

    @property
    def frontier_size(self):
        return int(self.st[OUTER_LEN])

    def dest(self, h):
        return int(self.origin[self.nxt[h]])

    def cycle(self, h):
        out = [int(h)]
        g = int(self.nxt[h])
        while g != h:
            out.append(g)
            g = int(self.nxt[g])
        return out

    def frontier(self, h=None):
        """Frontier vertices read from the cursor ``origin(h)`` away from ``dest(h)``."""
        h = self.outer_edge if h is None else h
        out = [int(self.origin[h])]
        g = int(self.prv[h])
        while g != h:
            out.append(int(self.origin[g]))
            g = int(self.prv[g])
        return out

    def live_edges(self):
        n = int(self.st[N_HE])
        h = np.arange(n)
        keep = (self.origin[:n] >= 0) & (h < self.twin[:n])
        return np.stack([self.origin[:n][keep], self.origin[self.twin[:n][keep]]], axis=1)


@dataclass(frozen=True)
class Hole:
    """A detached cycle awaiting a filler; ``handle`` is one of its half-edges."""

    handle: int
    length: int


def init_root():
    mesh = HalfEdgeMesh()
    init_root_arrays(mesh.arrays)
    return mesh


def polygon(m):
    """An (m+2)-gon with an empty interior; returns (mesh, hole)."""
    if m < 0:
        raise MeshError("m must be non-negative")
    mesh = HalfEdgeMesh(m + 2, 2 * (m + 2))
    h = polygon_arrays(mesh.arrays, m)
    return mesh, Hole(int(h), m + 2)


def _check_frontier_edge(mesh, edge):
    if not 0 <= edge < mesh.st[N_HE] or mesh.origin[edge] < 0 or mesh.face[edge] != OUTER:
        raise MeshError(f"half-edge {edge} is not on the frontier")


def _debug_check(mesh, what):
    if not DEBUG:
        return
    if DEBUG >= 2:
        msg = validate(mesh, expect_outer=True)
        if msg is not None:
            raise MeshError(f"{what}: {msg}")
        return
    if mesh.pending is None:
        mesh.pending = mesh.n_faces - mesh.n_triangles - 1
    faces = mesh.n_triangles + 1 + mesh.pending
    if mesh.n_vertices - mesh.n_edges + faces != 2:
        raise MeshError(f"{what}: Euler relation fails")


def _count_hole(mesh, delta):
    if mesh.pending is not None:
        mesh.pending += delta


def peel_attach_new(mesh, edge, color=-1):
    """Attach a triangle with a fresh vertex on a frontier half-edge."""
    _check_frontier_edge(mesh, edge)
    mesh.reserve(1, 4)
    y = int(peel_new(mesh.arrays, edge, color))
    _debug_check(mesh, "peel_attach_new")
    return y


def peel_attach_back(mesh, edge, k, side):
    """Join ``edge`` to the frontier vertex ``k`` steps away on ``side``.

    RIGHT counts from the cursor ``origin(edge)``; LEFT counts from
    ``dest(edge)``.  The k swallowed frontier vertices end up on the boundary
    of the returned hole.
    """
    _check_frontier_edge(mesh, edge)
    length = mesh.frontier_size
    m = length - 2
    if not 1 <= k <= m:
        raise MeshError(f"k={k} out of range 1..{m}")
    if side not in (RIGHT, LEFT):
        raise MeshError("side must be RIGHT or LEFT")
    mesh.reserve(0, 4)
    a = mesh.arrays
    i = k if side == RIGHT else m + 1 - k
    peel_split(a, edge, i, length)
    ha, hb = int(mesh.st[LAST_A]), int(mesh.st[LAST_B])
    hole_h, keep = (ha, hb) if side == RIGHT else (hb, ha)
    n = tag_cycle(a, hole_h, HOLE)
    mesh.st[OUTER_H] = keep
    mesh.st[OUTER_LEN] = length - k
    _count_hole(mesh, 1)
    _debug_check(mesh, "peel_attach_back")
    return Hole(hole_h, int(n))


def glue_hole(mesh, hole, filler=None):
    """Fill ``hole`` with ``filler`` (a triangulated polygon) or, for a 2-gon, by gluing.

    The filler's outer half-edge is matched to ``hole.handle``.
    """
    if mesh.face[hole.handle] != HOLE or cycle_length(mesh.arrays, hole.handle) != hole.length:
        raise MeshError("not a pending hole")
    if filler is None:
        if hole.length != 2:
            raise MeshError("only a 2-gon can be closed without a filler")
        glue_two_gon(mesh.arrays, hole.handle)
        _count_hole(mesh, -1)
        _debug_check(mesh, "glue_hole")
        return
    if filler.frontier_size != hole.length:
        raise MeshError(f"filler boundary {filler.frontier_size} != hole boundary {hole.length}")
    fn = int(filler.st[N_HE])
    if np.any(filler.face[:fn][filler.origin[:fn] >= 0] == HOLE):
        raise MeshError("filler has unfilled holes")
    L = hole.length
    g = [hole.handle]
    for _ in range(L - 1):
        g.append(int(mesh.nxt[g[-1]]))
    f = [filler.outer_edge]
    for _ in range(L - 1):
        f.append(int(filler.prv[f[-1]]))
    vmap = np.full(filler.n_vertices, -1, np.int64)
    for gj, fj in zip(g, f):
        vmap[filler.origin[filler.twin[fj]]] = mesh.origin[gj]
    inner = np.flatnonzero(vmap < 0)
    nv0 = mesh.n_vertices
    vmap[inner] = nv0 + np.arange(inner.size)
    keep = np.flatnonzero((filler.origin[:fn] >= 0) & (filler.face[:fn] != OUTER))
    hmap = np.full(fn, -1, np.int64)
    nhe0 = int(mesh.st[N_HE])
    hmap[keep] = nhe0 + np.arange(keep.size)
    mesh.reserve(inner.size, keep.size)
    new = hmap[keep]
    mesh.origin[new] = vmap[filler.origin[keep]]
    mesh.nxt[new] = hmap[filler.nxt[keep]]
    mesh.prv[new] = hmap[filler.prv[keep]]
    mesh.face[new] = filler.face[keep] + mesh.st[N_TRI]
    mesh.twin[new] = hmap[filler.twin[keep]]
    for gj, fj in zip(g, f):
        inside = hmap[filler.twin[fj]]
        other = int(mesh.twin[gj])
        mesh.twin[inside] = other
        mesh.twin[other] = inside
        mesh.origin[gj] = -1
        mesh.face[gj] = DEAD
    mesh.label[nv0: nv0 + inner.size] = filler.label[inner]
    mesh.color[nv0: nv0 + inner.size] = filler.color[inner]
    mesh.st[N_V] += inner.size
    mesh.st[N_HE] += keep.size
    mesh.st[N_TRI] += filler.n_triangles
    mesh.st[N_DEAD] += L
    _count_hole(mesh, -1)
    _debug_check(mesh, "glue_hole")


def bfs_distances(mesh, source):
    src = np.atleast_1d(np.asarray(source, np.int64))
    if np.any((src < 0) | (src >= mesh.n_vertices)):
        raise MeshError("source vertex out of range")
    return bfs(mesh.arrays, src)


def validate(mesh, expect_outer=True):
    """Structural check.  Returns None when valid, else a violation string."""
    code, h = _validate(mesh.arrays, expect_outer)
    if code == 0:
        return None
    where = "" if h < 0 else f" at half-edge {h} (origin {mesh.origin[h]})"
    return _VIOLATIONS[code] + where


def export_edges(mesh, path):
    e = mesh.live_edges()
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {len(e)}\n")
        np.savetxt(fh, e, fmt="%d")


def export_vertices(mesh, path, distance=None):
    n = mesh.n_vertices
    dist = np.full(n, -1) if distance is None else np.asarray(distance)
    colors = {1: "black", 0: "white", -1: ""}
    with open(path, "w") as fh:
        fh.write("id,distance,color\n")
        for v in range(n):
            d = "" if dist[v] < 0 else str(int(dist[v]))
            fh.write(f"{v},{d},{colors[int(mesh.color[v])]}\n")
