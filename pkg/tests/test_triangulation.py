import numpy as np
import pytest

from uipt import triangulation as T
from uipt.peeling import sample_free


def euler(mesh):
    return mesh.n_vertices - mesh.n_edges + mesh.n_faces


def outer_vertices(mesh):
    return {int(mesh.origin[g]) for g in mesh.cycle(mesh.outer_edge)}


def test_init_root():
    mesh = T.init_root()
    assert (mesh.n_vertices, mesh.n_edges, mesh.n_faces) == (3, 3, 2)
    assert mesh.frontier_size == 3 and euler(mesh) == 2
    assert mesh.label[0] == 0 and list(mesh.label[1:3]) == [1, 1]
    assert T.validate(mesh) is None
    assert list(T.bfs_distances(mesh, 0)) == [0, 1, 1]


def test_attach_new():
    mesh = T.init_root()
    y = T.peel_attach_new(mesh, mesh.outer_edge)
    assert (mesh.n_vertices, mesh.n_edges, mesh.n_faces) == (4, 5, 3)
    assert mesh.frontier_size == 4 and euler(mesh) == 2
    assert mesh.label[y] == 1
    # the same position twice: two distinct vertices and still no loops
    x0 = mesh.origin[mesh.outer_edge]
    y1 = T.peel_attach_new(mesh, mesh.outer_edge)
    y2 = T.peel_attach_new(mesh, mesh.outer_edge)
    assert mesh.origin[mesh.outer_edge] == x0
    assert y1 != y2
    assert T.validate(mesh) is None
    e = mesh.live_edges()
    assert np.all(e[:, 0] != e[:, 1])


def test_attach_new_label_is_one_plus_min():
    mesh = T.init_root()
    T.peel_attach_new(mesh, mesh.outer_edge)
    for _ in range(5):
        h = mesh.outer_edge
        a, b = mesh.origin[h], mesh.dest(h)
        y = T.peel_attach_new(mesh, h)
        assert mesh.label[y] == 1 + min(mesh.label[a], mesh.label[b])


def test_attach_new_needs_frontier_edge():
    mesh = T.init_root()
    inner = mesh.twin[mesh.outer_edge]
    with pytest.raises(T.MeshError):
        T.peel_attach_new(mesh, int(inner))


def five_gon():
    mesh = T.init_root()
    T.peel_attach_new(mesh, mesh.outer_edge)
    T.peel_attach_new(mesh, mesh.outer_edge)
    assert mesh.frontier_size == 5
    return mesh


@pytest.mark.parametrize("side", [T.RIGHT, T.LEFT])
def test_attach_back(side):
    mesh = five_gon()
    hole = T.peel_attach_back(mesh, mesh.outer_edge, 1, side)
    assert hole.length == 2 and mesh.frontier_size == 4
    assert T.validate(mesh) is None and euler(mesh) == 2
    mesh = five_gon()
    hole = T.peel_attach_back(mesh, mesh.outer_edge, 3, side)
    assert hole.length == 4 and mesh.frontier_size == 2
    assert T.validate(mesh) is None
    with pytest.raises(T.MeshError):
        T.peel_attach_back(five_gon(), 0, 4, side)


def test_attach_back_sides():
    # RIGHT keeps the cursor's far side, LEFT swallows vertices next to dest(edge)
    mesh = five_gon()
    h = mesh.outer_edge
    front = mesh.frontier(h)          # x0, x1, ..., x4 read away from dest(h)
    hole = T.peel_attach_back(mesh, h, 1, T.RIGHT)
    hole_v = {int(mesh.origin[g]) for g in mesh.cycle(hole.handle)}
    assert hole_v == {front[0], front[1]}
    mesh = five_gon()
    h = mesh.outer_edge
    front = mesh.frontier(h)
    hole = T.peel_attach_back(mesh, h, 1, T.LEFT)
    hole_v = {int(mesh.origin[g]) for g in mesh.cycle(hole.handle)}
    assert hole_v == {front[-1], front[-2]}


def test_glue_empty_two_gon():
    mesh = five_gon()
    hole = T.peel_attach_back(mesh, mesh.outer_edge, 1, T.RIGHT)
    e0 = mesh.n_edges
    T.glue_hole(mesh, hole)
    assert mesh.n_edges == e0 - 1
    assert T.validate(mesh) is None and euler(mesh) == 2


def one_vertex_filler():
    for seed in range(1000):
        f = sample_free(0, np.random.default_rng(seed))
        if f.n_vertices == 3:
            return f
    raise AssertionError("no size-one filler found")


def test_glue_one_vertex_filler():
    mesh = five_gon()
    hole = T.peel_attach_back(mesh, mesh.outer_edge, 1, T.LEFT)
    v0, t0 = mesh.n_vertices, mesh.n_triangles
    T.glue_hole(mesh, hole, one_vertex_filler())
    assert mesh.n_vertices == v0 + 1 and mesh.n_triangles == t0 + 2
    assert T.validate(mesh) is None and euler(mesh) == 2


def test_glue_errors():
    mesh = five_gon()
    hole = T.peel_attach_back(mesh, mesh.outer_edge, 1, T.RIGHT)
    with pytest.raises(T.MeshError):
        T.glue_hole(mesh, hole, sample_free(1, np.random.default_rng(0)))
    mesh = five_gon()
    hole = T.peel_attach_back(mesh, mesh.outer_edge, 2, T.RIGHT)
    with pytest.raises(T.MeshError):
        T.glue_hole(mesh, hole)


def test_glue_counts_triangles():
    gen = np.random.default_rng(5)
    for _ in range(20):
        mesh = T.init_root()
        for _ in range(6):
            T.peel_attach_new(mesh, mesh.outer_edge)
        k = int(gen.integers(1, mesh.frontier_size - 1))
        hole = T.peel_attach_back(mesh, mesh.outer_edge, k, T.LEFT)
        filler = sample_free(hole.length - 2, gen)
        t0 = mesh.n_triangles
        if filler.n_triangles == 0:
            T.glue_hole(mesh, hole)
        else:
            T.glue_hole(mesh, hole, filler)
        assert mesh.n_triangles == t0 + filler.n_triangles
        assert T.validate(mesh) is None


def test_broken_twin_is_reported():
    mesh = five_gon()
    mesh.twin[0] = 0
    assert "twin" in T.validate(mesh)
    mesh = five_gon()
    mesh.st[T.OUTER_LEN] += 1
    assert "outer cycle length" in T.validate(mesh)


def test_polygon():
    for m in range(0, 6):
        mesh, hole = T.polygon(m)
        assert mesh.frontier_size == m + 2 and hole.length == m + 2
        assert T.validate(mesh) is None
    with pytest.raises(T.MeshError):
        T.polygon(-1)


def test_free_sample_is_valid_disc():
    gen = np.random.default_rng(3)
    for m in (0, 1, 2, 7, 30):
        for _ in range(10):
            f = sample_free(m, gen)
            assert f.frontier_size == m + 2
            assert T.validate(f) is None and euler(f) == 2
            assert sorted(outer_vertices(f)) == list(range(m + 2))


def test_random_peeling_stays_valid(peel_driver, debug_mesh):
    # debug mode validates after every mutation
    for seed in range(3):
        mesh = T.init_root()
        peel_driver(mesh, 400, np.random.default_rng(seed))
        assert T.validate(mesh) is None
        assert len(mesh.frontier()) == mesh.frontier_size
        assert set(mesh.frontier()) == outer_vertices(mesh)


def test_pending_holes_count_as_faces(peel_driver):
    mesh = T.init_root()
    holes = peel_driver(mesh, 300, np.random.default_rng(9), fill=False)
    assert holes
    assert T.validate(mesh) is None and euler(mesh) == 2


def test_bfs_triangle_inequality(peel_driver):
    mesh = T.init_root()
    peel_driver(mesh, 2000, np.random.default_rng(1))
    d = T.bfs_distances(mesh, 0)
    e = mesh.live_edges()
    assert d[0] == 0 and np.all(d >= 0)
    assert np.all(np.abs(d[e[:, 0]] - d[e[:, 1]]) <= 1)
    with pytest.raises(T.MeshError):
        T.bfs_distances(mesh, mesh.n_vertices)


def test_copy_is_independent():
    mesh = five_gon()
    c = mesh.copy()
    T.peel_attach_new(c, c.outer_edge)
    assert mesh.n_vertices == 5 and c.n_vertices == 6


def test_exports(tmp_path):
    mesh = five_gon()
    T.export_edges(mesh, tmp_path / "e.txt")
    lines = (tmp_path / "e.txt").read_text().splitlines()
    assert lines[0] == f"{mesh.n_vertices} {mesh.n_edges}"
    assert len(lines) == 1 + mesh.n_edges
    T.export_vertices(mesh, tmp_path / "v.csv", T.bfs_distances(mesh, 0))
    rows = (tmp_path / "v.csv").read_text().splitlines()
    assert rows[0] == "id,distance,color" and rows[1].startswith("0,0,")


def test_debug_mode_catches_bad_counters(monkeypatch):
    monkeypatch.setattr(T, "DEBUG", 1)
    mesh = five_gon()
    mesh.st[T.N_V] += 1
    with pytest.raises(T.MeshError, match="Euler"):
        T.peel_attach_new(mesh, mesh.outer_edge)
    monkeypatch.setattr(T, "DEBUG", 2)
    mesh = five_gon()
    mesh.twin[0] = 0
    with pytest.raises(T.MeshError, match="twin"):
        T.peel_attach_new(mesh, mesh.outer_edge)
