import numpy as np
import pytest

from uipt import _kernels as K
from uipt import triangulation as T
from uipt.peeling import sample_free


def random_peel(mesh, steps, gen, fill=True):
    """Drive the public mesh API with boundary-law steps; holes get free fillers."""
    holes = []
    for _ in range(steps):
        m = mesh.frontier_size - 2
        x = 1 if m == 0 else int(K.sample_step(gen, m))
        h = mesh.outer_edge
        if x == 1:
            T.peel_attach_new(mesh, h)
            continue
        side = T.RIGHT if gen.random() < 0.5 else T.LEFT
        hole = T.peel_attach_back(mesh, h, -x, side)
        if not fill:
            holes.append(hole)
            continue
        filler = sample_free(hole.length - 2, gen)
        if filler.n_triangles == 0:
            T.glue_hole(mesh, hole)
        else:
            T.glue_hole(mesh, hole, filler)
    return holes


@pytest.fixture
def peel_driver():
    return random_peel


@pytest.fixture(params=[1, 2], ids=["euler", "validate"])
def debug_mesh(monkeypatch, request):
    monkeypatch.setattr(T, "DEBUG", request.param)
    yield request.param


ACCEPTANCE = []


@pytest.fixture
def acceptance_log():
    def log(number, passed, detail):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return passed
    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
