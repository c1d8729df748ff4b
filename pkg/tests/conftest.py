import numpy as np
import pytest

from hbnitsche.hmesh import initial_mesh, refine


def random_refinements(seed, steps=5, base=1, m=2, degree=2, max_marked=3):
    """Sequence of meshes from a uniform base mesh with random markings."""
    rng = np.random.default_rng(seed)
    mesh = initial_mesh(base, m=m, degree=degree)
    out = [(mesh, [])]
    for _ in range(steps):
        cells = mesh.cells
        k = int(rng.integers(1, max_marked + 1))
        marked = [cells[i] for i in rng.choice(len(cells), size=min(k, len(cells)), replace=False)]
        mesh = refine(mesh, marked)
        out.append((mesh, marked))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, printed once at the end of the session
VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
