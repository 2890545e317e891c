import numpy as np
import pytest

from shapeflow import geometry, mesh


@pytest.fixture(scope="session")
def annulus():
    return geometry.annulus()


@pytest.fixture(scope="session")
def annulus_meshes(annulus):
    """Annulus meshes at levels 0..3 (h0 = 0.5)."""
    m = mesh.build_mesh(annulus, 0.5, 0)
    out = [m]
    for _ in range(3):
        out.append(mesh.refine(out[-1]))
    return out


@pytest.fixture(scope="session")
def disk():
    """Unit disk split into wall and inflow arcs."""
    return geometry.channel_disk()


@pytest.fixture(scope="session")
def disk_mesh(disk):
    return mesh.build_mesh(disk, 0.25, 1)


@pytest.fixture(scope="session")
def blob():
    """Smooth non-symmetric annulus-like domain (Fourier outer wall)."""
    outer = geometry.fourier_curve(2.0, [(2, 0.15, 0.0), (3, 0.0, 0.1)])
    return geometry.annulus(1.0, 2.0, 0.0, 1.0, outer=outer)


@pytest.fixture(scope="session")
def blob_mesh(blob):
    return mesh.build_mesh(blob, 0.4, 1)


def rel(a, b):
    return np.max(np.abs(np.asarray(a) - np.asarray(b))) / max(1.0, np.max(np.abs(b)))


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, collected by test_acceptance."""
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
