import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import settings

from mgmpcg.fem import BoundarySpec, DiffusionField, StructuredGrid, assemble
from mgmpcg.sparse import CsrMatrix

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile("default")


def laplacian_1d(n):
    main = 2.0 * np.ones(n)
    off = -np.ones(n - 1)
    return CsrMatrix.from_scipy(sp.diags([off, main, off], [-1, 0, 1]), symmetric=True)


def path_graph_laplacian(n):
    """Graph Laplacian of a path: constants are in its kernel."""
    L = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tolil()
    L[0, 0] = L[n - 1, n - 1] = 1.0
    return CsrMatrix.from_scipy(L.tocsr(), symmetric=True)


def grid_laplacian(n, kxx=1.0, kyy=1.0):
    """Q1 Dirichlet system on an n x n element grid with unit source."""
    grid = StructuredGrid(n, n)
    A, b = assemble(grid, DiffusionField.uniform(grid, kxx, kyy), BoundarySpec.all_dirichlet(0.0), f=1.0)
    return grid, A, b


def random_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.geomspace(1.0, cond, n)
    return (q * lam) @ q.T


def random_sparse(rng, nrows, ncols, nnz):
    """Random CSR matrix with exactly ``nnz`` distinct stored entries."""
    flat = rng.choice(nrows * ncols, size=nnz, replace=False)
    rows, cols = np.divmod(flat, ncols)
    return CsrMatrix.from_coo(rows, cols, rng.standard_normal(nnz), (nrows, ncols))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, text = marker.args
    # Setup time counts too: shared fixtures run the experiments.
    _, _, spent = _ACCEPTANCE.get(number, ("", "", 0.0))
    if rep.when == "setup" and rep.passed:
        _ACCEPTANCE[number] = ("", text, spent + rep.duration)
    elif rep.when == "call" or rep.when == "setup":
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _ACCEPTANCE[number] = (status, text, spent + rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, text, duration = _ACCEPTANCE[number]
        status = status or "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status:4s} ({duration:6.2f}s) {text}")
