import numpy as np
import pytest

from semitamed import kernels
from semitamed.model import SdaeProblem, builtin_paper_example


@pytest.fixture
def example():
    return builtin_paper_example()


def constant(M):
    M = np.array(M, dtype=float)
    return lambda t: M


def make_problem(A, B, f, g, X0, m, name="fixture", T=1.0, **kw):
    return SdaeProblem(name=name, d=len(X0), m=m, T=T, A=constant(A), B=constant(B),
                       f=f, g=g, X0=np.asarray(X0, float), constant_coefficients=True, **kw)


def random_index1_problem(seed, d=4, rank=2, m=2):
    """Constant-coefficient index-1 fixture built in hidden coordinates.

    With ``X = V y`` and equations mixed by ``U`` (both orthogonal), the
    system reads ``diag(S, 0) dy = (B~ y + f~(y)) dt + [G~; 0] dW``: cubic
    damping on the differential block, a linear and uniquely solvable
    algebraic block, noise only in the differential rows.
    """
    rng = np.random.default_rng(seed)
    r = rank
    U, _ = np.linalg.qr(rng.standard_normal((d, d)))
    V, _ = np.linalg.qr(rng.standard_normal((d, d)))
    E = np.diag(np.r_[rng.uniform(1.0, 2.0, r), np.zeros(d - r)])
    Bt = -np.eye(d) + 0.2 * rng.standard_normal((d, d))
    lin = 0.3 * rng.standard_normal((d, d))
    lin[r:] = 0.0
    C0 = 0.3 * rng.standard_normal((r, m))
    C1 = 0.3 * rng.standard_normal((r, m))

    # einsum rather than BLAS matmul: row results must not depend on batch size
    def f(t, x):
        y = np.einsum("ji,...j->...i", V, x)
        cubic = np.zeros_like(y)
        cubic[..., :r] = y[..., :r] ** 3
        return np.einsum("ij,...j->...i", U, np.einsum("ij,...j->...i", lin, y) - cubic)

    def g(t, x):
        y1 = np.einsum("j,...j->...", V[:, 0], x)[..., None]
        core = np.zeros(x.shape[:-1] + (d, m))
        core[..., :r, :] = C0 + C1 * np.sin(y1)[..., None]
        return np.einsum("ij,...jk->...ik", U, core)

    X0 = V @ rng.standard_normal(d)
    return make_problem(U @ E @ V.T, U @ Bt @ V.T, f, g, X0, m, name=f"random-{seed}")


@pytest.fixture(params=["cython", "python"])
def backend(request):
    previous = kernels.BACKEND
    try:
        kernels.set_backend(request.param)
    except ImportError:
        kernels.set_backend(previous)
        pytest.skip("compiled kernels not built")
    yield request.param
    kernels.set_backend(previous)


_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
