import numpy as np
import pytest

from mixedpinn.autodiff import Jet, seed_point


def exact_jets(points, order=1, E=1.0, nu=0.3, k=1.0, alpha=1.0, T0=0.0):
    """Homogeneous closed-form fields as jets built from coordinate jets.

    The expressions are written out independently of ``mixedpinn.analytic`` so
    derivative slots come from jet arithmetic, not from the library.
    """
    x, y = seed_point(points[:, 0], points[:, 1], order)
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    beta = 2 * (lam + mu) * alpha
    a = beta / (2 * (lam + 2 * mu))
    T = 1.0 - x
    ux = a * x * (1.0 - x)
    ex = a * (1.0 - 2.0 * x)
    zero = 0.0 * x + 0.0 * y
    return {
        "u_x": ux,
        "u_y": zero,
        "sxx": (lam + 2 * mu) * ex - beta * (T - T0),
        "syy": lam * ex - beta * (T - T0),
        "sxy": zero,
        "T": T,
        "qx": zero + k,
        "qy": zero,
    }


def zero_jets(points, order=1, fields=("u_x", "u_y", "sxx", "syy", "sxy", "T", "qx", "qy")):
    n = points.shape[0]
    return {f: Jet(np.zeros((1 + 2 * (order >= 1) + 3 * (order >= 2), n))) for f in fields}


@pytest.fixture
def exact():
    return exact_jets


@pytest.fixture
def zeros():
    return zero_jets


@pytest.fixture
def rng():
    return np.random.default_rng(1234)



# -- acceptance reporting ----------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Callable ``report(number, ok, detail)`` that records one pass/fail line."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(number, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
