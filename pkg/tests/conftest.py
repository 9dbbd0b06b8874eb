import numpy as np
import pytest

from qbattery.core import BatteryHamiltonian


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_state(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_hamiltonian(d, rng):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return BatteryHamiltonian.from_matrix(0.5 * (g + g.conj().T))


def qubit_h():
    return BatteryHamiltonian.from_energies([-1.0, 1.0])


def qutrit_h():
    return BatteryHamiltonian.from_energies([-1.0, 0.0, 1.0])


def admissible_pairs(case, n, rng, step=1e-6, min_gap=1e-3, floor=0.01):
    """Random ``(p, dp)`` for the two tabulated orderings with ``||dp|| = step``.

    ``p`` keeps a margin ``min_gap`` between levels and ``floor`` from zero so
    that ``p +- dp`` keeps the ordering.
    """
    ps, dps = [], []
    while len(ps) < n:
        q = np.sort(rng.dirichlet(np.ones(3), size=4 * n), axis=1)  # ascending
        ok = (q[:, 0] >= floor) & (np.diff(q, axis=1).min(axis=1) >= min_gap)
        q = q[ok]
        if case == "global":
            p = q
        else:  # p1 >= p3 > p2
            p = q[:, [2, 0, 1]]
        dp = rng.standard_normal(p.shape)
        dp -= dp.mean(axis=1, keepdims=True)
        dp *= step / np.linalg.norm(dp, axis=1, keepdims=True)
        ps.extend(p)
        dps.extend(dp)
    return np.array(ps[:n]), np.array(dps[:n])


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def record(number, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE, key=lambda x: (str(x[0]).zfill(3), x[1])):
            terminalreporter.write_line(line)
