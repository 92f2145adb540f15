import itertools

import numpy as np
import pytest

from constrained_spn import full_joint_circuit

PAIR = np.array([0.4, 0.1, 0.1, 0.4])

# three-variable canonical polynomial: theta_k multiplies the term listed here
# as (x1, x2, x3)
THETA_TERMS = [
    (1, 1, 1),  # theta1  X1 X2 X3
    (0, 1, 1),  # theta2 ~X1 X2 X3
    (1, 0, 1),  # theta3  X1 ~X2 X3
    (0, 0, 1),  # theta4 ~X1 ~X2 X3
    (1, 0, 0),  # theta5  X1 ~X2 ~X3
    (0, 1, 0),  # theta6 ~X1 X2 ~X3
    (1, 1, 0),  # theta7  X1 X2 ~X3
    (0, 0, 0),  # theta8 ~X1 ~X2 ~X3
]
THETA_INDEX = [x1 + 2 * x2 + 4 * x3 for x1, x2, x3 in THETA_TERMS]


def table_from_thetas(theta):
    probs = np.zeros(8)
    for t, idx in zip(theta, THETA_INDEX):
        probs[idx] = t
    return probs


def brute_marginal(probs, names, query):
    """Sum of table entries consistent with ``query``; independent of the package."""
    n = len(names)
    total = 0.0
    for idx in range(2**n):
        bits = [(idx >> i) & 1 for i in range(n)]
        if all(bits[names.index(k)] == v for k, v in query.items()):
            total += probs[idx]
    return total / sum(probs)


def chain_table():
    """X1 -> X2 with Pr(X1=1)=0.6, Pr(X2=1|X1=1)=0.9, Pr(X2=1|X1=0)=0.2."""
    p1 = {1: 0.6, 0: 0.4}
    p2 = {1: {1: 0.9, 0: 0.1}, 0: {1: 0.2, 0: 0.8}}
    probs = np.zeros(4)
    for x1, x2 in itertools.product((0, 1), repeat=2):
        probs[x1 + 2 * x2] = p1[x1] * p2[x1][x2]
    return probs


def rel_err(a, b):
    """Norm-wise relative error; the 1e-4 floor keeps central-difference
    rounding noise (about 1e-10 at h=1e-6) from dominating all-zero rows."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-4)
    return float(np.max(np.abs(a - b)) / scale)


def central_diff(f, w, h=1e-6):
    w = np.asarray(w, dtype=float)
    cols = []
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        cols.append((np.asarray(f(w + e)) - np.asarray(f(w - e))) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.fixture
def pair_circuit():
    return full_joint_circuit(["X1", "X2"], PAIR)


@pytest.fixture
def uniform_circuit():
    return full_joint_circuit(["X1", "X2"], np.full(4, 0.25))


@pytest.fixture
def chain_circuit():
    return full_joint_circuit(["X1", "X2"], chain_table())


# -- acceptance summary --------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): numbered acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    n, title = mark.args
    entry = _ACCEPTANCE.setdefault(n, {"title": title, "ok": True, "props": item.user_properties})
    if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[n]
        detail = ", ".join(f"{k}={v}" for k, v in e["props"])
        terminalreporter.write_line(f"criterion {n}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}  [{detail}]")
