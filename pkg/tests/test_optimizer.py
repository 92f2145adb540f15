import itertools

import numpy as np
import pytest

from constrained_spn.circuit import full_joint_circuit, mixture_circuit
from constrained_spn.constraints import (
    ConditionalEquality,
    Independence,
    ResidualSystem,
    ResidualTerm,
    compile_conditional,
    compile_independence,
    residual_values,
)
from constrained_spn.dataio import Dataset, log_likelihood
from constrained_spn.optimizer import (
    CONVERGED,
    MAX_ITERS,
    NUMERICAL_FAILURE,
    TrainConfig,
    TrainError,
    fit,
    fit_hard,
    fit_mle,
    fit_soft,
    initial_weights,
    project_simplex,
)
from constrained_spn.oracle import JointTable, check_constraint, enumerate_joint, sample_dataset

from conftest import PAIR

NAMES = ["X1", "X2"]


@pytest.fixture(scope="module")
def dependent_data():
    return sample_dataset(JointTable(NAMES, PAIR), 1000, 42)


def empirical(data):
    idx = data.rows[:, 0].astype(int) + 2 * data.rows[:, 1]
    return np.bincount(idx, minlength=4) / data.m


def uniform2():
    return full_joint_circuit(NAMES, np.full(4, 0.25))


# -- projection ------------------------------------------------------------------


def brute_projection(v):
    """Nearest simplex point by enumerating active sets (small inputs only)."""
    best, best_d = None, np.inf
    n = len(v)
    for k in range(1, n + 1):
        for support in itertools.combinations(range(n), k):
            s = list(support)
            x = np.zeros(n)
            x[s] = v[s] - (v[s].sum() - 1.0) / k
            if np.all(x >= -1e-15):
                d = np.sum((x - v) ** 2)
                if d < best_d:
                    best, best_d = x, d
    return best


@pytest.mark.parametrize("v,expected", [
    ([0.5, 0.5], [0.5, 0.5]),
    ([2.0, 2.0], [0.5, 0.5]),
    ([1.2, -0.2], [1.0, 0.0]),
    ([3.0], [1.0]),
])
def test_projection_examples(v, expected):
    np.testing.assert_allclose(project_simplex(v), expected, atol=1e-15)


def test_projection_matches_active_set_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        v = rng.normal(scale=2.0, size=int(rng.integers(1, 7)))
        x = project_simplex(v)
        assert x.min() >= 0
        assert abs(x.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(x, brute_projection(v), atol=1e-12)


def test_projection_rejects_empty():
    with pytest.raises(ValueError):
        project_simplex([])


# -- configuration --------------------------------------------------------------------


@pytest.mark.parametrize("kwargs", [
    {"mode": "bayes"}, {"max_iters": 0}, {"step_size": 0.0}, {"tol_grad": 0.0},
    {"mu": 0.0}, {"rho": 1.0}, {"init": "zeros"},
])
def test_config_validation(kwargs):
    with pytest.raises(TrainError):
        TrainConfig(**kwargs)


def test_initializations():
    c = mixture_circuit(["A", "B", "D"], 3, np.random.default_rng(0))
    w = initial_weights(c, TrainConfig())
    for s in c.sum_slices():
        np.testing.assert_allclose(w[s], 1.0 / (s.stop - s.start))
    a = initial_weights(c, TrainConfig(init="random-dirichlet", seed=5))
    b = initial_weights(c, TrainConfig(init="dirichlet", seed=5))
    np.testing.assert_array_equal(a, b)
    for s in c.sum_slices():
        assert abs(a[s].sum() - 1.0) < 1e-12
    assert not np.array_equal(a, initial_weights(c, TrainConfig(init="random-dirichlet", seed=6)))


# -- maximum likelihood ----------------------------------------------------------------


def test_mle_recovers_empirical_frequencies(dependent_data):
    fitted, report = fit_mle(uniform2(), dependent_data)
    assert report.termination == CONVERGED
    np.testing.assert_allclose(fitted.weights, empirical(dependent_data), atol=1e-6)
    assert len(report.trace) == report.iterations


def test_mle_degenerate_dataset():
    data = Dataset(NAMES, np.ones((10, 2)))
    fitted, report = fit_mle(uniform2(), data)
    assert report.termination == CONVERGED
    assert fitted.weights[3] == pytest.approx(1.0, abs=1e-6)


def test_mle_uniform_dataset():
    data = Dataset(NAMES, [[0, 0], [1, 0], [0, 1], [1, 1]])
    fitted, _ = fit_mle(full_joint_circuit(NAMES, [0.1, 0.2, 0.3, 0.4]), data, TrainConfig(init="random-dirichlet"))
    np.testing.assert_allclose(fitted.weights, 0.25, atol=1e-6)


def test_mle_on_mixture_is_monotone():
    rng = np.random.default_rng(1)
    names = ["A", "B", "D", "E"]
    c = mixture_circuit(names, 3, rng)
    data = sample_dataset(JointTable(names, rng.dirichlet(np.ones(16))), 500, 3)
    fitted, report = fit_mle(c, data, TrainConfig(init="random-dirichlet", max_iters=300))
    assert report.termination in (CONVERGED, MAX_ITERS)
    assert np.all(np.diff(report.trace) >= -1e-12)
    assert log_likelihood(fitted, data) == pytest.approx(report.log_likelihood, abs=1e-12)


def test_simplex_invariant_after_every_step(dependent_data):
    c = mixture_circuit(NAMES, 2, np.random.default_rng(2))
    system = compile_independence(Independence("X1", "X2"), c)
    slices = c.sum_slices()
    seen = []

    def check(w):
        seen.append(1)
        assert w.min() >= 0
        for s in slices:
            assert abs(w[s].sum() - 1.0) < 1e-9

    fit_soft(c, dependent_data, system, TrainConfig(mode="soft", penalty_weights=10.0, max_iters=200), callback=check)
    fit_hard(c, dependent_data, system, TrainConfig(mode="hard", max_iters=3, max_inner_iters=50), callback=check)
    assert len(seen) > 100


def test_row_of_zero_probability_is_floored():
    c = full_joint_circuit(NAMES, [0.5, 0.5, 0.0, 0.0])
    data = Dataset(NAMES, [[0, 1]])
    fitted, report = fit_mle(c, data, TrainConfig(init=None, max_iters=1))
    assert report.log_likelihood == pytest.approx(np.log(1e-12))
    assert report.floored_rows == 1


# -- soft constraints ---------------------------------------------------------------------


def test_soft_zero_penalty_recovers_mle(dependent_data):
    c = uniform2()
    system = compile_independence(Independence("X1", "X2"), c)
    soft, _ = fit_soft(c, dependent_data, system, TrainConfig(mode="soft", penalty_weights=0.0))
    mle, _ = fit_mle(c, dependent_data)
    np.testing.assert_allclose(soft.weights, mle.weights, atol=1e-12)


@pytest.mark.slow
def test_soft_large_penalty(dependent_data):
    c = uniform2()
    system = compile_independence(Independence("X1", "X2"), c)
    config = TrainConfig(mode="soft", penalty_weights=1000.0, max_iters=20000)
    fitted, report = fit_soft(c, dependent_data, system, config)
    assert report.max_residual < 1e-3
    mle, _ = fit_mle(c, dependent_data)
    assert report.max_residual <= np.max(np.abs(residual_values(system, mle)))
    # penalized objective never ends below its start
    assert report.trace[-1] >= report.trace[0]


def test_soft_inactive_when_data_independent():
    data = Dataset(NAMES, [[0, 0], [1, 0], [0, 1], [1, 1]] * 5)
    c = uniform2()
    system = compile_independence(Independence("X1", "X2"), c)
    for lam in (1.0, 100.0):
        fitted, report = fit_soft(c, data, system, TrainConfig(mode="soft", penalty_weights=lam, init="random-dirichlet"))
        mle, _ = fit_mle(c, data)
        np.testing.assert_allclose(fitted.weights, mle.weights, atol=1e-4)


def test_soft_requires_soft_mode(dependent_data):
    c = uniform2()
    system = compile_independence(Independence("X1", "X2"), c)
    with pytest.raises(TrainError):
        fit_soft(c, dependent_data, system, TrainConfig(mode="hard"))
    with pytest.raises(TrainError):
        fit_soft(c, dependent_data, system, TrainConfig(mode="soft", penalty_weights=[1.0, 2.0]))


# -- hard constraints ---------------------------------------------------------------------


def test_hard_conditional_equality(dependent_data):
    c = uniform2()
    constraint = ConditionalEquality("X1", "X2")
    system = compile_conditional(constraint, c)
    fitted, report = fit_hard(c, dependent_data, system, TrainConfig(mode="hard"))
    assert report.termination == CONVERGED
    t = enumerate_joint(fitted)
    ok, worst = check_constraint(t, constraint, 1e-6)
    assert ok and worst < 1e-6
    assert len(report.trace) == report.iterations


def test_hard_already_satisfied():
    data = Dataset(NAMES, [[0, 0], [1, 0], [0, 1], [1, 1]] * 5)
    c = uniform2()
    system = compile_conditional(ConditionalEquality("X1", "X2"), c)
    fitted, report = fit_hard(c, data, system, TrainConfig(mode="hard"))
    mle, _ = fit_mle(c, data)
    assert report.termination == CONVERGED
    np.testing.assert_allclose(report.multipliers, 0.0, atol=1e-6)
    np.testing.assert_allclose(fitted.weights, mle.weights, atol=1e-4)


def test_hard_infeasible_terminates():
    data = Dataset(NAMES, np.ones((20, 2)))
    c = uniform2()
    q = lambda v: ((("X1", v),),)  # noqa: E731
    # Pr(X1=1) = 0 and Pr(X1=0) = 0 cannot hold together
    system = ResidualSystem(NAMES, [(ResidualTerm(+1, q(1)),), (ResidualTerm(+1, q(0)),)])
    _, report = fit_hard(c, data, system, TrainConfig(mode="hard", max_iters=100, max_inner_iters=200))
    assert report.termination == NUMERICAL_FAILURE
    assert report.mu > 1e12


def test_fit_dispatch(dependent_data):
    c = uniform2()
    with pytest.raises(TrainError):
        fit(c, dependent_data, None, TrainConfig(mode="soft"))
    _, report = fit(c, dependent_data, None, TrainConfig(max_iters=3))
    assert report.termination == MAX_ITERS
    assert report.iterations == 3


def test_report_text():
    data = Dataset(NAMES, [[0, 0], [1, 0], [0, 1], [1, 1]])
    c = uniform2()
    system = compile_conditional(ConditionalEquality("X1", "X2"), c)
    _, report = fit_hard(c, data, system, TrainConfig(mode="hard"))
    text = report.to_text()
    kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line and " " not in line)
    assert kv["termination"] == "converged"
    assert int(kv["iterations"]) == report.iterations
    assert float(kv["log_likelihood"]) == report.log_likelihood
    assert len(kv["residuals"].split(",")) == 2


# -- determinism ------------------------------------------------------------------------------


def test_identical_seeds_identical_traces(dependent_data):
    c = mixture_circuit(NAMES, 2, np.random.default_rng(3))
    system = compile_independence(Independence("X1", "X2"), c)
    config = TrainConfig(mode="soft", penalty_weights=5.0, init="random-dirichlet", seed=9, max_iters=300)
    a = fit_soft(c, dependent_data, system, config)
    b = fit_soft(c, dependent_data, system, config)
    assert a[1].trace == b[1].trace
    np.testing.assert_array_equal(a[0].weights, b[0].weights)
    other = fit_soft(c, dependent_data, system, TrainConfig(mode="soft", penalty_weights=5.0,
                                                            init="random-dirichlet", seed=10, max_iters=300))
    assert other[1].trace != a[1].trace
