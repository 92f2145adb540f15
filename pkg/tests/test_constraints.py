import itertools

import numpy as np
import pytest

from constrained_spn import circuit as C
from constrained_spn.circuit import full_joint_circuit, mixture_circuit
from constrained_spn.constraints import (
    CLOSED_WORLD,
    ConditionalEquality,
    ConstraintError,
    Independence,
    InterventionalEquality,
    ResidualSystem,
    ResidualTerm,
    compile_conditional,
    compile_constraints,
    compile_independence,
    compile_interventional,
    degree_probe,
    residual_degrees,
    residual_jacobian,
    residual_values,
)
from constrained_spn.oracle import JointTable, check_constraint

from conftest import central_diff, rel_err, table_from_thetas

NAMES3 = ["X1", "X2", "X3"]


def golden_equations(theta):
    """The four hand-expanded independence equations over theta_1..theta_8."""
    t = dict(zip(range(1, 9), theta))
    x1 = t[1] + t[3] + t[5] + t[7]
    x2 = t[1] + t[2] + t[6] + t[7]
    nx1 = t[2] + t[4] + t[6] + t[8]
    nx2 = t[3] + t[4] + t[5] + t[8]
    return np.array([
        (t[1] + t[7]) - x1 * x2,
        (t[3] + t[5]) - x1 * nx2,
        (t[2] + t[6]) - nx1 * x2,
        (t[4] + t[8]) - nx1 * nx2,
    ])


# -- compilation shape ----------------------------------------------------------


def test_golden_system_has_four_residuals():
    c = full_joint_circuit(NAMES3, np.full(8, 1 / 8))
    assert len(compile_independence(Independence("X1", "X2"), c)) == 4


def test_golden_equations_match():
    c = full_joint_circuit(NAMES3, np.full(8, 1 / 8))
    system = compile_independence(Independence("X1", "X2"), c)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        raw = rng.uniform(0.0, 1.0, 8)
        theta = raw / raw.sum()  # theta_i are probabilities
        values = residual_values(system, c, table_from_thetas(raw))
        worst = max(worst, np.max(np.abs(values - golden_equations(theta))))
    assert worst < 1e-12


def test_residual_formatting(pair_circuit):
    system = compile_independence(Independence("X1", "X2"), pair_circuit)
    assert system.format_residual(0) == "+P(X1=1,X2=1) -P(X1=1)*P(X2=1)"
    system = compile_conditional(ConditionalEquality("X1", "X2"), pair_circuit)
    assert system.format_residual(0) == "+P(X1=1,X2=1)*P(X2=0) -P(X1=1,X2=0)*P(X2=1)"


@pytest.mark.parametrize("constraint,count", [
    (ConditionalEquality("X1", "X2"), 2),
    (ConditionalEquality("X1", "X2", {"X3": 1}), 2),
    (ConditionalEquality("X1", "X2", condition_on_rest=True), 2 * 4),
    (Independence("X1", "X2"), 4),
    (Independence("X1", "X2", ["X3"]), 8),
    (Independence("X1", "X2", ["X3", "X4"]), 16),
    (Independence("X1", "X2", {"X3": 0, "X4": 1}), 4),
    (InterventionalEquality("X1", (), ("X2",)), 2),
    (InterventionalEquality("X1", ("X2",), ("X2", "X3")), 4),
    (InterventionalEquality("X1", ("X2",)), 8),
])
def test_residual_counts(constraint, count):
    c = full_joint_circuit(["X1", "X2", "X3", "X4"], np.full(16, 1 / 16))
    assert len(compile_constraints([constraint], c)) == count


@pytest.mark.parametrize("bad", [
    ConditionalEquality("X1", "X1"),
    ConditionalEquality("X1", "X2", {"X1": 1}),
    ConditionalEquality("X1", "X2", {"X3": 1}, condition_on_rest=True),
    ConditionalEquality("X1", "Q"),
    Independence("X1", "X1"),
    Independence("X1", "X2", ["X1"]),
    InterventionalEquality("X1", ("X1",)),
    InterventionalEquality("X1", ("X2",), ("X3",)),
    InterventionalEquality("X1", (), ("X1",)),
])
def test_invalid_constraints(bad):
    c = full_joint_circuit(NAMES3, np.full(8, 1 / 8))
    with pytest.raises(ConstraintError):
        compile_constraints([bad], c)


def test_enumeration_cap():
    names = [f"V{i}" for i in range(19)]
    c = mixture_circuit(names, 1, np.random.default_rng(0))
    with pytest.raises(ConstraintError, match="16"):
        compile_conditional(ConditionalEquality("V0", "V1", condition_on_rest=True), c)
    with pytest.raises(ConstraintError, match="16"):
        compile_independence(Independence("V0", "V1", names[2:]), c)
    with pytest.raises(ConstraintError, match="16"):
        compile_interventional(InterventionalEquality("V0"), c)


def test_interventional_provenance_records_assumption(chain_circuit):
    system = compile_interventional(InterventionalEquality("X2", ("X1",), ("X1",)), chain_circuit)
    assert all(CLOSED_WORLD in p.assumptions for p in system.provenance)
    assert all(p.kind == "interventional" for p in system.provenance)


# -- residual values -------------------------------------------------------------


def test_value_examples(pair_circuit, uniform_circuit):
    cond = compile_conditional(ConditionalEquality("X1", "X2"), pair_circuit)
    assert residual_values(cond, pair_circuit)[0] == pytest.approx(0.15, abs=1e-15)
    ind = compile_independence(Independence("X1", "X2"), pair_circuit)
    assert residual_values(ind, pair_circuit)[0] == pytest.approx(0.15, abs=1e-15)
    np.testing.assert_allclose(residual_values(cond, uniform_circuit), 0.0, atol=1e-16)
    np.testing.assert_allclose(residual_values(ind, uniform_circuit), 0.0, atol=1e-16)


def test_product_form_satisfies_independence():
    rng = np.random.default_rng(4)
    p = rng.uniform(0.05, 0.95, 3)
    probs = np.array([np.prod([p[i] if (idx >> i) & 1 else 1 - p[i] for i in range(3)]) for idx in range(8)])
    c = full_joint_circuit(NAMES3, probs)
    for pair in itertools.combinations(NAMES3, 2):
        vals = residual_values(compile_independence(Independence(*pair), c), c)
        np.testing.assert_allclose(vals, 0.0, atol=1e-15)


def test_empty_parents_match_conditional_up_to_sign(pair_circuit):
    do = compile_interventional(InterventionalEquality("X2", (), ("X1",)), pair_circuit)
    cond = compile_conditional(ConditionalEquality("X1", "X2"), pair_circuit)
    np.testing.assert_allclose(residual_values(do, pair_circuit), -residual_values(cond, pair_circuit), atol=1e-16)


def test_chain_interventional_residuals_vanish(chain_circuit):
    system = compile_interventional(InterventionalEquality("X2", ("X1",), ("X1",)), chain_circuit)
    assert len(system) == 2
    assert np.max(np.abs(residual_values(system, chain_circuit))) < 1e-9
    # the reverse direction is a real causal effect
    system = compile_interventional(InterventionalEquality("X1", (), ("X2",)), chain_circuit)
    assert np.max(np.abs(residual_values(system, chain_circuit))) > 0.1


def test_degenerate_circuit_rejected():
    c = full_joint_circuit(["X1", "X2"], np.zeros(4))
    system = compile_independence(Independence("X1", "X2"), c)
    with pytest.raises(C.DegenerateCircuitError):
        residual_values(system, c)


@pytest.mark.parametrize("seed", range(10))
def test_root_rescaling_invariance(seed):
    rng = np.random.default_rng(seed)
    c = mixture_circuit(["A", "B", "D", "E"], 3, rng)
    system = compile_constraints([
        Independence("A", "B", ["D"]),
        ConditionalEquality("A", "D", condition_on_rest=True),
        InterventionalEquality("B", ("A",)),
    ], c)
    w = c.weights
    w[c.root_slice()] *= rng.uniform(0.01, 100.0)
    delta = residual_values(system, c, w) - residual_values(system, c)
    assert np.max(np.abs(delta)) < 1e-12


def test_custom_system_and_addition(pair_circuit):
    single = ResidualSystem(["X1", "X2"], [(ResidualTerm(+1, ((("X1", 1),),)),)])
    assert residual_values(single, pair_circuit)[0] == pytest.approx(0.5)
    both = single + compile_independence(Independence("X1", "X2"), pair_circuit)
    assert len(both) == 5
    with pytest.raises(ConstraintError):
        ResidualSystem(["X1"], [(ResidualTerm(+1, ()),)])


# -- Jacobian ------------------------------------------------------------------


def test_single_factor_jacobian_is_marginal_gradient(pair_circuit):
    single = ResidualSystem(["X1", "X2"], [(ResidualTerm(+1, ((("X1", 1),),)),)])
    _, g = C.subcircuit_value_and_grad(pair_circuit, {"X1": 1})
    np.testing.assert_allclose(residual_jacobian(single, pair_circuit)[0], g, atol=1e-15)


def test_uniform_independence_jacobian(uniform_circuit):
    system = compile_independence(Independence("X1", "X2"), uniform_circuit)
    fd = central_diff(lambda w: residual_values(system, uniform_circuit, w), uniform_circuit.weights)
    assert rel_err(residual_jacobian(system, uniform_circuit), fd) < 1e-5


@pytest.mark.parametrize("seed", range(50))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    names = ["A", "B", "D"]
    if seed % 2:
        c = full_joint_circuit(names, rng.uniform(0.1, 1.0, 8))
    else:
        c = mixture_circuit(names, 2, rng)
    system = compile_constraints([
        Independence("A", "B"),
        Independence("A", "B", {"D": 1}),
        ConditionalEquality("D", "A", condition_on_rest=True),
        InterventionalEquality("B", ("A",), ("A", "D")),
    ], c)
    fd = central_diff(lambda w: residual_values(system, c, w), c.weights)
    assert rel_err(residual_jacobian(system, c), fd) < 1e-5


# -- degree probe ----------------------------------------------------------------


def _block_direction(rng, circuit, var, value):
    """Random direction on the root weights of joint states with var=value."""
    i = circuit.var_index(var)
    d = np.zeros(circuit.n_weights)
    rs = circuit.root_slice()
    idx = np.arange(rs.start, rs.stop)
    states = idx - rs.start
    block = idx[((states >> i) & 1) == value]
    d[block] = rng.normal(size=len(block))
    return d


@pytest.mark.parametrize("kind", ["conditional", "interventional"])
def test_linear_along_disjoint_block(kind):
    rng = np.random.default_rng(7)
    c = full_joint_circuit(NAMES3, rng.uniform(0.1, 1.0, 8))
    if kind == "conditional":
        system = compile_conditional(ConditionalEquality("X1", "X2"), c)
        attr = "X2"
    else:
        system = compile_interventional(InterventionalEquality("X3", ("X1",), ("X1", "X2")), c)
        attr = "X3"
    for _ in range(50):
        d = _block_direction(rng, c, attr, int(rng.integers(0, 2)))
        assert degree_probe(system, c, d) == 1


def test_independence_quadratic_generic():
    rng = np.random.default_rng(8)
    c = full_joint_circuit(NAMES3, rng.uniform(0.1, 1.0, 8))
    system = compile_independence(Independence("X1", "X2"), c)
    for _ in range(50):
        assert degree_probe(system, c, rng.normal(size=c.n_weights)) == 2


def test_conditional_is_bilinear_overall():
    rng = np.random.default_rng(9)
    c = full_joint_circuit(NAMES3, rng.uniform(0.1, 1.0, 8))
    system = compile_conditional(ConditionalEquality("X1", "X2"), c)
    degs = residual_degrees(system, c, rng.normal(size=c.n_weights))
    assert degs.max() <= 2


def test_zero_direction_rejected(pair_circuit):
    system = compile_independence(Independence("X1", "X2"), pair_circuit)
    with pytest.raises(ValueError):
        degree_probe(system, pair_circuit, np.zeros(pair_circuit.n_weights))


# -- oracle soundness --------------------------------------------------------------


def _bn_table(rng, names, parents):
    """Joint table of a binary network; ``parents`` maps a name to its parent list."""
    cpt = {v: rng.uniform(0.1, 0.9, 2 ** len(parents[v])) for v in names}
    probs = np.ones(2 ** len(names))
    for idx in range(len(probs)):
        bits = {v: (idx >> i) & 1 for i, v in enumerate(names)}
        for v in names:
            key = sum(bits[p] << j for j, p in enumerate(parents[v]))
            p1 = cpt[v][key]
            probs[idx] *= p1 if bits[v] else 1 - p1
    return probs


def _satisfying(rng, kind):
    names = ["A", "B", "D", "E"]
    if kind == "independence":
        # A and B share only the common cause D
        probs = _bn_table(rng, names, {"D": [], "E": ["D"], "A": ["D"], "B": ["D", "E"]})
        return names, probs, Independence("A", "B", ["D", "E"])
    if kind == "context":
        probs = _bn_table(rng, names, {"D": [], "E": [], "A": ["D"], "B": ["D"]})
        return names, probs, Independence("A", "B", {"D": 1})
    if kind == "conditional":
        # Y=B depends on D only, so it cannot depend on A given the rest
        probs = _bn_table(rng, names, {"D": [], "A": ["D"], "B": ["D"], "E": ["A", "B"]})
        return names, probs, ConditionalEquality("B", "A", {"D": 0})
    # B causes A; intervening on A moves nothing among its parents' side
    probs = _bn_table(rng, names, {"B": [], "D": ["B"], "A": ["B", "D"], "E": ["B"]})
    return names, probs, InterventionalEquality("A", ("B", "D"))


@pytest.mark.parametrize("kind", ["independence", "context", "conditional", "interventional"])
@pytest.mark.parametrize("seed", range(5))
def test_oracle_soundness(kind, seed):
    rng = np.random.default_rng(100 + seed)
    names, probs, constraint = _satisfying(rng, kind)
    c = full_joint_circuit(names, probs)
    system = compile_constraints([constraint], c)
    table = JointTable(names, probs)

    ok, _ = check_constraint(table, constraint, 1e-8)
    assert ok
    assert np.max(np.abs(residual_values(system, c))) < 1e-9

    # a generic table breaks both
    noisy = probs * rng.uniform(0.5, 1.5, len(probs))
    c2 = full_joint_circuit(names, noisy)
    ok, _ = check_constraint(JointTable(names, noisy), constraint, 1e-8)
    assert not ok
    assert np.max(np.abs(residual_values(system, c2))) >= 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_oracle_soundness_random_circuits(seed):
    # on random circuits with n <= 8 the two checks agree in both directions
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    names = [f"V{i}" for i in range(n)]
    c = mixture_circuit(names, int(rng.integers(1, 4)), rng)
    table = JointTable(names, c.values(C.complete_assignments(n)))
    constraints = [
        Independence("V0", "V1"),
        Independence("V0", "V2", {"V1": 1}),
        ConditionalEquality("V1", "V2"),
        InterventionalEquality("V2", ("V0",), ("V0", "V1")),
    ]
    for constraint in constraints:
        system = compile_constraints([constraint], c)
        small = np.max(np.abs(residual_values(system, c))) < 1e-9
        ok, _ = check_constraint(table.normalize(), constraint, 1e-8)
        assert small == ok
