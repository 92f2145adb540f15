"""Brute-force ground truth over explicit joint tables.

Nothing here touches circuit internals beyond evaluating complete
assignments, so these functions can check the circuit queries and the
compiled residuals independently.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .circuit import MAX_ENUM_VARS, Circuit, CircuitError, ZeroEvidenceError, complete_assignments
from .constraints import ConditionalEquality, Independence, InterventionalEquality
from .dataio import Dataset
from .rng import Xoshiro256


class OracleError(ValueError):
    pass


@dataclass
class JointTable:
    """Probabilities of all 2**n assignments; variable i is bit i of the index."""

    variables: list
    probs: np.ndarray

    def __post_init__(self):
        self.variables = list(self.variables)
        self.probs = np.asarray(self.probs, dtype=float)
        n = len(self.variables)
        if self.probs.shape != (2**n,):
            raise OracleError(f"table over {n} variables needs {2**n} entries, got {self.probs.shape}")
        if np.any(self.probs < 0):
            raise OracleError("table entries must be non-negative")
        self.bits = complete_assignments(n)

    @property
    def normalized(self) -> bool:
        return abs(self.probs.sum() - 1.0) <= 1e-9

    def normalize(self) -> "JointTable":
        return JointTable(self.variables, self.probs / self.probs.sum())

    def index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise OracleError(f"unknown variable {name!r}") from None

    def mask(self, query: Mapping[str, int] | None) -> np.ndarray:
        m = np.ones(len(self.probs), dtype=bool)
        for k, v in (query or {}).items():
            m &= self.bits[:, self.index(k)] == v
        return m


def enumerate_joint(circuit: Circuit) -> JointTable:
    n = circuit.n_vars
    if n > MAX_ENUM_VARS:
        raise OracleError(f"enumeration limited to {MAX_ENUM_VARS} variables, got {n}")
    s = circuit.values(complete_assignments(n))
    z = circuit.values(circuit.evidence(None))[0]
    if not z > 0:
        raise CircuitError("circuit has zero total mass (S(empty) = 0)")
    return JointTable(circuit.names, s / z)


def table_marginal(table: JointTable, query: Mapping[str, int] | None = None) -> float:
    return float(table.probs[table.mask(query)].sum() / table.probs.sum())


def table_conditional(table: JointTable, target: Mapping[str, int], evidence: Mapping[str, int] | None = None) -> float:
    evidence = dict(evidence or {})
    if set(target) & set(evidence):
        raise OracleError("target and evidence overlap")
    den = table_marginal(table, evidence)
    if den == 0:
        raise ZeroEvidenceError(f"evidence {evidence} has probability zero")
    return table_marginal(table, {**target, **evidence}) / den


def table_do(table: JointTable, intervened: str, value: int, parents: Sequence[str] = (),
             strict: bool = True) -> JointTable:
    """Post-intervention distribution over the remaining variables.

    p(r) = Pr(r, A=value) / Pr(A=value | pa(r)), where pa(r) are the parent
    values inside r. Parent configurations with zero mass get p = 0. A
    positive-mass configuration with Pr(A=value | pa) = 0 makes the
    intervention undefined: an error when ``strict``, otherwise the
    affected entries are NaN and the result is returned unnormalized.
    """
    ai = table.index(intervened)
    parents = list(parents)
    if intervened in parents:
        raise OracleError("parents must exclude the intervened variable")
    pidx = [table.index(p) for p in parents]
    probs = table.probs / table.probs.sum()
    bits = table.bits

    key = np.zeros(len(probs), dtype=np.int64)
    for j, i in enumerate(pidx):
        key |= bits[:, i].astype(np.int64) << j
    n_cfg = 1 << len(pidx)
    p_pa = np.bincount(key, weights=probs, minlength=n_cfg)
    sel = bits[:, ai] == value
    p_a_pa = np.bincount(key[sel], weights=probs[sel], minlength=n_cfg)

    joint = probs[sel]  # ascending index order == ascending index over remaining bits
    rkey = key[sel]
    out = np.zeros_like(joint)
    zero_mass = p_pa[rkey] == 0
    undefined = ~zero_mass & (p_a_pa[rkey] == 0)
    ok = ~zero_mass & ~undefined
    out[ok] = joint[ok] * p_pa[rkey[ok]] / p_a_pa[rkey[ok]]
    remaining = [v for v in table.variables if v != intervened]
    if undefined.any():
        if strict:
            raise OracleError(f"Pr({intervened}={value} | parents) = 0 on a parent configuration "
                              "with positive mass; the intervention is undefined")
        out[undefined] = np.nan
        return _raw_table(remaining, out)
    total = out.sum()
    if abs(total - 1.0) > 1e-9:
        raise OracleError(f"interventional distribution sums to {total!r}")
    return JointTable(remaining, out / total)


def _raw_table(variables, probs):
    t = object.__new__(JointTable)
    t.variables = list(variables)
    t.probs = probs
    t.bits = complete_assignments(len(variables))
    return t


def _project(table: JointTable, names: Sequence[str]) -> np.ndarray:
    """Marginal over ``names`` (NaN-propagating), indexed by their bits in order."""
    key = np.zeros(len(table.probs), dtype=np.int64)
    for j, n in enumerate(names):
        key |= table.bits[:, table.index(n)].astype(np.int64) << j
    out = np.zeros(1 << len(names))
    np.add.at(out, key, table.probs)
    return out


def _contexts(names):
    for vals in itertools.product((1, 0), repeat=len(names)):
        yield dict(zip(names, vals))


def check_constraint(table: JointTable, constraint, tol: float = 1e-8):
    """Directly test a constraint's defining equalities on a table.

    Returns ``(satisfied, max_violation)``; contexts of probability zero
    (and interventions undefined for a parent configuration) are skipped.
    Independence is checked in product form
    |Pr(a, b | g) - Pr(a | g) Pr(b | g)|.
    """
    worst = 0.0
    if isinstance(constraint, Independence):
        x, z = constraint.left, constraint.right
        if isinstance(constraint.given, Mapping):
            contexts = [dict(constraint.given)]
        else:
            contexts = list(_contexts(list(constraint.given or ())))
        for g in contexts:
            if table_marginal(table, g) == 0:
                continue
            for a, b in itertools.product((1, 0), repeat=2):
                lhs = table_conditional(table, {x: a, z: b}, g)
                rhs = table_conditional(table, {x: a}, g) * table_conditional(table, {z: b}, g)
                worst = max(worst, abs(lhs - rhs))
    elif isinstance(constraint, ConditionalEquality):
        y, a = constraint.target, constraint.attribute
        if constraint.condition_on_rest:
            rest = [v for v in table.variables if v not in (y, a)]
            contexts = list(_contexts(rest))
        else:
            contexts = [dict(constraint.context or {})]
        for g in contexts:
            if table_marginal(table, {a: 0, **g}) == 0 or table_marginal(table, {a: 1, **g}) == 0:
                continue
            for yv in (1, 0):
                p1 = table_conditional(table, {y: yv}, {a: 1, **g})
                p0 = table_conditional(table, {y: yv}, {a: 0, **g})
                worst = max(worst, abs(p1 - p0))
    elif isinstance(constraint, InterventionalEquality):
        a = constraint.intervened
        targets = constraint.targets
        if targets is None:
            targets = [v for v in table.variables if v != a]
        targets = list(targets)
        do0 = table_do(table, a, 0, constraint.parents, strict=False)
        do1 = table_do(table, a, 1, constraint.parents, strict=False)
        m0, m1 = _project(do0, targets), _project(do1, targets)
        diff = np.abs(m0 - m1)
        diff = diff[~np.isnan(diff)]
        if diff.size:
            worst = float(diff.max())
    else:
        raise TypeError(f"not a constraint: {constraint!r}")
    return worst <= tol, float(worst)


def sample_dataset(table: JointTable, m: int, seed: int) -> Dataset:
    """m i.i.d. rows by inverse CDF over the table, driven by xoshiro256**."""
    if m < 1:
        raise OracleError("sample size must be at least 1")
    probs = table.probs / table.probs.sum()
    cdf = np.cumsum(probs)
    rng = Xoshiro256(seed)
    u = rng.random_array(m)
    idx = np.searchsorted(cdf, u, side="right")
    last = int(np.flatnonzero(probs > 0)[-1])
    idx = np.minimum(idx, last)
    return Dataset(table.variables, table.bits[idx])
