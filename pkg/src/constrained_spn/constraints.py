"""Probabilistic constraints compiled into residual systems.

Every constraint becomes a list of residuals. A residual is a signed sum of
products of at most two marginal queries, written in cross-multiplied form
so that no residual ever divides by a probability:

* conditional equality  Pr(Y | A=1, c) = Pr(Y | A=0, c)
      Pr(Y=y, A=1, c) Pr(A=0, c) - Pr(Y=y, A=0, c) Pr(A=1, c)
* interventional equality  Pr(T | do(A=0)) = Pr(T | do(A=1))
      Pr(t, A=0) Pr(A=1, pa) - Pr(t, A=1) Pr(A=0, pa)
* independence  Pr(X, Z | g) = Pr(X | g) Pr(Z | g)
      Pr(X=a, Z=b, g) Pr(g) - Pr(X=a, g) Pr(Z=b, g)

A factor that is the empty query (probability 1) is dropped, so marginal
independence keeps the familiar form Pr(X=a, Z=b) - Pr(X=a) Pr(Z=b).

Values are enumerated 1 before 0, so the first residual of an independence
constraint is the (1, 1) cell.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .circuit import Circuit, DegenerateCircuitError, UnknownVariableError

MAX_ENUM = 16
CLOSED_WORLD = "closed-world (no unobserved confounders)"


class ConstraintError(ValueError):
    pass


@dataclass
class ConditionalEquality:
    """Pr(target | attribute=1, ctx) = Pr(target | attribute=0, ctx).

    With ``condition_on_rest`` the equality must hold for every complete
    assignment of the variables other than target and attribute.
    """

    target: str
    attribute: str
    context: dict = field(default_factory=dict)
    condition_on_rest: bool = False


@dataclass
class InterventionalEquality:
    """Pr(targets | do(intervened=0)) = Pr(targets | do(intervened=1)).

    ``parents`` is the declared parent set of the intervened variable; it
    must be contained in ``targets``. ``targets=None`` means every other
    variable of the circuit.
    """

    intervened: str
    parents: tuple = ()
    targets: tuple | None = None


@dataclass
class Independence:
    """left is independent of right.

    ``given`` may be ``None`` (marginal), a sequence of variable names
    (conditional independence, every context enumerated) or a mapping of
    names to values (one specific context).
    """

    left: str
    right: str
    given: object = None


Query = tuple  # sorted tuple of (name, value) pairs


@dataclass(frozen=True)
class ResidualTerm:
    sign: int
    factors: tuple  # 1 or 2 Query tuples


@dataclass(frozen=True)
class Provenance:
    constraint_index: int
    constraint: object
    kind: str
    label: str
    assumptions: tuple = ()


class ResidualSystem:
    """Residual functions of the circuit weights.

    ``residuals[k]`` is a tuple of :class:`ResidualTerm`; ``provenance[k]``
    records the constraint and case that produced it.
    """

    def __init__(self, variables: Sequence[str], residuals: Sequence, provenance: Sequence | None = None):
        self.variables = list(variables)
        self.residuals = [tuple(r) for r in residuals]
        if provenance is None:
            provenance = [Provenance(-1, None, "custom", "") for _ in self.residuals]
        self.provenance = list(provenance)
        for r in self.residuals:
            for t in r:
                if not 1 <= len(t.factors) <= 2:
                    raise ConstraintError("residual terms take one or two factors")
        self._build()

    def _build(self):
        queries: dict = {(): 0}
        rows, signs, f1, f2 = [], [], [], []
        for k, res in enumerate(self.residuals):
            for term in res:
                idx = [queries.setdefault(q, len(queries)) for q in term.factors]
                rows.append(k)
                signs.append(float(term.sign))
                f1.append(idx[0])
                f2.append(idx[1] if len(idx) > 1 else 0)
        self.queries = list(queries)
        self._rows = np.array(rows, dtype=np.intp)
        self._signs = np.array(signs)
        self._f1 = np.array(f1, dtype=np.intp)
        self._f2 = np.array(f2, dtype=np.intp)
        self._ev_cache: dict = {}

    def __len__(self):
        return len(self.residuals)

    def __add__(self, other: "ResidualSystem") -> "ResidualSystem":
        if self.variables != other.variables:
            raise ConstraintError("systems compiled against different variable sets")
        return ResidualSystem(self.variables, self.residuals + other.residuals,
                              self.provenance + other.provenance)

    def _evidence(self, circuit: Circuit) -> np.ndarray:
        key = tuple(circuit.names)
        if key not in self._ev_cache:
            missing = set(self.variables) - set(circuit.names)
            if missing:
                raise ConstraintError(f"circuit lacks variables {sorted(missing)}")
            self._ev_cache[key] = circuit.evidence_batch([dict(q) for q in self.queries])
        return self._ev_cache[key]

    def query_values(self, circuit: Circuit, weights=None, normalized: bool = True) -> np.ndarray:
        """Marginal of every distinct query; entry 0 is the empty query."""
        s = circuit.values(self._evidence(circuit), weights)
        if not normalized:
            return s
        if not s[0] > 0:
            raise DegenerateCircuitError("circuit has zero total mass (S(empty) = 0)")
        p = s / s[0]
        p[0] = 1.0
        return p

    def query_values_and_grads(self, circuit: Circuit, weights=None):
        s, ds = circuit.values_and_grads(self._evidence(circuit), weights)
        z, dz = s[0], ds[0]
        if not z > 0:
            raise DegenerateCircuitError("circuit has zero total mass (S(empty) = 0)")
        p = s / z
        dp = ds / z - np.outer(s, dz) / z**2
        p[0] = 1.0
        dp[0] = 0.0
        return p, dp

    def values(self, circuit: Circuit, weights=None, normalized: bool = True) -> np.ndarray:
        p = self.query_values(circuit, weights, normalized)
        if not normalized:
            p = p.copy()
            p[0] = 1.0
        return self.combine(p)

    def combine(self, p, dp=None):
        """Residuals from query probabilities ``p`` (and the Jacobian, given ``dp``)."""
        terms = self._signs * p[self._f1] * p[self._f2]
        out = np.zeros(len(self.residuals))
        np.add.at(out, self._rows, terms)
        if dp is None:
            return out
        dterms = self._signs[:, None] * (dp[self._f1] * p[self._f2, None] + p[self._f1, None] * dp[self._f2])
        jac = np.zeros((len(self.residuals), dp.shape[1]))
        np.add.at(jac, self._rows, dterms)
        return out, jac

    def values_and_jacobian(self, circuit: Circuit, weights=None):
        p, dp = self.query_values_and_grads(circuit, weights)
        return self.combine(p, dp)

    def jacobian(self, circuit: Circuit, weights=None) -> np.ndarray:
        return self.values_and_jacobian(circuit, weights)[1]

    def format_residual(self, k: int) -> str:
        return format_residual(self.residuals[k])

    def __repr__(self):
        return f"ResidualSystem({len(self)} residuals over {self.variables})"


def format_query(q: Query) -> str:
    return "P(" + ",".join(f"{n}={v}" for n, v in q) + ")"


def format_residual(res) -> str:
    parts = []
    for t in res:
        parts.append(("+" if t.sign > 0 else "-") + "*".join(format_query(q) for q in t.factors))
    return " ".join(parts)


# -- compilation ---------------------------------------------------------------


def _check_vars(circuit: Circuit, names):
    for n in names:
        try:
            circuit.var_index(n)
        except UnknownVariableError as e:
            raise ConstraintError(str(e)) from None


def _query(circuit: Circuit, *parts: Mapping) -> Query:
    merged: dict = {}
    for part in parts:
        for k, v in part.items():
            if merged.get(k, v) != v:
                raise ConstraintError(f"conflicting values for {k} in one query")
            merged[k] = int(v)
    return tuple(sorted(merged.items(), key=lambda kv: circuit.var_index(kv[0])))


def _term(circuit, sign, *factors) -> ResidualTerm:
    qs = tuple(_query(circuit, *f) if isinstance(f, tuple) else _query(circuit, f) for f in factors)
    qs = tuple(q for q in qs if q) or ((),)
    return ResidualTerm(sign, qs)


def _assignments(names: Sequence[str]):
    """Complete assignments of ``names``, values enumerated 1 before 0."""
    for vals in itertools.product((1, 0), repeat=len(names)):
        yield dict(zip(names, vals))


def _sorted_names(circuit, names):
    return sorted(names, key=circuit.var_index)


def _label(d: Mapping) -> str:
    return ",".join(f"{k}={v}" for k, v in d.items())


def compile_conditional(c: ConditionalEquality, circuit: Circuit, index: int = 0) -> ResidualSystem:
    y, a = c.target, c.attribute
    ctx = dict(c.context or {})
    _check_vars(circuit, [y, a, *ctx])
    if y == a:
        raise ConstraintError("target and attribute must differ")
    if y in ctx or a in ctx:
        raise ConstraintError("context may not mention the target or the attribute")
    if c.condition_on_rest:
        if ctx:
            raise ConstraintError("condition_on_rest requires an empty context")
        rest = [n for n in circuit.names if n not in (y, a)]
        if len(rest) > MAX_ENUM:
            raise ConstraintError(f"conditioning on {len(rest)} remaining variables exceeds {MAX_ENUM}")
        contexts = list(_assignments(rest))
    else:
        contexts = [ctx]
    residuals, prov = [], []
    for g in contexts:
        for yv in (1, 0):
            residuals.append((
                _term(circuit, +1, ({y: yv, a: 1}, g), ({a: 0}, g)),
                _term(circuit, -1, ({y: yv, a: 0}, g), ({a: 1}, g)),
            ))
            label = f"{y}={yv}" + (f" | {_label(g)}" if g else "")
            prov.append(Provenance(index, c, "conditional", label))
    return ResidualSystem(circuit.names, residuals, prov)


def compile_interventional(c: InterventionalEquality, circuit: Circuit, index: int = 0) -> ResidualSystem:
    a = c.intervened
    parents = list(c.parents or ())
    _check_vars(circuit, [a, *parents])
    if a in parents:
        raise ConstraintError("the intervened variable cannot be its own parent")
    if c.targets is None:
        targets = [n for n in circuit.names if n != a]
    else:
        targets = list(c.targets)
        _check_vars(circuit, targets)
    if a in targets:
        raise ConstraintError("targets may not include the intervened variable")
    if not set(parents) <= set(targets):
        raise ConstraintError("targets must contain every parent of the intervened variable")
    if len(targets) > MAX_ENUM:
        raise ConstraintError(f"{len(targets)} targets exceeds the enumeration cap of {MAX_ENUM}")
    targets = _sorted_names(circuit, set(targets))
    residuals, prov = [], []
    for t in _assignments(targets):
        pa = {p: t[p] for p in parents}
        residuals.append((
            _term(circuit, +1, (t, {a: 0}), (pa, {a: 1})),
            _term(circuit, -1, (t, {a: 1}), (pa, {a: 0})),
        ))
        prov.append(Provenance(index, c, "interventional", _label(t), (CLOSED_WORLD,)))
    return ResidualSystem(circuit.names, residuals, prov)


def compile_independence(c: Independence, circuit: Circuit, index: int = 0) -> ResidualSystem:
    x, z = c.left, c.right
    _check_vars(circuit, [x, z])
    if x == z:
        raise ConstraintError("left and right must differ")
    if isinstance(c.given, Mapping):
        given = dict(c.given)
        _check_vars(circuit, given)
        contexts = [given]
        names = list(given)
    else:
        names = list(c.given or ())
        _check_vars(circuit, names)
        if len(names) > MAX_ENUM:
            raise ConstraintError(f"conditioning set of {len(names)} exceeds {MAX_ENUM}")
        contexts = list(_assignments(_sorted_names(circuit, names)))
    if x in names or z in names:
        raise ConstraintError("the conditioning set may not contain left or right")
    residuals, prov = [], []
    for g in contexts:
        for av, bv in ((1, 1), (1, 0), (0, 1), (0, 0)):
            residuals.append((
                _term(circuit, +1, ({x: av, z: bv}, g), g),
                _term(circuit, -1, ({x: av}, g), ({z: bv}, g)),
            ))
            label = f"{x}={av},{z}={bv}" + (f" | {_label(g)}" if g else "")
            prov.append(Provenance(index, c, "independence", label))
    return ResidualSystem(circuit.names, residuals, prov)


def compile_constraint(c, circuit: Circuit, index: int = 0) -> ResidualSystem:
    if isinstance(c, ConditionalEquality):
        return compile_conditional(c, circuit, index)
    if isinstance(c, InterventionalEquality):
        return compile_interventional(c, circuit, index)
    if isinstance(c, Independence):
        return compile_independence(c, circuit, index)
    raise TypeError(f"not a constraint: {c!r}")


def compile_constraints(constraints: Sequence, circuit: Circuit) -> ResidualSystem:
    system = ResidualSystem(circuit.names, [])
    for i, c in enumerate(constraints):
        system = system + compile_constraint(c, circuit, i)
    return system


# -- evaluation ----------------------------------------------------------------


def residual_values(system: ResidualSystem, circuit: Circuit, weights=None) -> np.ndarray:
    return system.values(circuit, weights)


def residual_jacobian(system: ResidualSystem, circuit: Circuit, weights=None) -> np.ndarray:
    """d residual / d weight, shape (len(system), circuit.n_weights)."""
    return system.jacobian(circuit, weights)


_PROBE_T = np.array([0.0, 1.0, 2.0, 3.0])


def residual_degrees(system: ResidualSystem, circuit: Circuit, direction, weights=None,
                     tol: float = 1e-9) -> np.ndarray:
    """Polynomial degree of every unnormalized residual along w + t*direction.

    Marginals are replaced by raw network-polynomial values; each residual
    is sampled at t = 0, 1, 2, 3 and the interpolating cubic's coefficients
    below ``tol`` count as zero.
    """
    d = np.asarray(direction, dtype=float)
    if not np.any(d):
        raise ValueError("direction must be non-zero")
    w0 = circuit.weights if weights is None else np.asarray(weights, dtype=float)
    samples = np.stack([system.values(circuit, w0 + t * d, normalized=False) for t in _PROBE_T])
    vander = np.vander(_PROBE_T, 4, increasing=True)
    coefs = np.linalg.solve(vander, samples)  # (4, n_residuals), row j = t**j coefficient
    deg = np.zeros(len(system), dtype=int)
    for j in range(1, 4):
        deg[np.abs(coefs[j]) > tol] = j
    return deg


def degree_probe(system: ResidualSystem, circuit: Circuit, direction, weights=None) -> int:
    """Highest degree over the system's residuals along ``direction``."""
    deg = residual_degrees(system, circuit, direction, weights)
    return int(deg.max()) if len(deg) else 0
