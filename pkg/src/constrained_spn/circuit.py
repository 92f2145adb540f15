"""Sum-product networks over binary variables.

A circuit is a rooted DAG of sum, product and indicator-leaf nodes. Weights
live in one flat vector ordered by ascending sum-node id, then child
position; the structure (children, scopes, topological order) is computed
once at construction and never changes.

Evidence is handled with the usual network-polynomial convention: a
variable missing from an assignment has both of its indicators set to 1.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

SUM = "sum"
PRODUCT = "product"
LEAF = "leaf"

MAX_ENUM_VARS = 20
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_CHUNK = 4096


class CircuitError(ValueError):
    """Base class for circuit errors."""


class InvalidCircuitError(CircuitError):
    """Raised when an operation needs a valid circuit and gets an invalid one."""

    def __init__(self, report):
        self.report = report
        super().__init__("invalid circuit:\n" + str(report))


class DegenerateCircuitError(CircuitError):
    """The circuit assigns zero total mass, so no query can be normalized."""


class ZeroEvidenceError(CircuitError):
    """Conditioning on an event of probability zero."""


class UnknownVariableError(CircuitError, KeyError):
    def __str__(self):
        return self.args[0]


class ParseError(CircuitError):
    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


@dataclass(frozen=True)
class VariableId:
    index: int
    name: str


@dataclass(frozen=True)
class Node:
    """One circuit node.

    ``weights`` is only meaningful for sum nodes. ``var``/``positive`` are
    only meaningful for leaves: a positive leaf is the indicator of
    ``var = 1``, a negative leaf the indicator of ``var = 0``.
    """

    id: int
    kind: str
    children: tuple = ()
    weights: tuple = ()
    var: str | None = None
    positive: bool = True


def leaf(id: int, var: str, positive: bool = True) -> Node:
    return Node(id, LEAF, var=var, positive=positive)


def product(id: int, children: Sequence[int]) -> Node:
    return Node(id, PRODUCT, children=tuple(children))


def sum_node(id: int, children: Sequence[int], weights: Sequence[float]) -> Node:
    return Node(id, SUM, children=tuple(children), weights=tuple(float(w) for w in weights))


@dataclass(frozen=True)
class Violation:
    node: int | None
    prop: str
    message: str

    def __str__(self):
        where = "circuit" if self.node is None else f"node {self.node}"
        return f"{where}: {self.prop}: {self.message}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)

    def properties(self) -> list:
        return [v.prop for v in self.violations]


class Circuit:
    """A sum-product network over named binary variables.

    Parameters
    ----------
    variables : sequence of str
        Variable names; their position is the variable index.
    nodes : iterable of Node
    root : int
        Id of the root node.

    Construction never rejects a structurally broken circuit: violations
    are collected by :meth:`validate` and every query refuses to run on an
    invalid circuit.
    """

    def __init__(self, variables: Sequence[str], nodes: Iterable[Node], root: int):
        names = [v.name if isinstance(v, VariableId) else str(v) for v in variables]
        for name in names:
            if not _NAME_RE.match(name):
                raise CircuitError(f"invalid variable name {name!r}")
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise CircuitError(f"duplicate variable name {dup!r}")
        self.variables = [VariableId(i, n) for i, n in enumerate(names)]
        self._var_index = {n: i for i, n in enumerate(names)}

        self._nodes: dict[int, Node] = {}
        early = []
        for node in nodes:
            if node.id in self._nodes:
                early.append(Violation(node.id, "duplicate-id", "node id declared twice"))
                continue
            self._nodes[node.id] = node
        self.root = root

        # flat weight vector in canonical order
        self._edges: list[tuple[int, int]] = []
        self._edge_start: dict[int, int] = {}
        w = []
        for nid in sorted(self._nodes):
            node = self._nodes[nid]
            if node.kind != SUM:
                continue
            self._edge_start[nid] = len(self._edges)
            ws = list(node.weights)[: len(node.children)]
            ws += [0.0] * (len(node.children) - len(ws))
            for pos in range(len(node.children)):
                self._edges.append((nid, pos))
            w.extend(ws)
        self._w = np.asarray(w, dtype=float)
        self._report = self._check(early)
        self._compile()

    # -- structure ---------------------------------------------------------

    @property
    def names(self) -> list:
        return [v.name for v in self.variables]

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def edges(self) -> list:
        """Canonical (sum-node id, child position) list aligned with :attr:`weights`."""
        return list(self._edges)

    @property
    def n_weights(self) -> int:
        return len(self._edges)

    def var_index(self, name: str) -> int:
        try:
            return self._var_index[name]
        except KeyError:
            raise UnknownVariableError(f"unknown variable {name!r}") from None

    def node(self, nid: int) -> Node:
        node = self._nodes[nid]
        if node.kind == SUM:
            s = self._edge_start[nid]
            ws = tuple(float(x) for x in self._w[s : s + len(node.children)])
            node = Node(nid, SUM, node.children, ws)
        return node

    @property
    def nodes(self) -> dict:
        return {nid: self.node(nid) for nid in sorted(self._nodes)}

    def scope(self, nid: int) -> frozenset:
        return self._scopes[nid]

    def sum_slices(self) -> list:
        """Slices of the weight vector, one per sum node, in canonical order."""
        out = []
        for nid in sorted(self._edge_start):
            s = self._edge_start[nid]
            out.append(slice(s, s + len(self._nodes[nid].children)))
        return out

    def root_slice(self) -> slice | None:
        if self.root in self._edge_start:
            s = self._edge_start[self.root]
            return slice(s, s + len(self._nodes[self.root].children))
        return None

    # -- weights -----------------------------------------------------------

    @property
    def weights(self) -> np.ndarray:
        return self._w.copy()

    def set_weights(self, w) -> None:
        w = np.array(w, dtype=float)
        if w.shape != self._w.shape:
            raise CircuitError(f"expected {self._w.shape[0]} weights, got {w.shape}")
        self._w = w

    def with_weights(self, w) -> "Circuit":
        """A copy sharing all structure caches, carrying new weights."""
        other = object.__new__(Circuit)
        other.__dict__.update(self.__dict__)
        other._w = self._w
        other.set_weights(w)
        return other

    def copy(self) -> "Circuit":
        return self.with_weights(self._w)

    # -- validation --------------------------------------------------------

    def validate(self) -> ValidationReport:
        report = ValidationReport(list(self._report.violations))
        neg = np.flatnonzero(~(self._w >= 0))
        for nid in sorted({self._edges[e][0] for e in neg}):
            report.violations.append(Violation(nid, "weight-domain", "negative or non-finite weight"))
        return report

    def _check(self, early) -> ValidationReport:
        v = list(early)
        nodes = self._nodes
        if self.root not in nodes:
            v.append(Violation(None, "root", f"root id {self.root} does not exist"))
        for nid in sorted(nodes):
            node = nodes[nid]
            if node.kind == LEAF:
                if node.children:
                    v.append(Violation(nid, "arity", "leaf with children"))
                if node.var not in self._var_index:
                    v.append(Violation(nid, "unknown-variable", f"leaf variable {node.var!r} not declared"))
            elif node.kind == PRODUCT:
                if len(node.children) < 2:
                    v.append(Violation(nid, "arity", "product node needs at least 2 children"))
            elif node.kind == SUM:
                if len(node.children) < 1:
                    v.append(Violation(nid, "arity", "sum node needs at least 1 child"))
                if len(node.weights) != len(node.children):
                    v.append(Violation(nid, "arity",
                                       f"{len(node.weights)} weights for {len(node.children)} children"))
            else:
                v.append(Violation(nid, "kind", f"unknown node kind {node.kind!r}"))
            for c in node.children:
                if c not in nodes:
                    v.append(Violation(nid, "missing-child", f"child {c} does not exist"))

        order, cyclic = _toposort(nodes)
        for nid in cyclic:
            v.append(Violation(nid, "cycle", "node lies on a directed cycle"))
        self._order = order

        scopes: dict[int, frozenset] = {}
        for nid in order:
            node = nodes[nid]
            if node.kind == LEAF:
                scopes[nid] = frozenset([node.var]) if node.var in self._var_index else frozenset()
                continue
            child_scopes = [scopes[c] for c in node.children if c in scopes]
            scopes[nid] = frozenset().union(*child_scopes)
            if node.kind == SUM and len(set(child_scopes)) > 1:
                desc = ", ".join("{" + ",".join(sorted(s, key=self._var_index.get)) + "}" for s in child_scopes)
                v.append(Violation(nid, "completeness", f"children have different scopes: {desc}"))
            if node.kind == PRODUCT:
                seen: set = set()
                overlap: set = set()
                for s in child_scopes:
                    overlap |= seen & s
                    seen |= s
                if overlap:
                    v.append(Violation(nid, "decomposability",
                                       "children share variables " + ",".join(sorted(overlap, key=self._var_index.get))))
        for nid in cyclic:
            scopes.setdefault(nid, frozenset())
        self._scopes = scopes

        if self.root in nodes and not cyclic:
            reach = {self.root}
            stack = [self.root]
            while stack:
                for c in nodes[stack.pop()].children:
                    if c in nodes and c not in reach:
                        reach.add(c)
                        stack.append(c)
            for nid in sorted(set(nodes) - reach):
                v.append(Violation(nid, "unreachable", "node not reachable from root"))
        return ValidationReport(v)

    def _compile(self):
        """Group nodes by depth so each level is a handful of array operations."""
        if not self._report.ok:
            self._plan = None
            return
        nodes = self._nodes
        level = {}
        for nid in self._order:
            node = nodes[nid]
            level[nid] = 0 if node.kind == LEAF else 1 + max(level[c] for c in node.children)
        ordered = sorted(self._order, key=lambda nid: (level[nid], nid))
        pos = {nid: i for i, nid in enumerate(ordered)}
        leaves = [nid for nid in ordered if level[nid] == 0]
        self._leaf_pos = np.array([pos[n] for n in leaves], dtype=np.intp)
        self._leaf_var = np.array([self._var_index[nodes[n].var] for n in leaves], dtype=np.intp)
        self._leaf_neg = np.array([not nodes[n].positive for n in leaves], dtype=bool)
        plan = []
        depth = max(level.values())
        for lv in range(1, depth + 1):
            for kind in (PRODUCT, SUM):
                group = [n for n in ordered if level[n] == lv and nodes[n].kind == kind]
                if not group:
                    continue
                out = np.array([pos[n] for n in group], dtype=np.intp)
                kids, starts, seg, edges = [], [], [], []
                for g, n in enumerate(group):
                    starts.append(len(kids))
                    kids.extend(pos[c] for c in nodes[n].children)
                    seg.extend([g] * len(nodes[n].children))
                    if kind == SUM:
                        e0 = self._edge_start[n]
                        edges.extend(range(e0, e0 + len(nodes[n].children)))
                plan.append((kind, out, np.array(kids, dtype=np.intp), np.array(starts, dtype=np.intp),
                             np.array(seg, dtype=np.intp), np.array(edges, dtype=np.intp)))
        self._plan = plan
        self._n_pos = len(ordered)
        self._root_pos = pos[self.root]

    def _require_valid(self):
        if self._plan is None:
            raise InvalidCircuitError(self._report)

    # -- evidence ----------------------------------------------------------

    def evidence(self, assignment: Mapping[str, int] | None) -> np.ndarray:
        """Encode a partial assignment as a length-n int vector, -1 = marginalized."""
        ev = np.full(self.n_vars, -1, dtype=np.int8)
        for name, val in (assignment or {}).items():
            i = self.var_index(name)
            if val not in (0, 1):
                raise CircuitError(f"value of {name} must be 0 or 1, got {val!r}")
            ev[i] = val
        return ev

    def evidence_batch(self, assignments: Sequence[Mapping[str, int] | None]) -> np.ndarray:
        if not assignments:
            return np.zeros((0, self.n_vars), dtype=np.int8)
        return np.stack([self.evidence(a) for a in assignments])

    # -- batched passes ----------------------------------------------------

    def forward(self, ev: np.ndarray, weights=None) -> np.ndarray:
        """Values of every node for a batch of evidence rows, shape (B, n_nodes).

        Columns follow the internal level order; the root is column
        ``self._root_pos``.
        """
        self._require_valid()
        w = self._w if weights is None else np.asarray(weights, dtype=float)
        ev = np.atleast_2d(ev)
        vals = np.empty((ev.shape[0], self._n_pos))
        col = ev[:, self._leaf_var]
        vals[:, self._leaf_pos] = np.where(self._leaf_neg, col != 1, col != 0)
        for kind, out, kids, starts, _, edges in self._plan:
            if kind == PRODUCT:
                vals[:, out] = np.multiply.reduceat(vals[:, kids], starts, axis=1)
            else:
                vals[:, out] = np.add.reduceat(vals[:, kids] * w[edges], starts, axis=1)
        return vals

    def values(self, ev: np.ndarray, weights=None) -> np.ndarray:
        """Root value for each row of a batch of evidence vectors."""
        ev = np.atleast_2d(ev)
        return np.concatenate([self.forward(ev[i : i + _CHUNK], weights)[:, self._root_pos]
                               for i in range(0, max(len(ev), 1), _CHUNK)])[: len(ev)]

    def values_and_grads(self, ev: np.ndarray, weights=None):
        """Root values (B,) and d root / d weights (B, n_weights) for a batch."""
        w = self._w if weights is None else np.asarray(weights, dtype=float)
        ev = np.atleast_2d(ev)
        vals = self.forward(ev, w)
        adj = np.zeros_like(vals)
        adj[:, self._root_pos] = 1.0
        grad = np.zeros((ev.shape[0], len(w)))
        for kind, out, kids, starts, seg, edges in reversed(self._plan):
            up = adj[:, out][:, seg]
            if kind == SUM:
                grad[:, edges] = up * vals[:, kids]
                np.add.at(adj, (slice(None), kids), up * w[edges])
            else:
                # product of the siblings, without dividing by zero
                v = vals[:, kids]
                zero = v == 0
                safe = np.where(zero, 1.0, v)
                n_zero = np.add.reduceat(zero.astype(np.intp), starts, axis=1)[:, seg]
                nz_prod = np.multiply.reduceat(safe, starts, axis=1)[:, seg]
                others = np.where(n_zero == 0, nz_prod / safe,
                                  np.where((n_zero == 1) & zero, nz_prod, 0.0))
                np.add.at(adj, (slice(None), kids), up * others)
        return vals[:, self._root_pos], grad

    def __repr__(self):
        return (f"Circuit(n_vars={self.n_vars}, n_nodes={len(self._nodes)}, "
                f"n_weights={self.n_weights}, root={self.root})")


def _toposort(nodes: dict) -> tuple:
    """Children-first order of acyclic nodes; second item lists nodes on or above cycles."""
    indeg = {nid: 0 for nid in nodes}
    parents: dict[int, list] = {nid: [] for nid in nodes}
    for nid, node in nodes.items():
        for c in node.children:
            if c in nodes:
                indeg[nid] += 1
                parents[c].append(nid)
    ready = sorted(nid for nid, d in indeg.items() if d == 0)
    order = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        for p in parents[nid]:
            indeg[p] -= 1
            if indeg[p] == 0:
                ready.append(p)
        ready.sort()
    cyclic = sorted(set(nodes) - set(order))
    return order, cyclic


# -- queries -------------------------------------------------------------------


def validate(circuit: Circuit) -> ValidationReport:
    return circuit.validate()


def evaluate(circuit: Circuit, assignment: Mapping[str, int] | None = None, weights=None) -> float:
    """Unnormalized network-polynomial value S(assignment)."""
    return float(circuit.values(circuit.evidence(assignment), weights)[0])


def _partition(circuit, weights=None) -> float:
    z = evaluate(circuit, None, weights)
    if not z > 0:
        raise DegenerateCircuitError("circuit has zero total mass (S(empty) = 0)")
    return z


def marginal(circuit: Circuit, query: Mapping[str, int] | None = None) -> float:
    """Normalized probability of a partial assignment."""
    num, z = circuit.values(np.stack([circuit.evidence(query), circuit.evidence(None)]))
    if not z > 0:
        raise DegenerateCircuitError("circuit has zero total mass (S(empty) = 0)")
    return float(num / z)


def conditional(circuit: Circuit, target: Mapping[str, int], evidence: Mapping[str, int] | None = None) -> float:
    evidence = dict(evidence or {})
    overlap = set(target) & set(evidence)
    if overlap:
        raise CircuitError(f"target and evidence share variables: {sorted(overlap)}")
    joint = {**target, **evidence}
    num, den, z = circuit.values(circuit.evidence_batch([joint, evidence, None]))
    if not z > 0:
        raise DegenerateCircuitError("circuit has zero total mass (S(empty) = 0)")
    if den == 0:
        raise ZeroEvidenceError(f"evidence {evidence} has probability zero")
    return float(num / den)


def gradient(circuit: Circuit, assignment: Mapping[str, int] | None = None, weights=None) -> np.ndarray:
    """dS(assignment)/dw for every sum edge, in canonical weight order."""
    _, g = circuit.values_and_grads(circuit.evidence(assignment)[None, :], weights)
    return g[0]


def subcircuit_value_and_grad(circuit: Circuit, query: Mapping[str, int] | None = None, weights=None):
    """Normalized marginal of ``query`` and its exact gradient w.r.t. the weights."""
    vals, grads = circuit.values_and_grads(circuit.evidence_batch([query, None]), weights)
    p, g = normalized_value_and_grad(vals[0], grads[0], vals[1], grads[1])
    return float(p), g


def normalized_value_and_grad(s, ds, z, dz):
    """Quotient rule for S(q)/S(empty). ``s``/``ds`` may be a batch of rows."""
    if not z > 0:
        raise DegenerateCircuitError("circuit has zero total mass (S(empty) = 0)")
    s = np.asarray(s, dtype=float)
    p = s / z
    g = np.asarray(ds) / z - np.multiply.outer(s, dz) / z**2
    return p, g


def interventional(circuit: Circuit, target: Mapping[str, int], intervened: str, value: int,
                   parents: Sequence[str] = ()) -> float:
    """Pr(target | do(intervened=value)) through the truncated-factorization formula.

    Sums Pr(target, pa, A=value) * Pr(pa) / Pr(A=value, pa) over the parent
    configurations not already fixed by ``target``. Configurations with
    Pr(pa) = 0 contribute nothing; Pr(pa) > 0 with Pr(A=value, pa) = 0
    leaves the intervention undefined.
    """
    target = dict(target)
    parents = list(parents)
    circuit.var_index(intervened)
    if intervened in target:
        raise CircuitError("the target may not mention the intervened variable")
    if intervened in parents:
        raise CircuitError("the intervened variable cannot be its own parent")
    free = [p for p in parents if p not in target]
    for p in parents:
        circuit.var_index(p)
    if len(free) > 16:
        raise CircuitError("too many unobserved parents to enumerate")
    queries = []
    for vals in itertools.product((1, 0), repeat=len(free)):
        pa = {**{p: target[p] for p in parents if p in target}, **dict(zip(free, vals))}
        queries += [{**target, **pa, intervened: value}, pa, {**pa, intervened: value}]
    s = circuit.values(circuit.evidence_batch(queries + [None]))
    z = s[-1]
    if not z > 0:
        raise DegenerateCircuitError("circuit has zero total mass (S(empty) = 0)")
    total = 0.0
    for k in range(0, len(queries), 3):
        joint, p_pa, p_a_pa = s[k] / z, s[k + 1] / z, s[k + 2] / z
        if p_pa == 0:
            continue
        if p_a_pa == 0:
            raise ZeroEvidenceError(f"Pr({intervened}={value} | parents) = 0 for a parent "
                                    "configuration with positive probability")
        total += joint * p_pa / p_a_pa
    return float(total)


# -- construction helpers ------------------------------------------------------


def complete_assignments(n: int) -> np.ndarray:
    """All 2**n complete evidence rows; row a has variable i at bit i of a."""
    idx = np.arange(2**n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.int8)


def full_joint_circuit(variables: Sequence[str], table) -> Circuit:
    """Canonical circuit: root sum over every complete product of leaves.

    ``table`` is either a flat array of 2**n entries indexed by assignment
    bits (variable i is bit i) or an object with a ``probs`` attribute.
    Child k of the root is the product for assignment k.
    """
    names = [v.name if isinstance(v, VariableId) else str(v) for v in variables]
    n = len(names)
    if n > MAX_ENUM_VARS:
        raise CircuitError(f"full-joint circuit limited to {MAX_ENUM_VARS} variables, got {n}")
    if n == 0:
        raise CircuitError("need at least one variable")
    probs = np.asarray(getattr(table, "probs", table), dtype=float)
    if probs.shape != (2**n,):
        raise CircuitError(f"table must have {2**n} entries, got {probs.shape}")
    if np.any(probs < 0):
        raise CircuitError("table entries must be non-negative")

    nodes = []
    for i, name in enumerate(names):
        nodes.append(leaf(2 * i, name, False))
        nodes.append(leaf(2 * i + 1, name, True))
    next_id = 2 * n
    children = []
    if n == 1:
        children = [0, 1]
    else:
        for a in range(2**n):
            nodes.append(product(next_id, [2 * i + ((a >> i) & 1) for i in range(n)]))
            children.append(next_id)
            next_id += 1
    nodes.append(sum_node(next_id, children, probs))
    return Circuit(names, nodes, next_id)


def mixture_circuit(variables: Sequence[str], n_components: int, rng: np.random.Generator,
                    normalized: bool = True) -> Circuit:
    """Two-level sum-of-products circuit with random structure and weights.

    The root mixes ``n_components`` products; each product partitions the
    variables into random blocks, and each block is a sum over complete
    products of that block (a single block variable gets a sum over its
    two leaves).
    """
    names = list(variables)
    n = len(names)
    nodes = []
    ids = itertools.count()
    leaves = {}
    for name in names:
        leaves[(name, 0)] = next(ids)
        nodes.append(leaf(leaves[(name, 0)], name, False))
        leaves[(name, 1)] = next(ids)
        nodes.append(leaf(leaves[(name, 1)], name, True))

    def weights(k):
        w = rng.dirichlet(np.ones(k)) if normalized else rng.uniform(0.05, 2.0, size=k)
        return w

    comps = []
    for _ in range(n_components):
        perm = rng.permutation(n)
        cuts = sorted(rng.choice(np.arange(1, n), size=rng.integers(0, n), replace=False)) if n > 1 else []
        blocks = np.split(perm, cuts)
        block_ids = []
        for block in blocks:
            bnames = [names[i] for i in sorted(block)]
            if len(bnames) == 1:
                kids = [leaves[(bnames[0], 0)], leaves[(bnames[0], 1)]]
            else:
                kids = []
                for a in range(2 ** len(bnames)):
                    pid = next(ids)
                    nodes.append(product(pid, [leaves[(v, (a >> j) & 1)] for j, v in enumerate(bnames)]))
                    kids.append(pid)
            sid = next(ids)
            nodes.append(sum_node(sid, kids, weights(len(kids))))
            block_ids.append(sid)
        if len(block_ids) == 1:
            comps.append(block_ids[0])
        else:
            pid = next(ids)
            nodes.append(product(pid, block_ids))
            comps.append(pid)
    root = next(ids)
    nodes.append(sum_node(root, comps, weights(len(comps))))
    return Circuit(names, nodes, root)


# -- text format ---------------------------------------------------------------

FORMAT_VERSION = 1


def serialize(circuit: Circuit) -> str:
    report = circuit.validate()
    if not report.ok:
        raise InvalidCircuitError(report)
    lines = [f"spn {FORMAT_VERSION}"]
    for v in circuit.variables:
        lines.append(f"var {v.index} {v.name}")
    for nid in circuit._order:
        node = circuit.node(nid)
        if node.kind == LEAF:
            lines.append(f"leaf {nid} {node.var} {'+' if node.positive else '-'}")
        elif node.kind == PRODUCT:
            lines.append("prod " + " ".join(str(x) for x in (nid, *node.children)))
        else:
            parts = [f"{c}:{format(w, '.17g')}" for c, w in zip(node.children, node.weights)]
            lines.append(f"sum {nid} " + " ".join(parts))
    lines.append(f"root {circuit.root}")
    return "\n".join(lines) + "\n"


def deserialize(text: str, strict: bool = True) -> Circuit:
    """Parse the line-oriented model format.

    Syntax and referential errors raise :class:`ParseError` with the line
    number. With ``strict`` (the default) a circuit that fails validation
    (e.g. a negative weight) raises :class:`InvalidCircuitError`.
    """
    variables: list[str] = []
    nodes: dict[int, Node] = {}
    root = None
    saw_header = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if not saw_header:
            if tok != ["spn", str(FORMAT_VERSION)]:
                raise ParseError(lineno, f"expected header 'spn {FORMAT_VERSION}'")
            saw_header = True
            continue
        kw = tok[0]
        try:
            if kw == "var":
                if len(tok) != 3:
                    raise ParseError(lineno, "expected 'var <index> <name>'")
                idx = int(tok[1])
                if idx != len(variables):
                    raise ParseError(lineno, f"variable index {idx} out of order (expected {len(variables)})")
                if not _NAME_RE.match(tok[2]):
                    raise ParseError(lineno, f"invalid variable name {tok[2]!r}")
                if tok[2] in variables:
                    raise ParseError(lineno, f"duplicate variable name {tok[2]!r}")
                variables.append(tok[2])
                continue
            if kw == "root":
                if len(tok) != 2:
                    raise ParseError(lineno, "expected 'root <id>'")
                root = int(tok[1])
                if root not in nodes:
                    raise ParseError(lineno, f"root id {root} not declared")
                continue
            if kw not in ("leaf", "prod", "sum"):
                raise ParseError(lineno, f"unknown record {kw!r}")
            if len(tok) < 2:
                raise ParseError(lineno, f"missing node id")
            nid = int(tok[1])
            if nid < 0:
                raise ParseError(lineno, "node ids must be non-negative")
            if nid in nodes:
                raise ParseError(lineno, f"node id {nid} declared twice")
            if kw == "leaf":
                if len(tok) != 4 or tok[3] not in "+-" or len(tok[3]) != 1:
                    raise ParseError(lineno, "expected 'leaf <id> <var-name> <+|->'")
                if tok[2] not in variables:
                    raise ParseError(lineno, f"unknown variable {tok[2]!r}")
                nodes[nid] = leaf(nid, tok[2], tok[3] == "+")
            else:
                children, weights = [], []
                for item in tok[2:]:
                    if kw == "sum":
                        if ":" not in item:
                            raise ParseError(lineno, f"expected <child-id>:<weight>, got {item!r}")
                        c, w = item.split(":", 1)
                        weights.append(float(w))
                    else:
                        c = item
                    c = int(c)
                    if c not in nodes:
                        raise ParseError(lineno, f"child id {c} not declared before node {nid}")
                    children.append(c)
                nodes[nid] = sum_node(nid, children, weights) if kw == "sum" else product(nid, children)
        except ValueError as e:
            if isinstance(e, ParseError):
                raise
            raise ParseError(lineno, str(e)) from None
    if not saw_header:
        raise ParseError(1, "empty model file")
    if root is None:
        raise ParseError(lineno if text else 1, "missing 'root' record")
    circuit = Circuit(variables, nodes.values(), root)
    if strict:
        report = circuit.validate()
        if not report.ok:
            raise InvalidCircuitError(report)
    return circuit
