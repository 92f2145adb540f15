"""Datasets, CSV ingestion, log-likelihood and the constraint text format."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit import Circuit, CircuitError, deserialize, serialize
from .constraints import (
    ConditionalEquality,
    ConstraintError,
    Independence,
    InterventionalEquality,
)

LOG_FLOOR = 1e-12


class DataError(ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass
class Dataset:
    """Complete binary data: ``rows[k, i]`` is the value of ``variables[i]`` in row k."""

    variables: list
    rows: np.ndarray

    def __post_init__(self):
        self.variables = list(self.variables)
        self.rows = np.asarray(self.rows, dtype=np.int8).reshape(-1, len(self.variables))
        if len(set(self.variables)) != len(self.variables):
            raise DataError("duplicate variable names")
        if self.rows.size and not np.isin(self.rows, (0, 1)).all():
            raise DataError("dataset values must be 0 or 1")

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    def __len__(self):
        return self.m

    def aligned(self, circuit: Circuit) -> np.ndarray:
        """Rows reordered to the circuit's variable order."""
        if set(self.variables) != set(circuit.names) or len(self.variables) != circuit.n_vars:
            raise DataError(f"dataset variables {self.variables} do not match "
                            f"circuit variables {circuit.names}")
        cols = [self.variables.index(n) for n in circuit.names]
        return self.rows[:, cols]

    def counts(self, circuit: Circuit):
        """Unique rows (sorted, circuit order) and their multiplicities."""
        uniq, counts = np.unique(self.aligned(circuit), axis=0, return_counts=True)
        return uniq.astype(np.int8), counts.astype(float)


def load_csv(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DataError("missing header", line=1)
    header = [h.strip() for h in lines[0].split(",")]
    seen = set()
    for col, name in enumerate(header, 1):
        if not re.match(r"[A-Za-z_][A-Za-z0-9_]*\Z", name):
            raise DataError(f"invalid variable name {name!r}", line=1, column=col)
        if name in seen:
            raise DataError(f"duplicate variable name {name!r}", line=1, column=col)
        seen.add(name)
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        toks = [t.strip() for t in line.split(",")]
        if len(toks) != len(header):
            raise DataError(f"expected {len(header)} values, got {len(toks)}", line=lineno)
        row = []
        for col, t in enumerate(toks, 1):
            if t == "":
                raise DataError("missing value", line=lineno, column=col)
            if t not in ("0", "1"):
                raise DataError(f"non-binary token {t!r}", line=lineno, column=col)
            row.append(int(t))
        rows.append(row)
    return Dataset(header, np.array(rows, dtype=np.int8).reshape(-1, len(header)))


def save_csv(dataset: Dataset) -> str:
    out = [",".join(dataset.variables)]
    out.extend(",".join(str(int(v)) for v in row) for row in dataset.rows)
    return "\n".join(out) + "\n"


def log_likelihood(circuit: Circuit, dataset: Dataset) -> float:
    """Average log-probability per row, each term floored at log(1e-12)."""
    if dataset.m == 0:
        raise DataError("empty dataset")
    uniq, counts = dataset.counts(circuit)
    vals = circuit.values(np.vstack([uniq, circuit.evidence(None)[None, :]]))
    z = vals[-1]
    if not z > 0:
        raise CircuitError("circuit has zero total mass (S(empty) = 0)")
    p = np.maximum(vals[:-1] / z, LOG_FLOOR)
    return float(np.dot(counts, np.log(p)) / dataset.m)


# -- model files ---------------------------------------------------------------


def load_model(path, strict: bool = True) -> Circuit:
    return deserialize(Path(path).read_text(encoding="utf-8"), strict=strict)


def save_model(circuit: Circuit, path) -> None:
    Path(path).write_text(serialize(circuit), encoding="utf-8")


# -- constraint files ----------------------------------------------------------


def _parse_context(tokens, lineno):
    ctx = {}
    for t in tokens:
        m = re.match(r"([A-Za-z_][A-Za-z0-9_]*)=([01])\Z", t)
        if not m:
            raise DataError(f"expected <var>=<0|1>, got {t!r}", line=lineno)
        if m.group(1) in ctx:
            raise DataError(f"variable {m.group(1)} repeated in context", line=lineno)
        ctx[m.group(1)] = int(m.group(2))
    return ctx


def parse_constraints(text: str) -> list:
    """Parse one constraint per line; ``#`` starts a comment.

    Grammar::

        independence <left> <right> [given <v>... | context <v>=<0|1>...]
        conditional-eq <target> wrt <attribute> [context <v>=<0|1>...] [on-rest]
        interventional-eq <intervened> parents <v>...[,] [targets <v>...]
    """
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.replace(",", " , ").split()
        tok = [t for t in tok if t != ","]
        kind = tok[0]
        try:
            if kind == "independence":
                if len(tok) < 3:
                    raise DataError("expected 'independence <left> <right> ...'", line=lineno)
                left, right, rest = tok[1], tok[2], tok[3:]
                if not rest:
                    given = None
                elif rest[0] == "given" and len(rest) > 1:
                    given = tuple(rest[1:])
                elif rest[0] == "context" and len(rest) > 1:
                    given = _parse_context(rest[1:], lineno)
                else:
                    raise DataError("expected 'given <vars>' or 'context <v>=<0|1> ...'", line=lineno)
                out.append(Independence(left, right, given))
            elif kind == "conditional-eq":
                if len(tok) < 4 or tok[2] != "wrt":
                    raise DataError("expected 'conditional-eq <target> wrt <attribute> ...'", line=lineno)
                rest = tok[4:]
                on_rest = False
                if rest and rest[-1] == "on-rest":
                    on_rest = True
                    rest = rest[:-1]
                ctx = {}
                if rest:
                    if rest[0] != "context" or len(rest) < 2:
                        raise DataError("expected 'context <v>=<0|1> ...'", line=lineno)
                    ctx = _parse_context(rest[1:], lineno)
                out.append(ConditionalEquality(tok[1], tok[3], ctx, on_rest))
            elif kind == "interventional-eq":
                if len(tok) < 3 or tok[2] != "parents":
                    raise DataError("expected 'interventional-eq <var> parents <vars> [targets <vars>]'",
                                    line=lineno)
                rest = tok[3:]
                if "targets" in rest:
                    k = rest.index("targets")
                    parents, targets = rest[:k], rest[k + 1:]
                    if not targets:
                        raise DataError("'targets' needs at least one variable", line=lineno)
                else:
                    parents, targets = rest, None
                out.append(InterventionalEquality(tok[1], tuple(parents),
                                                  None if targets is None else tuple(targets)))
            else:
                raise DataError(f"unknown constraint kind {kind!r}", line=lineno)
        except ConstraintError as e:
            raise DataError(str(e), line=lineno) from None
    return out


def format_constraint(c) -> str:
    """Inverse of :func:`parse_constraints` for a single constraint."""
    if isinstance(c, Independence):
        s = f"independence {c.left} {c.right}"
        if isinstance(c.given, dict) and c.given:
            s += " context " + " ".join(f"{k}={v}" for k, v in c.given.items())
        elif c.given:
            s += " given " + " ".join(c.given)
        return s
    if isinstance(c, ConditionalEquality):
        s = f"conditional-eq {c.target} wrt {c.attribute}"
        if c.context:
            s += " context " + " ".join(f"{k}={v}" for k, v in c.context.items())
        if c.condition_on_rest:
            s += " on-rest"
        return s
    if isinstance(c, InterventionalEquality):
        s = f"interventional-eq {c.intervened} parents " + " ".join(c.parents)
        if c.targets is not None:
            s += (" , " if c.parents else "") + "targets " + " ".join(c.targets)
        return s.replace("  ", " ")
    raise TypeError(f"not a constraint: {c!r}")


def load_constraints(path) -> list:
    return parse_constraints(Path(path).read_text(encoding="utf-8"))
