"""Projected-gradient weight learning: plain MLE, soft penalties, hard constraints.

All three modes ascend an objective over the product of per-sum-node
probability simplices. Every step projects each sum node's weights back
onto its simplex; a step that lowers the objective is halved, at most 20
times, after which the last candidate is taken anyway.

Objectives (L = average log-likelihood, C = residual vector):

* ``mle``  : L(w)
* ``soft`` : L(w) - sum_k lam_k C_k(w)**2
* ``hard`` : augmented Lagrangian L(w) - sum_k lam_k C_k(w) - mu/2 sum_k C_k(w)**2,
  maximized in an inner loop, with multipliers lam_k += mu C_k after
  each inner solve and mu *= rho whenever ||C|| fails to halve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit
from .constraints import ResidualSystem
from .dataio import LOG_FLOOR, DataError, Dataset
from .rng import Xoshiro256

CONVERGED = "converged"
MAX_ITERS = "max-iters"
NUMERICAL_FAILURE = "numerical-failure"

MAX_HALVINGS = 20
MU_LIMIT = 1e12


class TrainError(ValueError):
    pass


@dataclass
class TrainConfig:
    """Optimizer settings.

    ``max_iters`` counts gradient steps for ``mle``/``soft`` and outer
    multiplier updates for ``hard``; ``max_inner_iters`` bounds each inner
    solve in hard mode. ``init=None`` starts from the circuit's current
    weights (projected onto the simplices).
    """

    mode: str = "mle"
    max_iters: int = 5000
    step_size: float = 0.05
    tol_grad: float = 1e-8
    tol_residual: float = 1e-8
    penalty_weights: object = 1.0
    mu: float = 10.0
    rho: float = 10.0
    multipliers: object = None
    max_inner_iters: int = 5000
    seed: int = 0
    init: str | None = "uniform"

    def __post_init__(self):
        if self.mode not in ("mle", "soft", "hard"):
            raise TrainError(f"unknown mode {self.mode!r}")
        if self.max_iters < 1 or self.max_inner_iters < 1:
            raise TrainError("iteration limits must be positive")
        if not self.step_size > 0:
            raise TrainError("step_size must be positive")
        if not (self.tol_grad > 0 and self.tol_residual > 0):
            raise TrainError("tolerances must be positive")
        if not self.mu > 0 or not self.rho > 1:
            raise TrainError("need mu > 0 and rho > 1")
        if self.init == "dirichlet":
            self.init = "random-dirichlet"
        if self.init not in (None, "uniform", "random-dirichlet"):
            raise TrainError(f"unknown init {self.init!r}")


@dataclass
class TrainReport:
    iterations: int
    log_likelihood: float
    residuals: np.ndarray
    trace: list
    termination: str
    grad_norm: float = float("nan")
    multipliers: np.ndarray | None = None
    mu: float | None = None
    floored_rows: int = 0

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals))) if len(self.residuals) else 0.0

    def to_text(self) -> str:
        """Human-readable table followed by ``key=value`` lines."""
        rows = [
            ("termination", self.termination),
            ("iterations", str(self.iterations)),
            ("log-likelihood", f"{self.log_likelihood:.12g}"),
            ("max |residual|", f"{self.max_residual:.6g}"),
            ("grad norm", f"{self.grad_norm:.6g}"),
        ]
        if self.mu is not None:
            rows.append(("mu", f"{self.mu:.6g}"))
        if self.floored_rows:
            rows.append(("floored rows", str(self.floored_rows)))
        width = max(len(k) for k, _ in rows)
        out = [f"{k:<{width}}  {v}" for k, v in rows]
        if len(self.residuals):
            out.append("residuals:")
            out.extend(f"  [{i}] {r: .6e}" for i, r in enumerate(self.residuals))
        out.append("")
        out.append(f"termination={self.termination}")
        out.append(f"iterations={self.iterations}")
        out.append(f"log_likelihood={self.log_likelihood!r}")
        out.append(f"max_residual={self.max_residual!r}")
        out.append(f"grad_norm={self.grad_norm!r}")
        out.append("residuals=" + ",".join(repr(float(r)) for r in self.residuals))
        if self.multipliers is not None:
            out.append("multipliers=" + ",".join(repr(float(x)) for x in self.multipliers))
        if self.mu is not None:
            out.append(f"mu={self.mu!r}")
        out.append(f"floored_rows={self.floored_rows}")
        return "\n".join(out) + "\n"


def project_simplex(values) -> np.ndarray:
    """Euclidean projection onto {x : x >= 0, sum x = 1} (sort-and-threshold)."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("need a non-empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / ks > 0)[-1]
    theta = css[rho] / (rho + 1)
    x = np.maximum(v - theta, 0.0)
    # keep the sum exact to rounding
    return x / x.sum()


def project_weights(w: np.ndarray, slices) -> np.ndarray:
    out = np.empty_like(w)
    for s in slices:
        out[s] = project_simplex(w[s])
    return out


def initial_weights(circuit: Circuit, config: TrainConfig) -> np.ndarray:
    slices = circuit.sum_slices()
    if config.init is None:
        return project_weights(circuit.weights, slices)
    w = np.empty(circuit.n_weights)
    if config.init == "uniform":
        for s in slices:
            k = s.stop - s.start
            w[s] = 1.0 / k
    else:
        rng = Xoshiro256(config.seed)
        for s in slices:
            w[s] = rng.dirichlet_ones(s.stop - s.start)
    return w


class _Objective:
    """Average log-likelihood over deduplicated rows, plus the residual vector.

    Data rows and residual queries go through the circuit in one batch:
    rows ``[0, q)`` are the system's queries (row 0 is the empty query)
    and the rest are the distinct data rows.
    """

    def __init__(self, circuit: Circuit, dataset: Dataset, system: ResidualSystem | None):
        if dataset.m == 0:
            raise DataError("empty dataset")
        self.circuit = circuit
        uniq, counts = dataset.counts(circuit)
        self.system = system if system is not None and len(system) else None
        head = (self.system._evidence(circuit) if self.system is not None
                else circuit.evidence(None)[None, :])
        self.q = head.shape[0]
        self.ev = np.vstack([head, uniq])
        self.counts = counts
        self.m = float(dataset.m)
        self.n_res = len(self.system) if self.system is not None else 0

    def __call__(self, w, grad: bool):
        """Return (ll, d ll, residuals, jacobian, floored row count)."""
        if grad:
            s, ds = self.circuit.values_and_grads(self.ev, w)
        else:
            s, ds = self.circuit.values(self.ev, w), None
        z = s[0]
        if not z > 0 or not np.isfinite(z):
            return -math.inf, None, np.full(self.n_res, np.nan), None, len(self.counts)
        q = self.q
        p = s[q:] / z
        live = p > LOG_FLOOR
        ll = float(np.dot(self.counts, np.log(np.maximum(p, LOG_FLOOR))) / self.m)
        floored = int(self.counts[~live].sum())
        gl = c = jac = None
        if grad:
            cnt = np.where(live, self.counts, 0.0)
            ratio = cnt / np.where(live, s[q:], 1.0)
            gl = (ratio @ ds[q:] - cnt.sum() * ds[0] / z) / self.m
        if self.system is None:
            return ll, gl, np.zeros(0), None, floored
        pq = s[:q] / z
        pq[0] = 1.0
        if grad:
            dq = ds[:q] / z - np.outer(s[:q], ds[0]) / z**2
            dq[0] = 0.0
            c, jac = self.system.combine(pq, dq)
        else:
            c = self.system.combine(pq)
        return ll, gl, c, jac, floored


class _Ascent:
    """Projected gradient ascent on f(w) = ll(w) - penalty(C(w))."""

    def __init__(self, obj: _Objective, slices, step: float, penalty, callback=None):
        self.callback = callback
        self.obj = obj
        self.slices = slices
        self.step = step
        self.penalty = penalty  # (C) -> (value, dvalue/dC)

    def evaluate(self, w, grad=True):
        ll, gl, c, jac, floored = self.obj(w, grad)
        pen, dpen = self.penalty(c)
        f = ll - pen
        g = None
        if grad:
            g = gl - (dpen @ jac if jac is not None else 0.0)
        return f, g, ll, c, floored

    def run(self, w, max_iters, tol_grad, trace):
        """Return (w, f, ll, c, floored, grad_norm, converged, failed)."""
        f, g, ll, c, floored = self.evaluate(w)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            return w, f, ll, c, floored, math.nan, False, True
        gnorm = math.nan
        for _ in range(max_iters):
            cand = project_weights(w + self.step * g, self.slices)
            gnorm = float(np.linalg.norm(cand - w) / self.step)
            if gnorm < tol_grad:
                return w, f, ll, c, floored, gnorm, True, False
            eta = self.step
            for _ in range(MAX_HALVINGS):
                fc = self.evaluate(cand, grad=False)[0]
                if fc >= f:
                    break
                eta *= 0.5
                cand = project_weights(w + eta * g, self.slices)
            w = cand
            if self.callback is not None:
                self.callback(w)
            f, g, ll, c, floored = self.evaluate(w)
            trace.append(f)
            if not np.isfinite(f) or not np.all(np.isfinite(g)):
                return w, f, ll, c, floored, gnorm, False, True
        cand = project_weights(w + self.step * g, self.slices)
        gnorm = float(np.linalg.norm(cand - w) / self.step)
        return w, f, ll, c, floored, gnorm, gnorm < tol_grad, False


def _check_mode(config: TrainConfig, mode: str):
    if config.mode != mode:
        raise TrainError(f"config.mode is {config.mode!r}, expected {mode!r}")


def _lambda_vector(lam, n: int) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.size == 1:
        lam = np.full(n, lam[0])
    if lam.size != n:
        raise TrainError(f"{lam.size} penalty weights for {n} residuals")
    if np.any(lam < 0):
        raise TrainError("penalty weights must be non-negative")
    return lam


def fit_mle(circuit: Circuit, dataset: Dataset, config: TrainConfig | None = None, callback=None):
    """Maximum-likelihood weights by projected gradient ascent.

    ``callback(w)``, if given, sees the weight vector after every step.
    """
    config = config or TrainConfig()
    return _fit_penalized(circuit, dataset, None, config, np.zeros(0), callback)


def fit_soft(circuit: Circuit, dataset: Dataset, system: ResidualSystem, config: TrainConfig, callback=None):
    """Maximize L(w) - sum_k lam_k C_k(w)**2 with lam = ``config.penalty_weights``."""
    _check_mode(config, "soft")
    lam = _lambda_vector(config.penalty_weights, len(system))
    return _fit_penalized(circuit, dataset, system, config, lam, callback)


def _fit_penalized(circuit, dataset, system, config, lam, callback=None):
    obj = _Objective(circuit, dataset, system)
    slices = circuit.sum_slices()

    def penalty(c):
        return float(np.dot(lam, c * c)), 2.0 * lam * c

    ascent = _Ascent(obj, slices, config.step_size, penalty, callback)
    trace: list = []
    w = initial_weights(circuit, config)
    w, f, ll, c, floored, gnorm, conv, failed = ascent.run(w, config.max_iters, config.tol_grad, trace)
    reason = NUMERICAL_FAILURE if failed else (CONVERGED if conv else MAX_ITERS)
    report = TrainReport(len(trace), ll, np.asarray(c), trace, reason, gnorm, floored_rows=floored)
    return circuit.with_weights(w), report


def fit_hard(circuit: Circuit, dataset: Dataset, system: ResidualSystem, config: TrainConfig, callback=None):
    """Augmented-Lagrangian maximization of L(w) subject to C(w) = 0.

    Converged means max |C_k| < ``tol_residual`` and the last inner solve
    reached ``tol_grad``. Exceeding mu = 1e12 ends in numerical failure.
    """
    _check_mode(config, "hard")
    n = len(system)
    obj = _Objective(circuit, dataset, system)
    slices = circuit.sum_slices()
    lam = np.zeros(n) if config.multipliers is None else _lambda_vector(config.multipliers, n).copy()
    mu = float(config.mu)

    def penalty(c):
        return float(np.dot(lam, c) + 0.5 * mu * np.dot(c, c)), lam + mu * c

    w = initial_weights(circuit, config)
    trace: list = []
    prev_norm = math.inf
    reason = MAX_ITERS
    ll, c, floored, gnorm = math.nan, np.zeros(n), 0, math.nan
    for _ in range(config.max_iters):
        ascent = _Ascent(obj, slices, config.step_size / max(1.0, mu), penalty, callback)
        inner: list = []
        w, f, ll, c, floored, gnorm, inner_conv, failed = ascent.run(
            w, config.max_inner_iters, config.tol_grad, inner)
        trace.append(f)
        if failed:
            reason = NUMERICAL_FAILURE
            break
        cmax = float(np.max(np.abs(c))) if n else 0.0
        if cmax < config.tol_residual and inner_conv:
            reason = CONVERGED
            break
        lam = lam + mu * c
        norm = float(np.linalg.norm(c))
        if norm > 0.5 * prev_norm:
            mu *= config.rho
        prev_norm = norm
        if mu > MU_LIMIT:
            reason = NUMERICAL_FAILURE
            break
    report = TrainReport(len(trace), ll, np.asarray(c), trace, reason, gnorm,
                         multipliers=lam, mu=mu, floored_rows=floored)
    return circuit.with_weights(w), report


def fit(circuit: Circuit, dataset: Dataset, system: ResidualSystem | None, config: TrainConfig, callback=None):
    if config.mode == "mle":
        return fit_mle(circuit, dataset, config, callback)
    if system is None:
        raise TrainError(f"mode {config.mode!r} needs a residual system")
    if config.mode == "soft":
        return fit_soft(circuit, dataset, system, config, callback)
    return fit_hard(circuit, dataset, system, config, callback)
