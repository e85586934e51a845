"""Exact transition kernels of the Gibbs samplers and their convergence analysis.

On enumerable models the one-step kernel of either sampler is assembled as a
dense row-stochastic matrix over the feasible support. From it we certify
stationarity and reversibility against the exact joint, compute Dobrushin's
ergodic coefficient, decide ergodicity, and check the geometric contraction
``TV(mu P^n, pi) <= delta^n TV(mu, pi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import Configuration, UsageModel
from .errors import ShapeError
from .exact import DEFAULT_LIMIT, JointDistribution, joint_distribution
from .samplers import AlphaVector

CONTRACTION_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    dist: JointDistribution
    entries: np.ndarray

    @property
    def states(self) -> list[Configuration]:
        return self.dist.configs

    def __len__(self):
        return len(self.entries)


def site_kernels(dist: JointDistribution) -> list[np.ndarray]:
    """One matrix per site (chain order): resample that site from its full conditional."""
    cm = dist.compiled
    n = len(dist)
    index = dist.index
    out = []
    rows = dist.states.tolist()
    for s in range(cm.V):
        P = np.zeros((n, n))
        for i, row in enumerate(rows):
            w = cm.local_weights(row, s)
            total = sum(w)
            target = list(row)
            for c, wc in enumerate(w):
                if wc > 0.0:
                    target[s] = c
                    P[i, index[tuple(target)]] += wc / total
        out.append(P)
    return out


def compose_kernel(mats, kind: str, alpha=None, sweep=None) -> np.ndarray:
    if kind == "rsgs":
        P = np.zeros_like(mats[0])
        for a, M in zip(alpha, mats):
            P += a * M
        return P
    if kind == "periodic":
        P = np.eye(len(mats[0]))
        for s in sweep:
            P = P @ mats[s]
        return P
    raise ValueError(f"unknown sampler kind {kind!r}")


def build_kernel(model: UsageModel, kind: str = "rsgs", alpha: Optional[AlphaVector] = None,
                 sweep_order=None, limit: int = DEFAULT_LIMIT, dist: Optional[JointDistribution] = None) -> TransitionMatrix:
    """Exact one-step kernel of the sampler over the feasible support.

    Random scan: ``sum_s alpha_s P_s``. Periodic: ``P_{s1} P_{s2} ... P_{sV}``
    in sweep order.
    """
    dist = dist if dist is not None else joint_distribution(model, limit)
    mats = site_kernels(dist)
    cm = model.compiled
    if kind == "rsgs":
        a = (alpha or AlphaVector.uniform(model)).checked(model).as_list(model)
        P = compose_kernel(mats, kind, alpha=a)
    else:
        order = sweep_order or model.chain_order
        P = compose_kernel(mats, kind, sweep=[cm.pos[p] for p in order])
    return TransitionMatrix(dist, P)


def dobrushin(P) -> float:
    """``1 - min_{i,j} sum_k min(P[i,k], P[j,k])``."""
    P = np.asarray(getattr(P, "entries", P), dtype=float)
    worst = 1.0
    for i in range(len(P)):
        worst = min(worst, float(np.minimum(P[i], P).sum(axis=1).min()))
    return min(1.0, max(0.0, 1.0 - worst))


def tv_distance(mu, nu) -> float:
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ShapeError(f"length mismatch: {mu.shape} vs {nu.shape}")
    for v in (mu, nu):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"not a probability vector (sums to {v.sum()!r})")
    return float(0.5 * np.abs(mu - nu).sum())


def ergodicity(P) -> tuple[bool, bool, int]:
    """``(irreducible, aperiodic, period)`` of the graph of positive entries."""
    P = np.asarray(getattr(P, "entries", P))
    n = len(P)
    graph = csr_matrix(P > 0)
    n_comp, _ = connected_components(graph, directed=True, connection="strong")
    irreducible = n_comp == 1
    level = np.full(n, -1)
    level[0] = 0
    frontier = [0]
    period = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in graph.indices[graph.indptr[u]:graph.indptr[u + 1]]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    rows, cols = graph.nonzero()
    for u, v in zip(rows, cols):
        if level[u] >= 0:
            period = math.gcd(period, int(level[u] + 1 - level[v]))
    period = abs(period) if period else 0
    return irreducible, period == 1, period


@dataclass(frozen=True)
class ContractionRow:
    n: int
    measured: float
    bound: float
    half_bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.measured


@dataclass(frozen=True)
class DiagnosticsReport:
    kind: str
    n_states: int
    stationarity_residual: float
    detailed_balance_residual: float
    dobrushin: float
    irreducible: bool
    aperiodic: bool
    period: int
    initial_tv: float
    contraction_table: tuple[ContractionRow, ...] = field(default=())

    @property
    def ergodic(self) -> bool:
        return self.irreducible and self.aperiodic

    @property
    def contraction_holds(self) -> bool:
        return all(r.measured <= r.bound + CONTRACTION_SLACK for r in self.contraction_table)

    def to_document(self) -> dict:
        return {
            "kind": self.kind,
            "n_states": self.n_states,
            "stationarity_residual": self.stationarity_residual,
            "detailed_balance_residual": self.detailed_balance_residual,
            "dobrushin": self.dobrushin,
            "ergodic": self.ergodic,
            "irreducible": self.irreducible,
            "aperiodic": self.aperiodic,
            "period": self.period,
            "initial_tv": self.initial_tv,
            "contraction_holds": self.contraction_holds,
            "contraction_table": [
                {"n": r.n, "measured_tv": r.measured, "bound": r.bound, "half_bound": r.half_bound}
                for r in self.contraction_table
            ],
        }

    def table_text(self) -> str:
        lines = [
            f"sampler            {self.kind}",
            f"states             {self.n_states}",
            f"stationarity       {self.stationarity_residual:.3e}",
            f"detailed balance   {self.detailed_balance_residual:.3e}",
            f"dobrushin delta    {self.dobrushin:.12f}",
            f"ergodic            {self.ergodic} (irreducible={self.irreducible}, period={self.period})",
            "",
            f"{'n':>4}  {'TV(mu P^n, pi)':>16}  {'delta^n TV0':>16}  {'margin':>12}",
        ]
        for r in self.contraction_table:
            lines.append(f"{r.n:>4}  {r.measured:>16.6e}  {r.bound:>16.6e}  {r.margin:>12.3e}")
        return "\n".join(lines)


def _initial_vector(dist, mu0):
    n = len(dist)
    if mu0 is None:
        v = np.zeros(n)
        v[0] = 1.0
        return v
    if isinstance(mu0, Mapping):
        v = np.zeros(n)
        v[dist.index[dist.compiled.to_state(mu0)]] = 1.0
        return v
    v = np.asarray(mu0, dtype=float)
    if v.shape != (n,):
        raise ShapeError(f"initial distribution needs {n} entries, got {v.shape}")
    return v


def diagnostics(model: UsageModel, kind: str = "rsgs", alpha: Optional[AlphaVector] = None,
                sweep_order=None, mu0=None, n_max: int = 50, limit: int = DEFAULT_LIMIT) -> DiagnosticsReport:
    """Exact convergence diagnostics of one sampler on an enumerable model.

    ``mu0`` is a probability vector over the support, a configuration (point
    mass), or ``None`` for a point mass on the first support state.
    """
    K = build_kernel(model, kind, alpha, sweep_order, limit)
    P = K.entries
    pi = K.dist.probs
    flow = pi[:, None] * P
    stationarity = float(np.abs(pi @ P - pi).max())
    balance = float(np.abs(flow - flow.T).max())
    delta = dobrushin(P)
    irreducible, aperiodic, period = ergodicity(P)

    mu = _initial_vector(K.dist, mu0)
    tv0 = tv_distance(mu, pi)
    rows = []
    for n in range(1, n_max + 1):
        mu = mu @ P
        tv = float(0.5 * np.abs(mu - pi).sum())
        rows.append(ContractionRow(n, tv, delta ** n * tv0, 0.5 * delta ** n * tv0))
    return DiagnosticsReport(kind, len(K), stationarity, balance, delta, irreducible, aperiodic,
                             period, tv0, tuple(rows))


@dataclass(frozen=True)
class AlphaSearchResult:
    alpha: AlphaVector
    dobrushin: float
    evaluations: int
    uniform_dobrushin: float


def _project(v, eps):
    """Euclidean projection onto ``{a : a_s >= eps, sum a = 1}``."""
    V = len(v)
    mass = 1.0 - V * eps
    u = np.sort(v - eps)[::-1]
    css = np.cumsum(u) - mass
    k = np.nonzero(u - css / np.arange(1, V + 1) > 0)[0][-1]
    theta = css[k] / (k + 1)
    a = np.maximum(v - eps - theta, 0.0) + eps
    return a / a.sum()


def optimize_alpha(model: UsageModel, budget: int = 200, limit: int = DEFAULT_LIMIT,
                   initial_step: float = 0.25, min_step: float = 1e-4, eps: float = 1e-6) -> AlphaSearchResult:
    """Projected coordinate search for the RSGS site probabilities minimizing delta.

    Starts at uniform alpha; for each site tries moving its probability up and
    down by the current step (projecting back onto the simplex interior),
    keeps any strict improvement, and halves the step after a sweep without
    one. Stops when the evaluation budget is spent or the step drops below
    ``min_step``.
    """
    dist = joint_distribution(model, limit)
    mats = site_kernels(dist)
    V = model.V

    def delta_of(a):
        return dobrushin(compose_kernel(mats, "rsgs", alpha=a))

    best = np.full(V, 1.0 / V)
    best_delta = delta_of(best)
    uniform_delta = best_delta
    evals = 1
    if V == 1:
        return AlphaSearchResult(AlphaVector({model.chain_order[0]: 1.0}), best_delta, evals, uniform_delta)

    step = initial_step
    while evals < budget and step >= min_step:
        improved = False
        for s in range(V):
            for sign in (1.0, -1.0):
                if evals >= budget:
                    break
                cand = best.copy()
                cand[s] += sign * step
                cand = _project(cand, eps)
                d = delta_of(cand)
                evals += 1
                if d < best_delta - 1e-15:
                    best, best_delta, improved = cand, d, True
        if not improved:
            step /= 2
    alpha = AlphaVector(dict(zip(model.chain_order, best.tolist())))
    return AlphaSearchResult(alpha, best_delta, evals, uniform_delta)
