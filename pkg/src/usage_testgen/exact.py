"""Exact enumeration of a usage model's joint distribution.

This is the oracle every sampler and campaign result is checked against. The
joint is the product of CPT entries along ``chain_order``, with forbidden
configurations set to zero and the remainder renormalized.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .core import (
    ConditionalProbabilityTable,
    Configuration,
    ConstraintSet,
    CPTRow,
    EquivalenceClass,
    NeighborhoodSystem,
    Parameter,
    Requirement,
    UsageModel,
)
from .errors import InfeasibleError, MergeScopeError, ModelError, TooLargeError

DEFAULT_LIMIT = 200_000
MACRO_SEP = "×"


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Exact distribution over the feasible, positive-mass configurations.

    ``states`` holds one row of class indices per configuration (columns in
    chain order), sorted lexicographically.
    """

    model: UsageModel
    states: np.ndarray
    probs: np.ndarray
    z_raw: float
    temperature: float
    n_zero_feasible: int = 0
    _extra: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.probs)

    @property
    def compiled(self):
        return self.model.compiled

    @cached_property
    def configs(self) -> list[Configuration]:
        cm = self.compiled
        return [cm.to_config(tuple(row)) for row in self.states.tolist()]

    @cached_property
    def index(self) -> dict[tuple, int]:
        return {tuple(row): i for i, row in enumerate(self.states.tolist())}

    def prob_of_state(self, state) -> float:
        i = self.index.get(tuple(state))
        return 0.0 if i is None else float(self.probs[i])

    def prob(self, config: Mapping[str, str]) -> float:
        return self.prob_of_state(self.compiled.to_state(config))

    @property
    def size_of_space(self) -> int:
        return math.prod(self.compiled.n_classes)


def _dense_table(cm, site):
    shape = tuple(cm.n_classes[p] for p in cm.parents[site]) + (cm.n_classes[site],)
    arr = np.zeros(shape)
    for key, probs in cm.tables[site].items():
        arr[key] = probs
    return arr


def joint_distribution(model: UsageModel, limit: int = DEFAULT_LIMIT) -> JointDistribution:
    """Enumerate the joint distribution of ``model``.

    Configurations are expanded one chain position at a time, dropping partial
    assignments as soon as they complete a forbidden item. Raises
    ``E_TOO_LARGE`` once more than ``limit`` feasible (partial) configurations
    are alive, and ``E_INFEASIBLE`` when no feasible configuration has
    positive mass.
    """
    cm = model.compiled
    states = np.zeros((1, 0), dtype=np.int64)
    weights = np.ones(1)
    for s in range(cm.V):
        C = cm.n_classes[s]
        n = len(states)
        states = np.concatenate(
            [np.repeat(states, C, axis=0), np.tile(np.arange(C, dtype=np.int64), n)[:, None]], axis=1
        )
        weights = np.repeat(weights, C)
        table = _dense_table(cm, s)
        idx = tuple(states[:, p] for p in cm.parents[s]) + (states[:, s],)
        weights = weights * table[idx]
        if cm.forbidden_by_last[s]:
            keep = np.ones(len(states), dtype=bool)
            for item in cm.forbidden_by_last[s]:
                hit = np.ones(len(states), dtype=bool)
                for p, c in item:
                    hit &= states[:, p] == c
                keep &= ~hit
            states = states[keep]
            weights = weights[keep]
        if len(states) > limit:
            raise TooLargeError(
                f"enumeration limit {limit} exceeded: at least {len(states)} feasible "
                f"configurations over the first {s + 1} of {cm.V} parameters",
                limit=limit,
                reached=len(states),
            )
    positive = weights > 0.0
    z_raw = float(weights[positive].sum())
    if not z_raw > 0.0:
        raise InfeasibleError(f"model {model.name!r} has no feasible configuration with positive probability")
    return JointDistribution(
        model=model,
        states=states[positive],
        probs=weights[positive] / z_raw,
        z_raw=z_raw,
        temperature=float(model.temperature),
        n_zero_feasible=int((~positive).sum()),
    )


def _site(dist, site):
    try:
        return dist.compiled.pos[site]
    except KeyError:
        raise ModelError(f"unknown parameter {site!r}", "E_UNKNOWN_REF") from None


def marginal(dist: JointDistribution, site: str) -> dict[str, float]:
    k = _site(dist, site)
    cids = dist.compiled.class_ids[k]
    vec = np.bincount(dist.states[:, k], weights=dist.probs, minlength=len(cids))
    return dict(zip(cids, vec.tolist()))


def full_conditional(dist: JointDistribution, site: str, context: Mapping[str, str]) -> dict[str, float]:
    """Distribution of ``site`` given every other parameter's class in ``context``."""
    cm = dist.compiled
    k = _site(dist, site)
    base = {pid: context[pid] for pid in cm.order if pid != site}
    base[site] = cm.class_ids[k][0]
    state = list(cm.to_state(base))
    weights = []
    for c in range(cm.n_classes[k]):
        state[k] = c
        weights.append(dist.prob_of_state(state))
    total = math.fsum(weights)
    if total <= 0.0:
        raise InfeasibleError(f"context {dict(base)} has zero probability for every class of {site!r}", "E_ZERO_CONTEXT")
    return {cid: w / total for cid, w in zip(cm.class_ids[k], weights)}


@dataclass(frozen=True)
class EnergyView:
    """Gibbs-form view: ``pi(x) = exp(-U(x)/T) / z_t``."""

    energies: np.ndarray
    temperature: float
    z_t: float

    def probabilities(self) -> np.ndarray:
        return np.exp(-self.energies / self.temperature) / self.z_t


def energy_view(dist: JointDistribution) -> EnergyView:
    T = dist.temperature
    energies = -T * np.log(dist.probs)
    z_t = float(np.exp(-energies / T).sum())
    return EnergyView(energies, T, z_t)


def energy_of(dist: JointDistribution, config: Mapping[str, str]) -> float:
    """``-T ln pi(x)``; ``math.inf`` for infeasible or zero-mass configurations."""
    p = dist.prob(config)
    if p <= 0.0:
        return math.inf
    return -dist.temperature * math.log(p)


def _group_ids(columns: np.ndarray) -> np.ndarray:
    if columns.shape[1] == 0:
        return np.zeros(len(columns), dtype=np.int64)
    _, inv = np.unique(columns, axis=0, return_inverse=True)
    return inv.reshape(-1)


def _conditional_rows(dist, k, cols):
    C = dist.compiled.n_classes[k]
    gid = _group_ids(dist.states[:, cols])
    tab = np.zeros((gid.max() + 1, C))
    np.add.at(tab, (gid, dist.states[:, k]), dist.probs)
    tab /= tab.sum(axis=1, keepdims=True)
    return tab[gid]


def verify_markov_locality(dist: JointDistribution, nbhd: NeighborhoodSystem) -> float:
    """Largest gap between conditioning on all other sites and on the neighbors only."""
    cm = dist.compiled
    worst = 0.0
    for pid in cm.order:
        k = cm.pos[pid]
        others = [j for j in range(cm.V) if j != k]
        near = sorted(cm.pos[t] for t in nbhd[pid])
        gap = np.abs(_conditional_rows(dist, k, others) - _conditional_rows(dist, k, near)).max()
        worst = max(worst, float(gap))
    return worst


def top_k(dist: JointDistribution, k: int) -> list[tuple[Configuration, float]]:
    """Most probable configurations, ties broken by enumeration order."""
    if k < 1:
        raise ValueError("k must be positive")
    order = sorted(range(len(dist)), key=lambda i: (-dist.probs[i], i))[:k]
    return [(dist.configs[i], float(dist.probs[i])) for i in order]


def check_positivity(dist: JointDistribution) -> tuple[bool, int]:
    """Whether every configuration of the full product space has positive mass.

    Returns ``(holds, number of zero-mass configurations)``.
    """
    zero = dist.size_of_space - len(dist)
    return zero == 0, zero


# --------------------------------------------------------------------------
# macro-parameters


def macro_id(ids) -> str:
    return MACRO_SEP.join(ids)


def merged_configuration(config: Mapping[str, str], model: UsageModel, ids) -> Configuration:
    """Image of an original configuration under the merge of ``ids``."""
    ordered = [p for p in model.chain_order if p in set(ids)]
    mid = macro_id(ordered)
    last = ordered[-1]
    out = {}
    for pid in model.chain_order:
        if pid == last:
            out[mid] = MACRO_SEP.join(config[p] for p in ordered)
        elif pid not in ordered:
            out[pid] = config[pid]
    return Configuration(out)


def merge_parameters(model: UsageModel, ids, limit: int = DEFAULT_LIMIT, rtol: float = 1e-12) -> UsageModel:
    """Replace the parameters ``ids`` by one macro-parameter.

    Macro classes are the class tuples with positive local weight that no
    internal constraint forbids. The macro CPT is conditioned on the union of
    the external parents of ``ids``; children of ``ids`` are re-conditioned
    on the macro-parameter. The merged model's joint equals the original's
    under the tuple identification.
    """
    cm = model.compiled
    ids = list(ids)
    if not ids or len(set(ids)) != len(ids):
        raise MergeScopeError("ids must be a nonempty list of distinct parameter ids")
    for pid in ids:
        if pid not in cm.pos:
            raise MergeScopeError(f"unknown parameter {pid!r}")
    idset = set(ids)
    ordered = [p for p in cm.order if p in idset]
    posn = [cm.pos[p] for p in ordered]
    first, last = posn[0], posn[-1]
    for q in range(first + 1, last):
        if cm.order[q] in idset:
            continue
        bad = [cm.order[p] for p in cm.parents[q] if cm.order[p] in idset]
        if bad:
            raise MergeScopeError(
                f"{cm.order[q]!r} sits between merged parameters in chain_order but depends on {bad}"
            )
    ext = sorted({p for s in posn for p in cm.parents[s] if cm.order[p] not in idset})
    ext_ids = [cm.order[p] for p in ext]

    n_tuples = math.prod(cm.n_classes[s] for s in posn)
    n_ctx = math.prod(cm.n_classes[p] for p in ext)
    if n_tuples * n_ctx > limit:
        raise TooLargeError(f"merge needs {n_tuples * n_ctx} table entries, limit {limit}", limit, n_tuples * n_ctx)

    internal = [f for f in cm.forbidden if all(p in posn for p, _ in f)]
    tuples = list(itertools.product(*(range(cm.n_classes[s]) for s in posn)))
    contexts = list(itertools.product(*(range(cm.n_classes[p]) for p in ext)))
    weights = np.zeros((len(contexts), len(tuples)))
    state = [0] * cm.V
    for a, ctx in enumerate(contexts):
        for p, c in zip(ext, ctx):
            state[p] = c
        for b, tup in enumerate(tuples):
            for s, c in zip(posn, tup):
                state[s] = c
            if any(all(state[p] == c for p, c in f) for f in internal):
                continue
            w = 1.0
            for s in posn:
                w *= cm.cpt_prob(s, state)
            weights[a, b] = w
    alive = np.flatnonzero(weights.max(axis=0) > 0.0)
    if len(alive) == 0:
        raise InfeasibleError("merged parameters admit no class tuple with positive mass")
    rowsum = weights.sum(axis=1)
    reachable = rowsum > 0
    ref = rowsum[reachable].max()
    if np.any(np.abs(rowsum[reachable] - ref) > rtol * ref) or not np.all(reachable):
        raise MergeScopeError(
            "constraints inside the merged group remove different mass under different contexts "
            f"of {ext_ids}; the merge would need to reweight those parameters"
        )

    mid = macro_id(ordered)
    single = len(ordered) == 1
    params_by_id = {p.id: p for p in model.parameters}

    def tuple_name(tup):
        return MACRO_SEP.join(cm.class_ids[s][c] for s, c in zip(posn, tup))

    names = [tuple_name(tuples[b]) for b in alive]
    if single:
        src = params_by_id[ordered[0]]
        keep = set(names)
        macro_classes = tuple(c for c in src.classes if c.id in keep)
        category = src.category
    else:
        macro_classes = tuple(EquivalenceClass(n) for n in names)
        cats = {params_by_id[p].category for p in ordered}
        category = cats.pop() if len(cats) == 1 else None
    macro = Parameter(mid, macro_classes, category)

    new_order = []
    for pid in cm.order:
        if pid == ordered[-1]:
            new_order.append(mid)
        elif pid not in idset:
            new_order.append(pid)
    new_pos = {p: k for k, p in enumerate(new_order)}

    rows = []
    for a, ctx in enumerate(contexts):
        probs = {names[i]: float(weights[a, b] / rowsum[a]) for i, b in enumerate(alive)}
        rows.append(CPTRow({cm.order[p]: cm.class_ids[p][c] for p, c in zip(ext, ctx)}, probs))
    macro_cpt = ConditionalProbabilityTable(mid, tuple(ext_ids), tuple(rows))
    split = {names[i]: dict(zip(ordered, (cm.class_ids[s][c] for s, c in zip(posn, tuples[b]))))
             for i, b in enumerate(alive)}

    cpts = []
    for t in model.cpts:
        if t.param in idset:
            if t.param == ordered[-1]:
                cpts.append(macro_cpt)
            continue
        if not idset.intersection(t.given):
            cpts.append(t)
            continue
        given = sorted({g for g in t.given if g not in idset} | {mid}, key=new_pos.__getitem__)
        lookup = {tuple(r.when[g] for g in t.given): r.probs for r in t.rows}
        new_rows = []
        for combo in itertools.product(*(
            [c.id for c in macro_classes] if g == mid else params_by_id[g].class_ids for g in given
        )):
            when = dict(zip(given, combo))
            flat = dict(when)
            flat.pop(mid, None)
            flat.update(split[when[mid]])
            new_rows.append(CPTRow(when, lookup[tuple(flat[g] for g in t.given)]))
        cpts.append(ConditionalProbabilityTable(t.param, tuple(given), tuple(new_rows)))
    if ordered[-1] not in {t.param for t in model.cpts}:
        cpts.append(macro_cpt)

    forbidden = []
    for item in model.constraints.forbidden:
        inside = {p: c for p, c in item.items() if p in idset}
        outside = {p: c for p, c in item.items() if p not in idset}
        if not inside:
            new_items = [dict(item)]
        elif not outside:
            new_items = []
        else:
            new_items = [
                {mid: n, **outside} for n in names if all(split[n][p] == c for p, c in inside.items())
            ]
        for ni in new_items:
            if ni not in forbidden:
                forbidden.append(ni)

    requirements = []
    for r in model.requirements:
        inside = {p: v for p, v in r.predicate.items() if p in idset}
        pred = {p: v for p, v in r.predicate.items() if p not in idset}
        if inside:
            allowed = frozenset(n for n in names if all(split[n][p] in v for p, v in inside.items()))
            if not allowed:
                raise MergeScopeError(f"requirement {r.id!r} has no macro class left after merging")
            pred[mid] = allowed
        requirements.append(Requirement(r.id, pred))

    parameters = []
    for p in model.parameters:
        if p.id == ordered[-1]:
            parameters.append(macro)
        elif p.id not in idset:
            parameters.append(p)
    return UsageModel(
        name=model.name,
        parameters=tuple(parameters),
        chain_order=tuple(new_order),
        cpts=tuple(cpts),
        constraints=ConstraintSet(tuple(forbidden)),
        requirements=tuple(requirements),
        temperature=model.temperature,
    )
