"""Domain types of a usage model and structural validation.

A usage model describes the operating conditions of a system under test as a
set of parameters, each partitioned into equivalence classes. Dependencies
between parameters are a chain of conditional probability tables (CPTs)
following ``chain_order``; incompatible class combinations are listed as
forbidden partial assignments.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Optional

from .errors import ModelError

ROWSUM_TOL = 1e-9


@dataclass(frozen=True)
class EquivalenceClass:
    id: str
    description: Optional[str] = None
    range: Optional[tuple[float, float]] = None  # half-open [lo, hi)


@dataclass(frozen=True)
class Parameter:
    id: str
    classes: tuple[EquivalenceClass, ...]
    category: Optional[str] = None

    @property
    def class_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.classes)


class Configuration(Mapping):
    """Immutable, hashable assignment of one class id per parameter id.

    Iteration follows insertion order (the model's chain order when built by
    the library); equality and hashing ignore order.
    """

    __slots__ = ("_map", "_hash")

    def __init__(self, assignment=()):
        self._map = dict(assignment)
        self._hash = None

    def __getitem__(self, key):
        return self._map[key]

    def __iter__(self):
        return iter(self._map)

    def __len__(self):
        return len(self._map)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._map.items()))
        return self._hash

    def __eq__(self, other):
        if isinstance(other, Configuration):
            return self._map == other._map
        if isinstance(other, Mapping):
            return self._map == dict(other)
        return NotImplemented

    def __repr__(self):
        inner = ", ".join(f"{k}={v}" for k, v in self._map.items())
        return f"Configuration({inner})"

    def replace(self, **changes) -> "Configuration":
        new = dict(self._map)
        new.update(changes)
        return Configuration(new)


@dataclass(frozen=True)
class ConstraintSet:
    """Forbidden partial assignments (each of arity >= 2)."""

    forbidden: tuple[Mapping[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "forbidden", tuple(dict(f) for f in self.forbidden))

    def with_item(self, item: Mapping[str, str]) -> "ConstraintSet":
        return ConstraintSet(self.forbidden + (dict(item),))


@dataclass(frozen=True)
class NeighborhoodSystem:
    neighbors: Mapping[str, frozenset]

    def __getitem__(self, site):
        return self.neighbors[site]

    def is_symmetric(self) -> bool:
        return all(s in self.neighbors[t] for s, ns in self.neighbors.items() for t in ns)

    def is_irreflexive(self) -> bool:
        return all(s not in ns for s, ns in self.neighbors.items())


@dataclass(frozen=True)
class Requirement:
    id: str
    predicate: Mapping[str, frozenset]

    def __post_init__(self):
        object.__setattr__(
            self, "predicate", {p: frozenset(v) for p, v in dict(self.predicate).items()}
        )

    def covered_by(self, config: Mapping[str, str]) -> bool:
        return all(config.get(p) in allowed for p, allowed in self.predicate.items())


@dataclass(frozen=True)
class CPTRow:
    when: Mapping[str, str]
    probs: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "when", dict(self.when))
        object.__setattr__(self, "probs", {k: float(v) for k, v in dict(self.probs).items()})


@dataclass(frozen=True)
class ConditionalProbabilityTable:
    param: str
    given: tuple[str, ...]
    rows: tuple[CPTRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "given", tuple(self.given))
        object.__setattr__(self, "rows", tuple(self.rows))

    @classmethod
    def unconditioned(cls, param: str, probs: Mapping[str, float]):
        return cls(param, (), (CPTRow({}, probs),))

    @classmethod
    def from_table(cls, param, given, table):
        """Build from ``{parent-class tuple: {class: prob}}``."""
        given = tuple(given)
        rows = []
        for key, probs in table.items():
            key = key if isinstance(key, tuple) else (key,)
            rows.append(CPTRow(dict(zip(given, key)), probs))
        return cls(param, given, tuple(rows))


@dataclass(frozen=True)
class UsageModel:
    name: str
    parameters: tuple[Parameter, ...]
    chain_order: tuple[str, ...]
    cpts: tuple[ConditionalProbabilityTable, ...]
    constraints: ConstraintSet = ConstraintSet()
    requirements: tuple[Requirement, ...] = ()
    temperature: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "chain_order", tuple(self.chain_order))
        object.__setattr__(self, "cpts", tuple(self.cpts))
        object.__setattr__(self, "requirements", tuple(self.requirements))
        if not isinstance(self.constraints, ConstraintSet):
            object.__setattr__(self, "constraints", ConstraintSet(tuple(self.constraints)))

    @property
    def V(self) -> int:
        return len(self.parameters)

    def parameter(self, pid: str) -> Parameter:
        for p in self.parameters:
            if p.id == pid:
                return p
        raise ModelError(f"unknown parameter {pid!r}", "E_UNKNOWN_REF")

    def cpt(self, pid: str) -> ConditionalProbabilityTable:
        for t in self.cpts:
            if t.param == pid:
                return t
        raise ModelError(f"no CPT for parameter {pid!r}", "E_UNKNOWN_REF")

    @property
    def compiled(self) -> "CompiledModel":
        cm = self._cache.get("compiled")
        if cm is None:
            cm = CompiledModel(self)
            self._cache["compiled"] = cm
        return cm


# --------------------------------------------------------------------------
# operations


def class_of(parameter: Parameter, raw: float) -> str:
    """Map a raw numeric value to the id of the class whose [lo, hi) holds it."""
    if any(c.range is None for c in parameter.classes):
        raise ModelError(f"parameter {parameter.id!r} has classes without ranges", "E_NO_RANGES")
    for c in parameter.classes:
        lo, hi = c.range
        if lo <= raw < hi:
            return c.id
    raise ModelError(f"value {raw!r} outside every class of {parameter.id!r}", "E_OUT_OF_RANGE")


def is_feasible(config: Mapping[str, str], constraints: ConstraintSet, model: UsageModel | None = None) -> bool:
    """False iff ``config`` matches every entry of some forbidden item.

    Entries naming a parameter absent from ``config`` (or, when ``model`` is
    given, an unknown class) raise ``E_UNKNOWN_REF``.
    """
    known = None
    if model is not None:
        known = {p.id: set(p.class_ids) for p in model.parameters}
    infeasible = False
    for item in constraints.forbidden:
        for pid, cid in item.items():
            if pid not in config or (known is not None and (pid not in known or cid not in known[pid])):
                raise ModelError(f"constraint references unknown {pid}={cid}", "E_UNKNOWN_REF")
        if all(config[pid] == cid for pid, cid in item.items()):
            infeasible = True
    return not infeasible


def neighborhoods(model: UsageModel) -> NeighborhoodSystem:
    """Neighborhood system induced by CPT edges, co-parents, and constraints."""
    nb: dict[str, set] = {p.id: set() for p in model.parameters}

    def link(a, b):
        if a != b:
            nb[a].add(b)
            nb[b].add(a)

    for t in model.cpts:
        for parent in t.given:
            link(parent, t.param)
        for a, b in itertools.combinations(t.given, 2):
            link(a, b)
    for item in model.constraints.forbidden:
        for a, b in itertools.combinations(item, 2):
            link(a, b)
    return NeighborhoodSystem({k: frozenset(v) for k, v in nb.items()})


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    path: str
    code: str
    message: str

    def __str__(self):
        return f"{self.severity} {self.code} at {self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Diagnostic, ...] = ()
    warnings: tuple[Diagnostic, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def summary(self) -> str:
        return f"{len(self.errors)} errors, {len(self.warnings)} warnings"


def validate_model(model: UsageModel) -> ValidationReport:
    """Collect every structural error and warning of ``model``.

    Paths are JSON pointers into the model's document form.
    """
    errors: list[Diagnostic] = []
    warnings: list[Diagnostic] = []

    def err(path, code, msg):
        errors.append(Diagnostic("error", path, code, msg))

    if not isinstance(model.name, str) or not model.name:
        err("/name", "E_SCHEMA", "model name must be a nonempty string")
    t = model.temperature
    if not (isinstance(t, (int, float)) and math.isfinite(t) and t > 0):
        err("/temperature", "E_SCHEMA", f"temperature must be positive, got {t!r}")

    classes: dict[str, tuple[str, ...]] = {}
    if not model.parameters:
        err("/parameters", "E_SCHEMA", "model needs at least one parameter")
    for i, p in enumerate(model.parameters):
        path = f"/parameters/{i}"
        if not p.id:
            err(f"{path}/id", "E_SCHEMA", "empty parameter id")
        if p.id in classes:
            err(f"{path}/id", "E_DUP_ID", f"duplicate parameter id {p.id!r}")
            continue
        if not p.classes:
            err(f"{path}/classes", "E_SCHEMA", f"parameter {p.id!r} has no classes")
        seen = set()
        for j, c in enumerate(p.classes):
            if not c.id:
                err(f"{path}/classes/{j}/id", "E_SCHEMA", "empty class id")
            if c.id in seen:
                err(f"{path}/classes/{j}/id", "E_DUP_ID", f"duplicate class id {c.id!r} in {p.id!r}")
            seen.add(c.id)
            if c.range is not None and not c.range[0] < c.range[1]:
                err(f"{path}/classes/{j}/range", "E_SCHEMA", f"empty range {c.range!r}")
        ranged = [(c.range, j) for j, c in enumerate(p.classes) if c.range is not None]
        ranged.sort()
        for (r1, _), (r2, j2) in zip(ranged, ranged[1:]):
            if r2[0] < r1[1]:
                err(f"{path}/classes/{j2}/range", "E_RANGE_OVERLAP", f"ranges {r1} and {r2} overlap")
        classes[p.id] = p.class_ids

    order_pos: dict[str, int] = {}
    if sorted(model.chain_order) != sorted(classes) or len(set(model.chain_order)) != len(model.chain_order):
        err("/chain_order", "E_ORDER", "chain_order must be a permutation of the parameter ids")
    for k, pid in enumerate(model.chain_order):
        order_pos.setdefault(pid, k)

    def check_ref(path, pid, cid=None):
        if pid not in classes:
            err(path, "E_UNKNOWN_REF", f"unknown parameter {pid!r}")
            return False
        if cid is not None and cid not in classes[pid]:
            err(path, "E_UNKNOWN_REF", f"unknown class {cid!r} of parameter {pid!r}")
            return False
        return True

    covered = set()
    positive: dict[str, set] = {pid: set() for pid in classes}
    for i, table in enumerate(model.cpts):
        path = f"/cpts/{i}"
        if not check_ref(f"{path}/param", table.param):
            continue
        if table.param in covered:
            err(f"{path}/param", "E_DUP_ROW", f"second CPT for {table.param!r}")
            continue
        covered.add(table.param)
        given_ok = True
        if len(set(table.given)) != len(table.given) or table.param in table.given:
            err(f"{path}/given", "E_ORDER", "given must list distinct parents other than the parameter")
            given_ok = False
        for k, parent in enumerate(table.given):
            if not check_ref(f"{path}/given/{k}", parent):
                given_ok = False
            elif parent in order_pos and table.param in order_pos and order_pos[parent] >= order_pos[table.param]:
                err(f"{path}/given/{k}", "E_ORDER", f"parent {parent!r} does not precede {table.param!r} in chain_order")
        seen_keys = set()
        for r, row in enumerate(table.rows):
            rpath = f"{path}/rows/{r}"
            key_ok = given_ok
            if set(row.when) != set(table.given):
                err(f"{rpath}/when", "E_SCHEMA", f"when keys {sorted(row.when)} do not match given {list(table.given)}")
                key_ok = False
            elif given_ok:
                for parent in table.given:
                    if not check_ref(f"{rpath}/when/{parent}", parent, row.when[parent]):
                        key_ok = False
            if key_ok:
                key = tuple(row.when[g] for g in table.given)
                if key in seen_keys:
                    err(rpath, "E_DUP_ROW", f"duplicate row for {dict(row.when)}")
                seen_keys.add(key)
            total = 0.0
            for cid, pr in row.probs.items():
                if not check_ref(f"{rpath}/probs/{cid}", table.param, cid):
                    continue
                if not math.isfinite(pr) or pr < 0:
                    err(f"{rpath}/probs/{cid}", "E_NEGATIVE", f"probability {pr!r} is not in [0, 1]")
                elif pr > 0:
                    positive[table.param].add(cid)
                total += pr
            if abs(total - 1.0) > ROWSUM_TOL:
                err(f"{rpath}/probs", "E_ROWSUM", f"row probabilities sum to {total!r}, not 1")
        if given_ok and all(g in classes for g in table.given):
            for key in itertools.product(*(classes[g] for g in table.given)):
                if key not in seen_keys:
                    when = dict(zip(table.given, key))
                    err(f"{path}/rows", "E_MISSING_ROW", f"no row for {when}")
    for pid in classes:
        if pid not in covered:
            err("/cpts", "E_MISSING_ROW", f"no CPT for parameter {pid!r}")

    seen_items = set()
    for i, item in enumerate(model.constraints.forbidden):
        path = f"/constraints/{i}/forbid"
        if len(item) < 2:
            err(path, "E_SCHEMA", "forbidden item needs at least two entries")
        for pid, cid in item.items():
            check_ref(f"{path}/{pid}", pid, cid)
        key = frozenset(item.items())
        if key in seen_items:
            err(path, "E_DUP_ROW", "duplicate forbidden item")
        seen_items.add(key)

    req_ids = set()
    for i, req in enumerate(model.requirements):
        path = f"/requirements/{i}"
        if not req.id or req.id in req_ids:
            err(f"{path}/id", "E_DUP_ID", f"empty or duplicate requirement id {req.id!r}")
        req_ids.add(req.id)
        for pid, allowed in req.predicate.items():
            if not allowed:
                err(f"{path}/predicate/{pid}", "E_SCHEMA", "allowed class set is empty")
            for cid in sorted(allowed):
                check_ref(f"{path}/predicate/{pid}", pid, cid)

    if errors:
        return ValidationReport(tuple(errors), tuple(warnings))

    for i, p in enumerate(model.parameters):
        for j, c in enumerate(p.classes):
            if c.id not in positive[p.id]:
                warnings.append(Diagnostic(
                    "warning", f"/parameters/{i}/classes/{j}", "W_DEAD_CLASS",
                    f"class {p.id}={c.id} has probability 0 in every CPT row"))
    for i, req in enumerate(model.requirements):
        sat = _predicate_satisfiable(model, req.predicate)
        if sat is False:
            warnings.append(Diagnostic(
                "warning", f"/requirements/{i}", "W_UNSAT_REQUIREMENT",
                f"requirement {req.id!r} cannot be met by any configuration allowed by the constraints"))
    return ValidationReport((), tuple(warnings))


def _predicate_satisfiable(model, predicate, node_budget=100_000):
    """Backtracking search for a constraint-respecting completion.

    Returns None when the search budget runs out.
    """
    order = list(model.chain_order)
    domains = []
    for pid in order:
        allowed = predicate.get(pid)
        cids = model.parameter(pid).class_ids
        domains.append([c for c in cids if allowed is None or c in allowed])
    pos = {pid: k for k, pid in enumerate(order)}
    by_last: dict[int, list] = {}
    for item in model.constraints.forbidden:
        by_last.setdefault(max(pos[p] for p in item), []).append(item)
    budget = [node_budget]
    assign: dict[str, str] = {}

    def rec(k):
        if k == len(order):
            return True
        for cid in domains[k]:
            budget[0] -= 1
            if budget[0] < 0:
                raise _Exhausted
            assign[order[k]] = cid
            if not any(all(assign[p] == c for p, c in item.items()) for item in by_last.get(k, ())):
                if rec(k + 1):
                    return True
        assign.pop(order[k], None)
        return False

    try:
        return rec(0)
    except _Exhausted:
        return None


class _Exhausted(Exception):
    pass


# --------------------------------------------------------------------------
# index view used by the numeric modules


class CompiledModel:
    """Integer-indexed view of a valid model.

    Sites are positions in ``chain_order``; classes are indices in declared
    order. A state is a tuple of class indices, one per site.
    """

    def __init__(self, model: UsageModel):
        report = validate_model(model)
        if not report.ok:
            raise ModelError("; ".join(str(d) for d in report.errors[:5]), report.errors[0].code)
        self.model = model
        self.order = tuple(model.chain_order)
        self.pos = {pid: k for k, pid in enumerate(self.order)}
        V = len(self.order)
        self.V = V
        self.class_ids = tuple(model.parameter(pid).class_ids for pid in self.order)
        self.n_classes = tuple(len(c) for c in self.class_ids)
        self.cindex = tuple({c: j for j, c in enumerate(cids)} for cids in self.class_ids)

        self.parents: list[tuple[int, ...]] = [()] * V
        self.tables: list[dict] = [{}] * V
        for t in model.cpts:
            s = self.pos[t.param]
            par = tuple(self.pos[g] for g in t.given)
            table = {}
            for row in t.rows:
                key = tuple(self.cindex[self.pos[g]][row.when[g]] for g in t.given)
                table[key] = tuple(row.probs.get(c, 0.0) for c in self.class_ids[s])
            self.parents[s] = par
            self.tables[s] = table
        self.children = [tuple(c for c in range(V) if s in self.parents[c]) for s in range(V)]

        self.forbidden = []
        for item in model.constraints.forbidden:
            entries = tuple(sorted((self.pos[p], self.cindex[self.pos[p]][c]) for p, c in item.items()))
            self.forbidden.append(entries)
        self.forbidden_by_site = [tuple(f for f in self.forbidden if any(p == s for p, _ in f)) for s in range(V)]
        self.forbidden_by_last = [tuple(f for f in self.forbidden if f[-1][0] == s) for s in range(V)]

        nbhd = neighborhoods(model)
        self.nbrs = tuple(tuple(sorted(self.pos[t] for t in nbhd[pid])) for pid in self.order)

    def cpt_prob(self, site, state):
        par = self.parents[site]
        return self.tables[site][tuple(state[p] for p in par)][state[site]]

    def chain_weight(self, state) -> float:
        w = 1.0
        for s in range(self.V):
            w *= self.cpt_prob(s, state)
        return w

    def feasible(self, state) -> bool:
        for item in self.forbidden:
            if all(state[p] == c for p, c in item):
                return False
        return True

    def local_weights(self, state, site) -> list[float]:
        """Unnormalized full-conditional weights of ``site`` given ``state``.

        Only the CPT factors and constraints that touch ``site`` are used.
        """
        cur = list(state)
        out = []
        par = tuple(cur[p] for p in self.parents[site])
        own = self.tables[site][par]
        for c in range(self.n_classes[site]):
            w = own[c]
            if w > 0.0:
                cur[site] = c
                for ch in self.children[site]:
                    w *= self.tables[ch][tuple(cur[p] for p in self.parents[ch])][cur[ch]]
                    if w == 0.0:
                        break
                if w > 0.0:
                    for item in self.forbidden_by_site[site]:
                        if all(cur[p] == k for p, k in item):
                            w = 0.0
                            break
            out.append(w)
        return out

    def to_config(self, state) -> Configuration:
        return Configuration((pid, self.class_ids[k][state[k]]) for k, pid in enumerate(self.order))

    def to_state(self, config: Mapping[str, str]) -> tuple[int, ...]:
        try:
            return tuple(self.cindex[k][config[pid]] for k, pid in enumerate(self.order))
        except KeyError as exc:
            raise ModelError(f"configuration does not assign a known class to {exc}", "E_UNKNOWN_REF") from None
