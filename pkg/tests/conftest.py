import numpy as np
import pytest
from hypothesis import strategies as st

from usage_testgen import (
    ConditionalProbabilityTable,
    ConstraintSet,
    CPTRow,
    EquivalenceClass,
    Parameter,
    Requirement,
    UsageModel,
    reference_model,
)


@pytest.fixture
def m_tiny():
    return reference_model("m_tiny")


@pytest.fixture(params=["m_tiny", "four_param", "six_param"])
def constrained_model(request):
    return reference_model(request.param)


def make_model(name, layout, given=None, forbid=(), requirements=(), chain=None):
    """Terse model builder: ``layout`` maps parameter id to either a class list
    (uniform, unconditioned) or a table ``{parent-class tuple: {class: p}}``."""
    given = given or {}
    params, cpts = [], []
    for pid, body in layout.items():
        if isinstance(body, dict) and pid in given:
            cids = list(next(iter(body.values())))
            cpts.append(ConditionalProbabilityTable.from_table(pid, given[pid], body))
        elif isinstance(body, dict):
            cids = list(body)
            cpts.append(ConditionalProbabilityTable.unconditioned(pid, body))
        else:
            cids = list(body)
            cpts.append(ConditionalProbabilityTable.unconditioned(pid, {c: 1.0 / len(cids) for c in cids}))
        params.append(Parameter(pid, tuple(EquivalenceClass(c) for c in cids)))
    return UsageModel(name, tuple(params), tuple(chain or layout), tuple(cpts),
                      ConstraintSet(tuple(forbid)), tuple(requirements))


def _probs(draw, n, allow_zero=True):
    lo = 0 if allow_zero else 1
    w = draw(st.lists(st.integers(lo, 9), min_size=n, max_size=n))
    if sum(w) == 0:
        w[0] = 1
    total = sum(w)
    probs = [x / total for x in w]
    probs[-1] = 1.0 - sum(probs[:-1])
    return probs


@st.composite
def random_models(draw, max_params=4, max_classes=3, allow_zero=True, constraints=True):
    """Small random usage models with random DAG structure and constraints."""
    V = draw(st.integers(1, max_params))
    ids = [f"p{i}" for i in range(V)]
    n_cls = [draw(st.integers(1, max_classes)) for _ in ids]
    cls = [[f"c{j}" for j in range(n)] for n in n_cls]
    params = tuple(Parameter(pid, tuple(EquivalenceClass(c) for c in cs)) for pid, cs in zip(ids, cls))
    cpts = []
    for i, pid in enumerate(ids):
        parents = sorted(draw(st.sets(st.sampled_from(ids[:i]), max_size=2)) if i else [], key=ids.index)
        rows = []
        import itertools
        for key in itertools.product(*(cls[ids.index(g)] for g in parents)):
            pr = _probs(draw, n_cls[i], allow_zero)
            rows.append(CPTRow(dict(zip(parents, key)), dict(zip(cls[i], pr))))
        cpts.append(ConditionalProbabilityTable(pid, tuple(parents), tuple(rows)))
    forbid = []
    if constraints and V >= 2:
        for _ in range(draw(st.integers(0, 2))):
            a, b = draw(st.lists(st.sampled_from(range(V)), min_size=2, max_size=2, unique=True))
            item = {ids[a]: draw(st.sampled_from(cls[a])), ids[b]: draw(st.sampled_from(cls[b]))}
            if item not in forbid:
                forbid.append(item)
    reqs = (Requirement("R0", {ids[0]: {cls[0][0]}}),)
    return UsageModel("random", params, tuple(ids), tuple(cpts), ConstraintSet(tuple(forbid)), reqs)


def marginals_tv(trace, dist):
    """Largest per-site total-variation gap between a trace and the exact marginals."""
    cm = dist.compiled
    worst = 0.0
    for k in range(cm.V):
        emp = np.bincount(trace.states[:, k], minlength=cm.n_classes[k]) / len(trace)
        ex = np.bincount(dist.states[:, k], weights=dist.probs, minlength=cm.n_classes[k])
        worst = max(worst, 0.5 * np.abs(emp - ex).sum())
    return worst
