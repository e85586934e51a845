"""Test campaigns: generation strategies, deduplication, coverage, export."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import Configuration, UsageModel
from .errors import ModelError, StallError, TooLargeError
from .exact import DEFAULT_LIMIT, JointDistribution, joint_distribution, top_k
from .modelio import dumps_canonical, format_float, serialize_model
from .rng import Xoshiro256StarStar
from .samplers import DEFAULT_BURN_IN, AlphaVector, GibbsChain, _forward_sample

STRATEGIES = ("profile", "coverage", "topk")
CAMPAIGN_FORMAT = "usage-testgen-campaign"
STALL_FACTOR = 10


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    id: int
    config: Configuration
    probability: Optional[float]
    strategy: str
    requirement_ids: tuple[str, ...]


@dataclass(frozen=True)
class TestCampaign:
    __test__ = False

    model_name: str
    model_digest: str
    seed: int
    strategy: str
    parameters: tuple[str, ...]
    cases: tuple[TestCase, ...]
    duplicates_eliminated: int = 0

    def __len__(self):
        return len(self.cases)


def model_digest(model: UsageModel) -> str:
    """SHA-256 of the canonical model document, hex-encoded."""
    return hashlib.sha256(serialize_model(model).encode("utf-8")).hexdigest()


def requirements_of(model: UsageModel, config) -> tuple[str, ...]:
    return tuple(r.id for r in model.requirements if r.covered_by(config))


def _try_joint(model, limit):
    try:
        return joint_distribution(model, limit)
    except TooLargeError:
        return None


def _make_cases(model, dist, configs, strategy):
    cases = []
    for i, cfg in enumerate(configs, start=1):
        p = dist.prob(cfg) if dist is not None else None
        cases.append(TestCase(i, cfg, p, strategy, requirements_of(model, cfg)))
    return tuple(cases)


def _profile_stream(model: UsageModel, seed: int, burn_in: Optional[int] = None, thinning: int = 1):
    """Retained RSGS states (uniform site probabilities), duplicates included."""
    cm = model.compiled
    rng = Xoshiro256StarStar(seed)
    chain = GibbsChain(model, "rsgs", rng, _forward_sample(cm, rng),
                       alpha=AlphaVector.uniform(model).as_list(model))
    for _ in range(DEFAULT_BURN_IN["rsgs"] if burn_in is None else burn_in):
        chain.step()
    while True:
        for _ in range(thinning):
            chain.step()
        yield tuple(chain.state)


def _greedy_coverage(dist: JointDistribution, size: int) -> list[int]:
    cm = dist.compiled
    states = dist.states
    covered = [np.zeros(c, dtype=bool) for c in cm.n_classes]
    reachable = [np.bincount(states[:, s], minlength=cm.n_classes[s]) > 0 for s in range(cm.V)]
    remaining = sum(int(r.sum()) for r in reachable)
    lex = np.arange(len(states))
    picked = []
    while remaining and len(picked) < size:
        gain = np.zeros(len(states), dtype=np.int64)
        for s in range(cm.V):
            gain += ~covered[s][states[:, s]]
        # highest gain, then highest probability, then first in enumeration order
        best = np.lexsort((lex, -dist.probs, -gain))[0]
        picked.append(int(best))
        for s in range(cm.V):
            c = states[best, s]
            if not covered[s][c]:
                covered[s][c] = True
                remaining -= 1
    return picked


def generate_campaign(model: UsageModel, strategy: str, size: int, seed: int = 0,
                      limit: int = DEFAULT_LIMIT, burn_in: Optional[int] = None,
                      thinning: int = 1) -> TestCampaign:
    """Build a campaign of at most ``size`` distinct test cases.

    ``profile`` draws from the random-scan Gibbs sampler and drops repeats on
    the fly; ``topk`` takes the most probable configurations; ``coverage``
    greedily picks configurations that cover the most not-yet-covered
    (parameter, class) pairs.
    """
    if strategy not in STRATEGIES:
        raise ModelError(f"unknown strategy {strategy!r}", "E_USAGE")
    if size < 0:
        raise ModelError("size must be >= 0", "E_USAGE")
    cm = model.compiled
    digest = model_digest(model)
    if strategy == "profile":
        dist = _try_joint(model, limit)
    else:
        dist = joint_distribution(model, limit)
    dups = 0
    if size == 0:
        configs = []
    elif strategy == "topk":
        configs = [c for c, _ in top_k(dist, size)]
    elif strategy == "coverage":
        configs = [dist.configs[i] for i in _greedy_coverage(dist, size)]
    else:
        seen = set()
        order = []
        streak = 0
        for state in _profile_stream(model, seed, burn_in, thinning):
            if state in seen:
                dups += 1
                streak += 1
                if streak >= STALL_FACTOR * size:
                    raise StallError(
                        f"profile strategy stalled at {len(order)} of {size} distinct cases "
                        f"after {streak} consecutive duplicates"
                    )
                continue
            streak = 0
            seen.add(state)
            order.append(state)
            if len(order) == size:
                break
        configs = [cm.to_config(s) for s in order]
    return TestCampaign(model.name, digest, seed, strategy, cm.order,
                        _make_cases(model, dist, configs, strategy), dups)


def dedupe(campaign: TestCampaign) -> TestCampaign:
    """Keep the first case of each class assignment; renumber ids from 1."""
    seen = set()
    kept = []
    for case in campaign.cases:
        if case.config in seen:
            continue
        seen.add(case.config)
        kept.append(replace(case, id=len(kept) + 1))
    removed = len(campaign.cases) - len(kept)
    return replace(campaign, cases=tuple(kept), duplicates_eliminated=campaign.duplicates_eliminated + removed)


def profile_cases_to_full_coverage(model: UsageModel, seed: int, limit: int = DEFAULT_LIMIT,
                                   max_draws: int = 1_000_000) -> int:
    """Distinct profile cases needed before every reachable class appears."""
    dist = joint_distribution(model, limit)
    cm = dist.compiled
    missing = {(s, c) for s in range(cm.V) for c in set(dist.states[:, s].tolist())}
    seen = set()
    for draws, state in enumerate(_profile_stream(model, seed), start=1):
        if state not in seen:
            seen.add(state)
            missing.difference_update((s, c) for s, c in enumerate(state))
            if not missing:
                return len(seen)
        if draws >= max_draws:
            raise StallError(f"profile strategy left {len(missing)} classes uncovered after {max_draws} draws")
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class CoverageReport:
    class_coverage: float
    pair_coverage: float
    requirement_coverage: float
    uncovered_classes: tuple[tuple[str, str], ...]
    uncovered_pairs: tuple[tuple[tuple[str, str], tuple[str, str]], ...]
    uncovered_requirements: tuple[str, ...]
    n_classes: int
    n_pairs: int
    n_requirements: int

    def to_document(self) -> dict:
        return {
            "class_coverage": self.class_coverage,
            "pair_coverage": self.pair_coverage,
            "requirement_coverage": self.requirement_coverage,
            "n_classes": self.n_classes,
            "n_pairs": self.n_pairs,
            "n_requirements": self.n_requirements,
            "uncovered_classes": [list(c) for c in self.uncovered_classes],
            "uncovered_pairs": [[list(a), list(b)] for a, b in self.uncovered_pairs],
            "uncovered_requirements": list(self.uncovered_requirements),
        }


def _fraction(hit, total):
    return hit / total if total else 1.0


def coverage_report(campaign: TestCampaign, model: UsageModel, limit: int = DEFAULT_LIMIT,
                    dist: Optional[JointDistribution] = None) -> CoverageReport:
    """Class, cross-parameter pair, and requirement coverage of a campaign.

    Classes and pairs that carry no probability mass are left out of the
    denominators.
    """
    dist = dist if dist is not None else joint_distribution(model, limit)
    cm = dist.compiled
    V = cm.V
    S = dist.states
    classes = sorted({(s, c) for s in range(V) for c in set(S[:, s].tolist())})
    pairs = sorted({(s, int(row[s]), t, int(row[t])) for row in S for s in range(V) for t in range(s + 1, V)})
    case_states = [cm.to_state(case.config) for case in campaign.cases]
    got_classes = {(s, x[s]) for x in case_states for s in range(V)}
    got_pairs = {(s, x[s], t, x[t]) for x in case_states for s in range(V) for t in range(s + 1, V)}
    covered_reqs = {rid for case in campaign.cases for rid in requirements_of(model, case.config)}

    def name(s, c):
        return (cm.order[s], cm.class_ids[s][c])

    miss_c = tuple(name(s, c) for s, c in classes if (s, c) not in got_classes)
    miss_p = tuple((name(s, a), name(t, b)) for s, a, t, b in pairs if (s, a, t, b) not in got_pairs)
    req_ids = [r.id for r in model.requirements]
    miss_r = tuple(r for r in req_ids if r not in covered_reqs)
    return CoverageReport(
        class_coverage=_fraction(len(classes) - len(miss_c), len(classes)),
        pair_coverage=_fraction(len(pairs) - len(miss_p), len(pairs)),
        requirement_coverage=_fraction(len(req_ids) - len(miss_r), len(req_ids)),
        uncovered_classes=miss_c,
        uncovered_pairs=miss_p,
        uncovered_requirements=miss_r,
        n_classes=len(classes),
        n_pairs=len(pairs),
        n_requirements=len(req_ids),
    )


# --------------------------------------------------------------------------
# export


def campaign_to_document(campaign: TestCampaign) -> dict:
    return {
        "format": CAMPAIGN_FORMAT,
        "version": 1,
        "model_name": campaign.model_name,
        "model_digest": campaign.model_digest,
        "seed": campaign.seed,
        "strategy": campaign.strategy,
        "parameters": list(campaign.parameters),
        "duplicates_eliminated": campaign.duplicates_eliminated,
        "cases": [
            {
                "id": c.id,
                "config": {p: c.config[p] for p in campaign.parameters},
                "probability": c.probability,
                "strategy": c.strategy,
                "requirements": list(c.requirement_ids),
            }
            for c in campaign.cases
        ],
    }


def export_campaign(campaign: TestCampaign, fmt: str = "structured") -> str:
    """Render a campaign as a structured JSON document or as CSV."""
    if fmt == "structured":
        return dumps_canonical(campaign_to_document(campaign))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case_id", *campaign.parameters, "probability", "strategy", "requirements"])
        for c in campaign.cases:
            prob = "" if c.probability is None else format_float(c.probability)
            w.writerow([c.id, *(c.config[p] for p in campaign.parameters), prob, c.strategy,
                        ";".join(c.requirement_ids)])
        return buf.getvalue()
    raise ModelError(f"unknown export format {fmt!r}", "E_USAGE")


def import_campaign(text: str) -> TestCampaign:
    """Inverse of ``export_campaign(..., "structured")``."""
    doc = json.loads(text)
    if doc.get("format") != CAMPAIGN_FORMAT:
        raise ModelError("not a campaign document", "E_SCHEMA")
    params = tuple(doc["parameters"])
    cases = tuple(
        TestCase(
            int(c["id"]),
            Configuration((p, c["config"][p]) for p in params),
            None if c["probability"] is None else float(c["probability"]),
            c["strategy"],
            tuple(c["requirements"]),
        )
        for c in doc["cases"]
    )
    return TestCampaign(doc["model_name"], doc["model_digest"], int(doc["seed"]), doc["strategy"],
                        params, cases, int(doc["duplicates_eliminated"]))
