import hashlib

import pytest
from hypothesis import assume, given, settings, strategies as st

from usage_testgen import (
    Configuration,
    coverage_report,
    dedupe,
    export_campaign,
    generate_campaign,
    import_campaign,
    joint_distribution,
    reference_model,
    top_k,
)
from usage_testgen.campaign import (
    TestCampaign,
    TestCase,
    model_digest,
    profile_cases_to_full_coverage,
)
from usage_testgen.errors import InfeasibleError, StallError, TooLargeError

from conftest import make_model, random_models


def tiny_case(i, t, w):
    return TestCase(i, Configuration({"time": t, "weather": w}), None, "profile", ())


def campaign_of(cases, model_name="m_tiny"):
    return TestCampaign(model_name, "0" * 64, 0, "profile", ("time", "weather"), tuple(cases))


class TestGenerate:
    @pytest.mark.parametrize("strategy", ["profile", "coverage", "topk"])
    def test_size_zero(self, m_tiny, strategy):
        c = generate_campaign(m_tiny, strategy, 0, seed=1)
        assert c.cases == () and c.duplicates_eliminated == 0

    def test_topk(self, m_tiny):
        c = generate_campaign(m_tiny, "topk", 3, seed=5)
        dist = joint_distribution(m_tiny)
        assert [(x.config, x.probability) for x in c.cases] == top_k(dist, 3)
        assert [dict(x.config) for x in c.cases] == [
            {"time": "day", "weather": "sunny"},
            {"time": "day", "weather": "rain"},
            {"time": "night", "weather": "rain"},
        ]

    def test_coverage_m_tiny(self, m_tiny):
        c = generate_campaign(m_tiny, "coverage", 10)
        assert len(c) <= 3
        assert coverage_report(c, m_tiny).class_coverage == 1.0

    @pytest.mark.parametrize("name", ["m_tiny", "four_param", "six_param", "day_brightness",
                                      "asymmetric_pair", "symmetric_pair", "frozen"])
    def test_coverage_reaches_full(self, name):
        m = reference_model(name)
        c = generate_campaign(m, "coverage", 1000)
        assert coverage_report(c, m).class_coverage == 1.0

    def test_profile_distinct_and_probabilities(self, constrained_model):
        size = min(10, len(joint_distribution(constrained_model)) - 1)
        c = generate_campaign(constrained_model, "profile", size, seed=42)
        assert len({x.config for x in c.cases}) == len(c) == size
        dist = joint_distribution(constrained_model)
        assert all(x.probability == dist.prob(x.config) for x in c.cases)
        assert [x.id for x in c.cases] == list(range(1, size + 1))

    def test_profile_probability_absent_when_not_enumerable(self):
        c = generate_campaign(reference_model("six_param"), "profile", 5, seed=1, limit=10)
        assert all(x.probability is None for x in c.cases)
        with pytest.raises(TooLargeError):
            generate_campaign(reference_model("six_param"), "topk", 5, limit=10)

    def test_stall(self, m_tiny):
        with pytest.raises(StallError) as e:
            generate_campaign(m_tiny, "profile", 6, seed=3)
        assert e.value.code == "E_STALL"

    def test_frozen_profile_never_covers(self):
        with pytest.raises(StallError):
            profile_cases_to_full_coverage(reference_model("frozen"), 42, max_draws=5000)

    @settings(max_examples=40, deadline=None)
    @given(random_models(), st.sampled_from(["profile", "coverage", "topk"]),
           st.integers(0, 2**64 - 1), st.integers(0, 8))
    def test_cases_feasible_and_tagged(self, model, strategy, seed, size):
        try:
            c = generate_campaign(model, strategy, size, seed=seed, burn_in=50)
        except (InfeasibleError, StallError):
            assume(False)
        cm = model.compiled
        for case in c.cases:
            assert cm.feasible(cm.to_state(case.config))
            # tagging re-evaluated directly from the predicates
            want = tuple(r.id for r in model.requirements
                         if all(case.config[p] in allowed for p, allowed in r.predicate.items()))
            assert case.requirement_ids == want

    def test_requirement_tags_m_tiny(self, m_tiny):
        c = generate_campaign(m_tiny, "topk", 5)
        tags = {(x.config["time"], x.config["weather"]): set(x.requirement_ids) for x in c.cases}
        assert tags[("night", "rain")] == {"REQ-NIGHT", "REQ-ADVERSE"}
        assert tags[("day", "sunny")] == set()


class TestDedupe:
    def test_pair(self):
        out = dedupe(campaign_of([tiny_case(1, "day", "sunny"), tiny_case(2, "day", "sunny")]))
        assert len(out) == 1 and out.duplicates_eliminated == 1

    def test_empty(self):
        out = dedupe(campaign_of([]))
        assert out.cases == () and out.duplicates_eliminated == 0

    def test_first_occurrence_order(self):
        a, b, c = ("day", "sunny"), ("day", "rain"), ("night", "fog")
        seq = [a, b, a, c, b]
        out = dedupe(campaign_of([tiny_case(i + 1, *x) for i, x in enumerate(seq)]))
        assert [(x.config["time"], x.config["weather"]) for x in out.cases] == [a, b, c]
        assert [x.id for x in out.cases] == [1, 2, 3]
        assert out.duplicates_eliminated == 2

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.sampled_from(["day", "night"]), st.sampled_from(["sunny", "rain", "fog"]))))
    def test_idempotent_unique(self, seq):
        c = campaign_of([tiny_case(i + 1, *x) for i, x in enumerate(seq)])
        once = dedupe(c)
        assert dedupe(once) == once
        assert len({x.config for x in once.cases}) == len(once) == len(set(seq))
        assert once.duplicates_eliminated == len(seq) - len(set(seq))


class TestCoverage:
    def test_full_support(self, m_tiny):
        c = generate_campaign(m_tiny, "topk", 5)
        r = coverage_report(c, m_tiny)
        assert (r.class_coverage, r.pair_coverage, r.requirement_coverage) == (1.0, 1.0, 1.0)

    def test_empty(self, m_tiny):
        r = coverage_report(campaign_of([]), m_tiny)
        assert (r.class_coverage, r.pair_coverage, r.requirement_coverage) == (0.0, 0.0, 0.0)

    def test_single_case(self, m_tiny):
        r = coverage_report(campaign_of([tiny_case(1, "day", "sunny")]), m_tiny)
        assert r.class_coverage == pytest.approx(0.4)
        assert r.pair_coverage == pytest.approx(0.2)
        assert r.n_classes == 5 and r.n_pairs == 5
        assert ("weather", "rain") in r.uncovered_classes

    def test_vacuous_requirements(self):
        m = reference_model("symmetric_pair")
        assert coverage_report(generate_campaign(m, "topk", 1), m).requirement_coverage == 1.0

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 142), max_size=12), st.integers(0, 142))
    def test_monotone(self, picks, extra):
        m = reference_model("six_param")
        dist = joint_distribution(m)
        cases = [TestCase(i + 1, dist.configs[k], None, "topk", ()) for i, k in enumerate(picks)]
        c0 = TestCampaign("six_param", "", 0, "topk", m.chain_order, tuple(cases))
        c1 = TestCampaign("six_param", "", 0, "topk", m.chain_order,
                          tuple(cases) + (TestCase(len(cases) + 1, dist.configs[extra], None, "topk", ()),))
        r0, r1 = coverage_report(c0, m, dist=dist), coverage_report(c1, m, dist=dist)
        assert r1.class_coverage >= r0.class_coverage
        assert r1.pair_coverage >= r0.pair_coverage
        assert r1.requirement_coverage >= r0.requirement_coverage
        for f in (r1.class_coverage, r1.pair_coverage, r1.requirement_coverage):
            assert 0.0 <= f <= 1.0


class TestExport:
    @pytest.mark.parametrize("strategy", ["profile", "coverage", "topk"])
    def test_structured_round_trip(self, constrained_model, strategy):
        c = generate_campaign(constrained_model, strategy, 4, seed=8)
        text = export_campaign(c, "structured")
        assert import_campaign(text) == c
        assert model_digest(constrained_model) in text

    def test_csv(self, m_tiny):
        c = generate_campaign(m_tiny, "topk", 3)
        text = export_campaign(c, "csv")
        lines = text.splitlines()
        assert len(lines) == 1 + len(c)
        assert lines[0] == "case_id,time,weather,probability,strategy,requirements"
        assert lines[3].startswith("3,night,rain,") and lines[3].endswith(",topk,REQ-NIGHT;REQ-ADVERSE")

    def test_csv_empty_probability(self):
        c = generate_campaign(reference_model("six_param"), "profile", 2, seed=1, limit=10)
        row = export_campaign(c, "csv").splitlines()[1].split(",")
        assert row[-3] == ""

    @pytest.mark.parametrize("strategy,fmt", [("topk", "csv"), ("profile", "csv"), ("profile", "structured")])
    def test_byte_identical(self, m_tiny, strategy, fmt):
        size = 3
        digests = {hashlib.sha256(export_campaign(generate_campaign(m_tiny, strategy, size, seed=42), fmt)
                                  .encode()).hexdigest() for _ in range(2)}
        assert len(digests) == 1

    def test_digest_tracks_content(self, m_tiny):
        assert model_digest(m_tiny) == model_digest(reference_model("m_tiny"))
        assert model_digest(m_tiny) != model_digest(reference_model("four_param"))
