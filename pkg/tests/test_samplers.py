import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from usage_testgen import (
    AlphaVector,
    SamplerConfig,
    full_conditional,
    initial_state,
    joint_distribution,
    periodic_run,
    reference_model,
    rsgs_run,
)
from usage_testgen.errors import InfeasibleError, ModelError
from usage_testgen.rng import Xoshiro256StarStar, child_seed
from usage_testgen.samplers import GibbsChain, read_trace_tsv, run, run_chains

from conftest import make_model, marginals_tv, random_models

DATA = Path(__file__).parent / "data"


def one_site():
    return make_model("one", {"x": {"a": 0.1, "b": 0.25, "c": 0.65}})


class TestInitialState:
    def test_forced(self):
        m = make_model("f", {"a": {"x": 0.5, "y": 0.5}, "b": ["u", "v"]},
                       forbid=[{"a": "x", "b": "u"}, {"a": "x", "b": "v"}, {"a": "y", "b": "u"}])
        for seed in (0, 1, 2**64 - 1):
            assert initial_state(m, seed) == {"a": "y", "b": "v"}

    def test_transcript(self, m_tiny):
        t = json.loads((DATA / "m_tiny_seed42_transcript.json").read_text())
        rng = Xoshiro256StarStar(42)
        assert list(rng.state) == t["xoshiro_state_after_seeding"]
        for step in t["steps"]:
            assert rng.random() == step["u"]
        assert dict(initial_state(m_tiny, 42)) == t["result"]

    def test_infeasible(self):
        m = make_model("dead", {"a": ["x", "y"], "b": ["u", "v"]},
                       forbid=[{"a": a, "b": b} for a in "xy" for b in "uv"])
        with pytest.raises(InfeasibleError):
            initial_state(m, 0)

    def test_dead_end_restarts(self):
        # a=x is likely under the CPT but has no feasible continuation
        m = make_model("d", {"a": {"x": 0.9, "y": 0.1}, "b": ["u", "v"]},
                       forbid=[{"a": "x", "b": "u"}, {"a": "x", "b": "v"}])
        for seed in range(20):
            assert initial_state(m, seed)["a"] == "y"

    @settings(max_examples=50, deadline=None)
    @given(random_models(), st.integers(0, 2**64 - 1))
    def test_feasible_and_deterministic(self, model, seed):
        try:
            x = initial_state(model, seed)
        except InfeasibleError:
            return
        assert model.compiled.feasible(model.compiled.to_state(x))
        assert initial_state(model, seed) == x


class TestSingleSite:
    @pytest.mark.parametrize("kind", ["rsgs", "periodic"])
    def test_iid(self, kind):
        m = one_site()
        tr = run(m, SamplerConfig(kind=kind, n_samples=100_000, seed=7))
        emp = np.bincount(tr.states[:, 0], minlength=3) / len(tr)
        assert 0.5 * np.abs(emp - [0.1, 0.25, 0.65]).sum() <= 0.01

    def test_rsgs_equals_periodic_for_one_site(self):
        # the rsgs site pick consumes a uniform, so streams differ; distributions agree
        m = one_site()
        a = run(m, SamplerConfig(kind="rsgs", n_samples=50_000, seed=3))
        b = run(m, SamplerConfig(kind="periodic", n_samples=50_000, seed=3))
        ea = np.bincount(a.states[:, 0], minlength=3) / len(a)
        eb = np.bincount(b.states[:, 0], minlength=3) / len(b)
        assert 0.5 * np.abs(ea - eb).sum() <= 0.015

    def test_zero_samples(self, m_tiny):
        tr = rsgs_run(m_tiny, SamplerConfig(n_samples=0, seed=1))
        assert len(tr) == 0 and tr.states.shape == (0, 2)


class TestFidelity:
    def test_rsgs_m_tiny(self, m_tiny):
        tr = rsgs_run(m_tiny, SamplerConfig(kind="rsgs", n_samples=200_000, seed=1, burn_in=1000, thinning=5))
        assert marginals_tv(tr, joint_distribution(m_tiny)) <= 0.01

    @pytest.mark.parametrize("order", [("time", "weather"), ("weather", "time")])
    def test_periodic_m_tiny(self, m_tiny, order):
        tr = periodic_run(m_tiny, SamplerConfig(kind="periodic", n_samples=200_000, seed=1, sweep_order=order))
        assert marginals_tv(tr, joint_distribution(m_tiny)) <= 0.01

    def test_sweep_orders_give_different_traces(self, m_tiny):
        a = periodic_run(m_tiny, SamplerConfig(kind="periodic", n_samples=200, seed=1))
        b = periodic_run(m_tiny, SamplerConfig(kind="periodic", n_samples=200, seed=1,
                                               sweep_order=("weather", "time")))
        assert not np.array_equal(a.states, b.states)

    def test_nonuniform_alpha(self, m_tiny):
        alpha = AlphaVector({"time": 0.2, "weather": 0.8})
        tr = rsgs_run(m_tiny, SamplerConfig(n_samples=100_000, seed=5, alpha=alpha))
        assert marginals_tv(tr, joint_distribution(m_tiny)) <= 0.01


class TestSafetyAndDeterminism:
    @settings(max_examples=40, deadline=None)
    @given(random_models(), st.sampled_from(["rsgs", "periodic"]), st.integers(0, 2**64 - 1))
    def test_every_sample_feasible(self, model, kind, seed):
        try:
            tr = run(model, SamplerConfig(kind=kind, n_samples=200, seed=seed, burn_in=20))
        except InfeasibleError:
            return
        cm = model.compiled
        assert all(cm.feasible(row) and cm.chain_weight(row) > 0 for row in tr.states.tolist())

    def test_constrained_reference_models(self, constrained_model):
        for kind in ("rsgs", "periodic"):
            tr = run(constrained_model, SamplerConfig(kind=kind, n_samples=5000, seed=11))
            cm = constrained_model.compiled
            assert all(cm.feasible(row) for row in tr.states.tolist())

    @pytest.mark.parametrize("kind", ["rsgs", "periodic"])
    def test_same_seed_same_trace(self, constrained_model, kind):
        cfg = SamplerConfig(kind=kind, n_samples=500, seed=2024, thinning=2)
        a, b = run(constrained_model, cfg), run(constrained_model, cfg)
        assert np.array_equal(a.states, b.states) and a.meta == b.meta
        c = run(constrained_model, SamplerConfig(kind=kind, n_samples=500, seed=2025, thinning=2))
        assert not np.array_equal(a.states, c.states)

    def test_run_chains_child_seeds(self, m_tiny):
        cfg = SamplerConfig(n_samples=50, seed=9)
        chains = run_chains(m_tiny, cfg, 3)
        assert [t.meta["seed"] for t in chains] == [child_seed(9, i) for i in range(3)]
        assert np.array_equal(chains[1].states, run(m_tiny, SamplerConfig(n_samples=50, seed=child_seed(9, 1))).states)


class TestConditionals:
    @settings(max_examples=40, deadline=None)
    @given(random_models())
    def test_local_weights_match_exact_conditional(self, model):
        try:
            dist = joint_distribution(model)
        except InfeasibleError:
            assume(False)
        cm = model.compiled
        chain = GibbsChain(model, "rsgs", Xoshiro256StarStar(0), dist.states[0])
        for row, cfg in list(zip(dist.states.tolist(), dist.configs))[:8]:
            chain.state = list(row)
            for s, pid in enumerate(cm.order):
                w = np.array(chain.conditional(s))
                exact = full_conditional(dist, pid, cfg)
                ref = np.array([exact[c] for c in cm.class_ids[s]])
                assert np.abs(w / w.sum() - ref).max() <= 1e-12


class TestConfigValidation:
    @pytest.mark.parametrize("cfg", [
        SamplerConfig(kind="metropolis"),
        SamplerConfig(n_samples=-1),
        SamplerConfig(thinning=0),
        SamplerConfig(burn_in=-5),
        SamplerConfig(kind="rsgs", sweep_order=("time", "weather")),
        SamplerConfig(kind="periodic", sweep_order=("time",)),
        SamplerConfig(kind="periodic", alpha=AlphaVector({"time": 0.5, "weather": 0.5})),
    ])
    def test_usage_errors(self, m_tiny, cfg):
        with pytest.raises(ModelError) as e:
            run(m_tiny, cfg)
        assert e.value.code == "E_USAGE"

    @pytest.mark.parametrize("values", [
        {"time": 0.3, "weather": 0.6},
        {"time": 1.0, "weather": 0.0},
        {"time": 0.5},
        {"time": 0.5, "weather": 0.5, "extra": 0.0},
    ])
    def test_alpha_errors(self, m_tiny, values):
        with pytest.raises(ModelError) as e:
            run(m_tiny, SamplerConfig(alpha=AlphaVector(values)))
        assert e.value.code == "E_ALPHA"

    def test_alpha_one_site(self):
        m = one_site()
        assert AlphaVector({"x": 1.0}).checked(m)

    def test_bad_seed(self, m_tiny):
        with pytest.raises((ValueError, ModelError)):
            run(m_tiny, SamplerConfig(seed=-1))
        with pytest.raises((ValueError, ModelError)):
            run(m_tiny, SamplerConfig(seed=2**64))

    def test_wrong_runner(self, m_tiny):
        with pytest.raises(ModelError):
            rsgs_run(m_tiny, SamplerConfig(kind="periodic"))
        with pytest.raises(ModelError):
            periodic_run(m_tiny, SamplerConfig(kind="rsgs"))


def test_tsv_export(m_tiny):
    tr = rsgs_run(m_tiny, SamplerConfig(n_samples=25, seed=4, thinning=3))
    text = tr.to_tsv()
    assert "# seed: 4" in text and "# raw_steps: 1075" in text
    header, rows = read_trace_tsv(text)
    assert header == ["time", "weather"]
    assert rows == [dict(c) for c in tr.configs]
