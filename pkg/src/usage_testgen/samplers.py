"""Random-scan and periodic Gibbs samplers over feasible configurations.

Randomness discipline (fixed so traces are reproducible bit for bit):

* one :class:`~usage_testgen.rng.Xoshiro256StarStar` stream per run, seeded
  from the 64-bit run seed;
* the initial state is drawn first from that stream by forward sampling;
* every categorical draw (site choice or class choice) consumes exactly one
  uniform double and inverts the CDF in declared order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from .core import Configuration, UsageModel
from .errors import InfeasibleError, ModelError
from .rng import Xoshiro256StarStar, categorical, check_seed, child_seed

DEFAULT_BURN_IN = {"rsgs": 1000, "periodic": 100}
MAX_FORWARD_ATTEMPTS = 1000


@dataclass(frozen=True)
class AlphaVector:
    """Site-selection probabilities of the random-scan sampler."""

    values: Mapping[str, float]

    @classmethod
    def uniform(cls, model: UsageModel) -> "AlphaVector":
        V = model.V
        return cls({pid: 1.0 / V for pid in model.chain_order})

    @classmethod
    def from_sequence(cls, model: UsageModel, seq) -> "AlphaVector":
        seq = [float(a) for a in seq]
        if len(seq) != model.V:
            raise ModelError(f"alpha needs {model.V} entries, got {len(seq)}", "E_ALPHA")
        return cls(dict(zip(model.chain_order, seq))).checked(model)

    def checked(self, model: UsageModel) -> "AlphaVector":
        if set(self.values) != set(model.chain_order):
            raise ModelError("alpha must assign every parameter exactly once", "E_ALPHA")
        vals = [self.values[p] for p in model.chain_order]
        if abs(sum(vals) - 1.0) > 1e-12:
            raise ModelError(f"alpha sums to {sum(vals)!r}, not 1", "E_ALPHA")
        if model.V >= 2 and not all(0.0 < a < 1.0 for a in vals):
            raise ModelError("alpha entries must lie strictly between 0 and 1", "E_ALPHA")
        return self

    def as_list(self, model: UsageModel) -> list[float]:
        return [self.values[p] for p in model.chain_order]


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "rsgs"
    n_samples: int = 0
    seed: int = 0
    burn_in: Optional[int] = None
    thinning: int = 1
    alpha: Optional[AlphaVector] = None
    sweep_order: Optional[tuple[str, ...]] = None

    def resolved(self, model: UsageModel) -> "SamplerConfig":
        """Fill defaults and validate against ``model``."""
        if self.kind not in DEFAULT_BURN_IN:
            raise ModelError(f"unknown sampler kind {self.kind!r}", "E_USAGE")
        check_seed(self.seed)
        if self.n_samples < 0 or (self.burn_in is not None and self.burn_in < 0) or self.thinning < 1:
            raise ModelError("n_samples and burn_in must be >= 0 and thinning >= 1", "E_USAGE")
        burn_in = DEFAULT_BURN_IN[self.kind] if self.burn_in is None else self.burn_in
        if self.kind == "rsgs":
            if self.sweep_order is not None:
                raise ModelError("sweep_order applies to the periodic sampler only", "E_USAGE")
            alpha = (self.alpha or AlphaVector.uniform(model)).checked(model)
            return replace(self, burn_in=burn_in, alpha=alpha)
        if self.alpha is not None:
            raise ModelError("alpha applies to the random-scan sampler only", "E_USAGE")
        order = tuple(self.sweep_order) if self.sweep_order is not None else tuple(model.chain_order)
        if sorted(order) != sorted(model.chain_order):
            raise ModelError("sweep_order must be a permutation of the parameter ids", "E_USAGE")
        return replace(self, burn_in=burn_in, sweep_order=order)

    def as_dict(self) -> dict:
        d = {"kind": self.kind, "n_samples": self.n_samples, "seed": self.seed,
             "burn_in": self.burn_in, "thinning": self.thinning}
        if self.alpha is not None:
            d["alpha"] = dict(self.alpha.values)
        if self.sweep_order is not None:
            d["sweep_order"] = list(self.sweep_order)
        return d


@dataclass(frozen=True, eq=False)
class Trace:
    """Retained samples of one run; rows are class indices in chain order."""

    model: UsageModel
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    @property
    def configs(self) -> list[Configuration]:
        cm = self.model.compiled
        return [cm.to_config(row) for row in self.states.tolist()]

    def to_tsv(self) -> str:
        return trace_to_tsv(self)


def _forward_sample(cm, rng):
    for _ in range(MAX_FORWARD_ATTEMPTS):
        state = [0] * cm.V
        for s in range(cm.V):
            row = cm.tables[s][tuple(state[p] for p in cm.parents[s])]
            weights = list(row)
            for item in cm.forbidden_by_last[s]:
                if all(state[p] == c for p, c in item[:-1]):
                    weights[item[-1][1]] = 0.0
            if not any(w > 0.0 for w in weights):
                break
            state[s] = categorical(rng.random(), weights)
        else:
            return tuple(state)
    raise InfeasibleError(
        f"forward sampling found no feasible configuration in {MAX_FORWARD_ATTEMPTS} attempts"
    )


def initial_state(model: UsageModel, seed: int) -> Configuration:
    """Draw a feasible starting configuration by forward sampling along the chain.

    Each parameter's CPT row is renormalized over the classes that do not
    complete a forbidden item with the choices made so far. A walk that hits
    a dead end is restarted from the same stream.
    """
    cm = model.compiled
    return cm.to_config(_forward_sample(cm, Xoshiro256StarStar(seed)))


class GibbsChain:
    """Single-site Gibbs dynamics on the index view of a model.

    ``step()`` performs one random-scan update (``kind="rsgs"``) or one full
    sweep (``kind="periodic"``).
    """

    def __init__(self, model: UsageModel, kind: str, rng: Xoshiro256StarStar, state,
                 alpha: Optional[list[float]] = None, sweep: Optional[list[int]] = None):
        cm = model.compiled
        self.cm = cm
        self.kind = kind
        self.rng = rng
        self.state = list(state)
        self.alpha = alpha
        self.sweep = sweep
        self._cache = [dict() for _ in range(cm.V)]

    def conditional(self, site: int) -> tuple[float, ...]:
        """Unnormalized full-conditional weights for ``site`` in the current state."""
        cm = self.cm
        key = tuple(self.state[p] for p in cm.nbrs[site])
        cache = self._cache[site]
        w = cache.get(key)
        if w is None:
            w = tuple(cm.local_weights(self.state, site))
            cache[key] = w
        return w

    def update(self, site: int) -> None:
        w = self.conditional(site)
        u = self.rng.random()
        try:
            self.state[site] = categorical(u, w)
        except ValueError:
            raise InfeasibleError(
                f"conditional of {self.cm.order[site]!r} has zero mass in state {self.state}", "E_STUCK"
            ) from None

    def step(self) -> None:
        if self.kind == "rsgs":
            self.update(categorical(self.rng.random(), self.alpha))
        else:
            for s in self.sweep:
                self.update(s)


def _chain_for(model, cfg, rng, state):
    cm = model.compiled
    if cfg.kind == "rsgs":
        return GibbsChain(model, "rsgs", rng, state, alpha=cfg.alpha.as_list(model))
    return GibbsChain(model, "periodic", rng, state, sweep=[cm.pos[p] for p in cfg.sweep_order])


def run(model: UsageModel, cfg: SamplerConfig) -> Trace:
    """Run the sampler selected by ``cfg.kind``."""
    cfg = cfg.resolved(model)
    cm = model.compiled
    rng = Xoshiro256StarStar(cfg.seed)
    x0 = _forward_sample(cm, rng)
    chain = _chain_for(model, cfg, rng, x0)
    for _ in range(cfg.burn_in):
        chain.step()
    out = np.empty((cfg.n_samples, cm.V), dtype=np.int64)
    for i in range(cfg.n_samples):
        for _ in range(cfg.thinning):
            chain.step()
        out[i] = chain.state
    meta = {
        **cfg.as_dict(),
        "initial_state": dict(cm.to_config(x0)),
        "raw_steps": cfg.burn_in + cfg.n_samples * cfg.thinning,
        "step_unit": "site update" if cfg.kind == "rsgs" else "sweep",
    }
    return Trace(model, out, meta)


def rsgs_run(model: UsageModel, cfg: SamplerConfig) -> Trace:
    if cfg.kind != "rsgs":
        raise ModelError("rsgs_run needs kind='rsgs'", "E_USAGE")
    return run(model, cfg)


def periodic_run(model: UsageModel, cfg: SamplerConfig) -> Trace:
    if cfg.kind != "periodic":
        raise ModelError("periodic_run needs kind='periodic'", "E_USAGE")
    return run(model, cfg)


def run_chains(model: UsageModel, cfg: SamplerConfig, n_chains: int) -> list[Trace]:
    """Independent chains; chain ``i`` is seeded with ``child_seed(cfg.seed, i)``."""
    return [run(model, replace(cfg, seed=child_seed(cfg.seed, i))) for i in range(n_chains)]


def single_step_frequencies(model: UsageModel, kind: str, start, n_steps: int, seed: int,
                            alpha: Optional[AlphaVector] = None, sweep_order=None) -> dict[tuple, int]:
    """Counts of next states over ``n_steps`` independent one-step moves from ``start``."""
    cfg = SamplerConfig(kind=kind, seed=seed, alpha=alpha, sweep_order=sweep_order).resolved(model)
    cm = model.compiled
    start = tuple(start) if not isinstance(start, Mapping) else cm.to_state(start)
    chain = _chain_for(model, cfg, Xoshiro256StarStar(seed), start)
    counts: dict[tuple, int] = {}
    for _ in range(n_steps):
        chain.state = list(start)
        chain.step()
        key = tuple(chain.state)
        counts[key] = counts.get(key, 0) + 1
    return counts


def trace_to_tsv(trace: Trace) -> str:
    """Comment block of metadata, a header of parameter ids, one row per sample."""
    cm = trace.model.compiled
    lines = [f"# model: {trace.model.name}"]
    for key in ("kind", "seed", "n_samples", "burn_in", "thinning", "raw_steps", "step_unit"):
        if key in trace.meta:
            lines.append(f"# {key}: {trace.meta[key]}")
    if "alpha" in trace.meta:
        lines.append("# alpha: " + ",".join(repr(trace.meta["alpha"][p]) for p in cm.order))
    if "sweep_order" in trace.meta:
        lines.append("# sweep_order: " + ",".join(trace.meta["sweep_order"]))
    if "initial_state" in trace.meta:
        lines.append("# initial_state: " + "\t".join(trace.meta["initial_state"][p] for p in cm.order))
    lines.append("\t".join(cm.order))
    for row in trace.states.tolist():
        lines.append("\t".join(cm.class_ids[k][c] for k, c in enumerate(row)))
    return "\n".join(lines) + "\n"


def read_trace_tsv(text: str) -> tuple[list[str], list[dict]]:
    """Parse a trace export into ``(parameter ids, configurations)``."""
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = rows[0].split("\t")
    return header, [dict(zip(header, ln.split("\t"))) for ln in rows[1:]]
