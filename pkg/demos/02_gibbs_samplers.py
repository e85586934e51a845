"""
Random-scan and periodic Gibbs samplers
=======================================
"""

import numpy as np

from usage_testgen import AlphaVector, SamplerConfig, joint_distribution, reference_model
from usage_testgen.samplers import initial_state, run

model = reference_model("four_param")
dist = joint_distribution(model)
cm = model.compiled

print("start (seed 42):", dict(initial_state(model, 42)))

runs = {
    "rsgs uniform": SamplerConfig("rsgs", n_samples=50_000, seed=1),
    "rsgs light-heavy": SamplerConfig("rsgs", n_samples=50_000, seed=1,
                                      alpha=AlphaVector({"light": 0.4, "weather": 0.2, "road": 0.2, "speed": 0.2})),
    "periodic": SamplerConfig("periodic", n_samples=50_000, seed=1),
}
for label, cfg in runs.items():
    trace = run(model, cfg)
    worst = 0.0
    for k in range(cm.V):
        emp = np.bincount(trace.states[:, k], minlength=cm.n_classes[k]) / len(trace)
        exact = np.bincount(dist.states[:, k], weights=dist.probs, minlength=cm.n_classes[k])
        worst = max(worst, 0.5 * np.abs(emp - exact).sum())
    print(f"{label:18s} worst marginal TV {worst:.4f}  ({trace.meta['raw_steps']} {trace.meta['step_unit']}s)")

# first lines of the TSV export
print("\n".join(run(model, SamplerConfig("rsgs", n_samples=3, seed=9)).to_tsv().splitlines()[:12]))
