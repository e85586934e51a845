"""
Exact joint distribution of a small usage model
===============================================

Two parameters, one forbidden combination. Enumerate everything.
"""

from usage_testgen import (check_positivity, energy_of, full_conditional,
                           joint_distribution, marginal, reference_model, top_k)

model = reference_model("m_tiny")
dist = joint_distribution(model)

print("raw mass kept after removing night+sunny:", dist.z_raw)
for cfg, p in top_k(dist, len(dist)):
    print(f"  {p:.6f}  energy {energy_of(dist, cfg):.4f}  {dict(cfg)}")

print("time marginal:", marginal(dist, "time"))
# weather at night never sees the sun
print("weather | night:", full_conditional(dist, "weather", {"time": "night"}))

holds, zeros = check_positivity(dist)
print("positivity holds:", holds, "| zero-mass configurations:", zeros)
