"""
Choosing site probabilities for the random-scan sampler
=======================================================

The sensor site is almost deterministic, visibility is noisy.
"""

from usage_testgen import AlphaVector, build_kernel, dobrushin, optimize_alpha, reference_model

model = reference_model("asymmetric_pair")
res = optimize_alpha(model, budget=200)
print(f"uniform alpha  delta = {res.uniform_dobrushin:.6f}")
print(f"searched alpha delta = {res.dobrushin:.6f} after {res.evaluations} evaluations")
print("alpha:", {k: round(v, 4) for k, v in res.alpha.values.items()})

# coarse sweep for comparison
for a in (0.1, 0.2, 0.3, 0.5, 0.7):
    P = build_kernel(model, "rsgs", alpha=AlphaVector({"sensor": a, "visibility": 1 - a}))
    print(f"  sensor={a:.1f}  delta={dobrushin(P):.6f}")

sym = optimize_alpha(reference_model("symmetric_pair"))
print("symmetric pair stays at", sym.alpha.values)
