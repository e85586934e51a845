"""
Exact kernels, Dobrushin coefficient and the contraction table
==============================================================
"""

from usage_testgen import diagnostics, reference_model

for kind in ("rsgs", "periodic"):
    report = diagnostics(reference_model("m_tiny"), kind, n_max=8)
    print(report.table_text())
    print()

# a model where single-site moves cannot leave the starting configuration
frozen = diagnostics(reference_model("frozen"), "rsgs", n_max=3)
print("frozen: ergodic =", frozen.ergodic, "| delta =", frozen.dobrushin)
