"""
Test campaigns, coverage and export
===================================
"""

from usage_testgen import coverage_report, export_campaign, generate_campaign, reference_model

model = reference_model("six_param")

for strategy in ("profile", "coverage", "topk"):
    c = generate_campaign(model, strategy, 6, seed=42)
    r = coverage_report(c, model)
    print(f"{strategy:8s} {len(c)} cases  classes {r.class_coverage:.2f}  pairs {r.pair_coverage:.2f}  "
          f"requirements {r.requirement_coverage:.2f}  duplicates dropped {c.duplicates_eliminated}")

c = generate_campaign(model, "coverage", 6)
print(export_campaign(c, "csv"))
print("still uncovered pairs:", len(coverage_report(c, model).uncovered_pairs))
