"""
Merging dependent parameters into a macro-parameter
===================================================
"""

from usage_testgen import joint_distribution, merge_parameters, reference_model, serialize_model
from usage_testgen.exact import merged_configuration
from usage_testgen.errors import MergeScopeError

model = reference_model("day_brightness")
merged = merge_parameters(model, ["time", "brightness"])
print("chain before:", model.chain_order, "after:", merged.chain_order)
print("macro classes:", merged.parameters[0].class_ids)

a, b = joint_distribution(model), joint_distribution(merged)
gap = max(abs(p - b.prob(merged_configuration(c, model, ["time", "brightness"])))
          for c, p in zip(a.configs, a.probs))
print("largest joint difference:", gap)

# the forbidden night+sunny pair disappears inside the macro
tiny = merge_parameters(reference_model("m_tiny"), ["time", "weather"])
print(serialize_model(tiny))

try:
    merge_parameters(reference_model("six_param"), ["time", "weather"])
except MergeScopeError as exc:
    print("refused:", exc)
