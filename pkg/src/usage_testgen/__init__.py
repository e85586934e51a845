"""Usage-model-driven test generation.

Build a joint distribution over equivalence-class-partitioned, dependent
parameters, sample test configurations with Gibbs samplers, verify the
samplers exactly on enumerable models, and emit deduplicated test campaigns.
"""

from .core import (
    ConditionalProbabilityTable,
    Configuration,
    ConstraintSet,
    CPTRow,
    EquivalenceClass,
    NeighborhoodSystem,
    Parameter,
    Requirement,
    UsageModel,
    ValidationReport,
    class_of,
    is_feasible,
    neighborhoods,
    validate_model,
)
from .modelio import load_model, parse_model, reference_model, serialize_model
from .exact import (
    JointDistribution,
    check_positivity,
    energy_of,
    energy_view,
    full_conditional,
    joint_distribution,
    marginal,
    merge_parameters,
    top_k,
    verify_markov_locality,
)
from .samplers import AlphaVector, SamplerConfig, Trace, initial_state, periodic_run, rsgs_run
from .convergence import build_kernel, diagnostics, dobrushin, optimize_alpha, tv_distance
from .campaign import (
    TestCampaign,
    TestCase,
    coverage_report,
    dedupe,
    export_campaign,
    generate_campaign,
    import_campaign,
)

__version__ = "0.1.0"
