"""narrowops: sign optimization, Haar-like trees and blocking factorizations
on finite dyadic function spaces, with every construction certified against
exact identities or brute-force oracles."""

from .dyadic import (
    AtomSet,
    Partition,
    SimpleFunction,
    Space,
    dyadic_space,
    embed,
    integral,
    is_sign,
    measurable_wrt,
    norm,
    product_space,
    rademacher,
)
from .haar import (
    HaarLikeSystem,
    MultiIndex,
    SubsetTree,
    build_tree,
    expand,
    haar_norm_formula,
    haar_system,
    natural_order,
    reconstruct,
    telescope,
    tree_from_text,
    tree_to_text,
)
from .operators import (
    BlockProjection,
    DirectSum,
    EllQ,
    FiniteOperator,
    Lq,
    NormEstimate,
    NormedTarget,
    UncondSum,
    block_projection,
    counterexample_operator,
    identity_like,
    identity_operator,
    op_norm,
    op_norm_on_span,
    rank_one_integration,
    restrict,
    s_coordinate_partition,
)
from .narrowness import (
    EpsilonSchedule,
    HppDefectResult,
    SignSearchResult,
    SmallTreeResult,
    SumNarrowResult,
    ToleranceUnachievable,
    build_small_tree,
    epsilon_schedule,
    equal_block_partitions,
    hpp_defect,
    sign_defect,
    sum_narrow_demo,
)
from .uncond import (
    BasicSequence,
    SeriesRep,
    SummationMap,
    burkholder_beta,
    classical_haar_constants,
    make_Y,
    rank1_series,
    uncond_constant,
    uncond_norm,
)
from .signbuilder import (
    BoundedSignResult,
    bounded_sign,
    coefficient_bound_report,
    complete_to_sign,
)
from .factorization import (
    FactorizationResult,
    GrowthReport,
    LowerBoundReport,
    PipelineResult,
    check_lower_bound,
    direct_sum_growth_experiment,
    factorize,
    narrow_sign_pipeline,
    unconditional_target_sign,
)

__version__ = "0.1.0"
