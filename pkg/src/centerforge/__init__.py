"""centerforge: graph-transform construction of centre-unstable manifolds.

Library layout mirrors the pipeline: manifold_models (geometry),
map_extension (cutoff extension and block bounds), graph_transform (the
invariant-section solver), eos_factorization (gradient descent on 2x2 matrix
factorisation), surgery (boundary modification), nonsmooth (Clarke calculus
probes) and cli (batch front door).
"""

from .manifold_models import (
    BundlePoint,
    ManifoldModel,
    embed,
    make_arc_model,
    make_circle_model,
    retract,
    transport,
)
from .map_extension import (
    BundleMap,
    ExtendedMap,
    block_jacobian,
    bump_phi,
    c1_distance_to_linearization,
    extend_map,
    find_bound_certified_radius,
    find_safe_radius,
    tubular_bump,
    verify_global_bounds,
)
from .benchmarks import (
    ShearBlocks,
    make_linear_benchmark,
    make_shear_benchmark,
)
from .graph_transform import (
    Section,
    TransformConfig,
    apply_graph_transform,
    contraction_ratio,
    derivative_bound_trace,
    invariance_residual,
    invert_cu,
    make_zero_section,
    reconstruct_manifold,
    solve_fixed_section,
    tangency_check,
)

__version__ = "0.1.0"
