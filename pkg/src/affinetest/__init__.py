"""affinetest: testing low-complexity affine-invariant properties of
functions F_p^n -> [R], with exact desk-scale oracles.

Subpackages follow the pipeline: field tables and restriction (field),
affine-constraint algebra (forms), Gowers norms and the constructive inverse
search (gowers), polynomial factors and pattern counting (poly, factor),
decompositions and cleanup (decompose), and the one-sided subspace tester
(tester).  The CLI entry point lives in affinetest.cli.
"""
from .field import (
    BudgetError,
    FieldParams,
    FunctionTable,
    RealTable,
    canonical_index,
    distance,
    e_p,
    index_to_vec,
    restrict_to_affine_span,
)
from .forms import (
    AffineConstraint,
    CellImage,
    ConstraintCollection,
    InducedConstraint,
    LinearForm,
    change_of_view,
    consistency_check,
    cs_complexity,
    dimension_d,
    eval_form,
    make_concise,
    make_concise_collection,
    mixed_dimension,
    tensor_power,
)
from .gowers import (
    CorrelationWitness,
    GowersResult,
    correlation,
    gowers_norm,
    gowers_norm_values,
    inverse_gowers_search,
    polynomial_bias,
    system_product_mean,
)
from .poly import Polynomial, monomials_up_to_degree
from .factor import (
    BiasCertificate,
    DegreeIndex,
    PolynomialFactor,
    bias_certificate,
    cell_histogram,
    common_refinement,
    conditional_expectation,
    degree_index,
    density_index,
    eval_factor,
    is_semantic_refinement,
    pattern_count,
    pattern_probability,
    represents,
)
from .decompose import (
    DecompositionConfig,
    DecompositionResult,
    SelectionError,
    cleanup,
    refine_step,
    robust_refine,
    select_subcell,
    strong_decompose,
    subcell_conditions,
    super_decompose,
)
from .tester import (
    BigPicture,
    PartialInduction,
    SearchOutcome,
    TestReport,
    Witness,
    affine_subspace_test,
    big_picture,
    distance_to_enumerable_property,
    find_induced_occurrence,
    lift_restriction_witness,
    make_witness,
    min_partially_induced_size,
    partially_induces,
    violation_density,
)

__version__ = "0.1.0"
