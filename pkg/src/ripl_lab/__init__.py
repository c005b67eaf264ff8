"""Multilevel subsampling of isometries with level-structured sparsity:
coherence profiles, restricted-isometry-in-levels certification,
measurement allocation calculators, and weighted l1 recovery."""

from .levels import (
    LevelError,
    LevelStructure,
    SparsityPattern,
    SupportSet,
    best_approx_in_levels,
    count_supports,
    enumerate_supports,
    is_sparse_in_levels,
    random_sparse_vector,
    validate_boundaries,
)
from .operators import (
    BandLayout,
    band_layout,
    dft_matrix,
    fourier_haar_matrix,
    gaussian_matrix,
    haar_matrix,
    is_isometry,
    load_matrix,
    matrix_content_hash,
    matrix_to_csv,
    save_matrix,
)
from .coherence import (
    CoherenceProfile,
    RelativeSparsityReport,
    SearchBudgetError,
    global_coherence,
    local_coherence,
    nonuniform_local_coherence,
    relative_sparsity,
)
from .sampling import (
    AllocationResult,
    MeasurementOperator,
    NonuniformCheck,
    SamplingScheme,
    allocate_haar,
    allocate_uniform,
    build_measurement,
    check_nonuniform_condition,
    draw_scheme,
    haar_interference_weights,
)
from .ripl import (
    CertificationReport,
    EnumerationBudgetError,
    RiclReport,
    certify_recovery,
    ricl_exact,
    ricl_monte_carlo,
    ripl_threshold,
)
from .recovery import (
    ExperimentResult,
    QcbpProblem,
    SolveResult,
    exact_recovery_experiment,
    inverse_sqrt_level_weights,
    recovery_metrics,
    solve_qcbp,
)

__version__ = "0.1.0"
