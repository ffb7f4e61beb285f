"""Free-energy fluctuation toolkit for the SK spin glass near the critical window.

Exact Gibbs computations for small systems, Monte Carlo for larger ones, and
numerical verification of the variance representation, cavity expansions, and
the central limit behaviour of the free energy.
"""

__version__ = "0.1.0"

from .ensemble import (
    EnsembleConfig,
    EnsembleResult,
    NormalityReport,
    WindowRow,
    normality_report,
    run_ensemble,
    variance_ci,
    window_scan,
)
from .exact import (
    EXACT_CAP,
    CapacityError,
    CavityContractions,
    CorrelationMatrix,
    CoupledParams,
    GibbsTable,
    OverlapLaw,
    cavity_contractions,
    correlation_matrix,
    coupled_tables,
    gibbs_table,
    overlap_law,
    overlap_moment,
    wht,
)
from .interp import (
    GibpCheck,
    PerSampleChecks,
    PropResidual,
    TaylorBreakdown,
    VarianceRepresentation,
    gibp_derivative_check,
    per_sample_checks,
    prop1_residual,
    stein_bound,
    t_grid,
    taylor_terms,
    variance_representation,
    xi,
)
from .mc import (
    ChainState,
    PTConfig,
    PTMeasurements,
    ThermoResult,
    heat_bath_sweep,
    init_chain,
    integrated_autocorr_time,
    metropolis_sweep,
    parallel_tempering,
    pt_ladder,
    thermo_integration_f,
)
from .model import (
    BetaSchedule,
    DisorderSample,
    SpinConfig,
    beta_for,
    energy,
    nu,
    overlap,
    sample_disorder,
)
from .stats import Estimate
