"""cocyclelab: random transfer-operator cocycles on the interval, exactly.

Exact step-function calculus for piecewise-linear interval maps, driving
bases (i.i.d., heavy-tailed, suspension towers), equivariant densities and
adapted norms, quenched limit-theorem diagnostics (Green-Kubo variance,
martingale decomposition, CLT/LIL checks), and the tower counterexample
with divergent asymptotic variance.
"""

from .base import BasePath, BaseSpec, sample_path, shift, roof
from .cocycle import (
    BELOW_ROOF,
    ROOF_TOP,
    CocycleSpec,
    CoveringResult,
    covering_time,
    expansion_on_average,
)
from .counterexample import (
    SuspensionExperiment,
    cover_time,
    exact_correlation,
    maker_check,
    operator_correlation,
    tail_check,
    variance_blowup,
)
from .equivariant import (
    C_VAR,
    DecayEstimate,
    EquivariantData,
    EquivariantFamily,
    adapted_norm,
    default_decay_test_set,
    fit_decay,
    k_hitting_estimate,
    pullback_density,
)
from .errors import (
    CertificationError,
    CocycleLabError,
    ConfigError,
    CoveringFailureError,
    NonConvergenceError,
    PieceBudgetError,
    StabilizationError,
    TailNotCertifiedError,
    WindowError,
)
from .limits import (
    CenteredObservable,
    ObservableSpec,
    center,
    correlations,
    covariance_decay_check,
    decorrelation_check,
    martingale_decompose,
    martingale_variances,
    sigma_squared,
    twisted_checks,
)
from .maps import PiecewiseLinearMap, buzzi_t1, catalog, custom_map, doubling, identity_map
from .montecarlo import (
    TrialBatch,
    birkhoff,
    clt_diagnostics,
    lil_envelope,
    sample_mu,
    simulate,
    variance_growth,
)
from .stepfn import ONE_FN, BVNorms, StepFunction, bv_norms, l1_distance, pointwise
from .transfer import (
    UlamMatrix,
    bins_to_step,
    cocycle_apply,
    is_lebesgue_preserving,
    koopman_compose,
    koopman_norm_bound,
    step_to_bins,
    transfer_apply,
    ulam_apply,
    ulam_matrix,
)

__version__ = "0.1.0"
