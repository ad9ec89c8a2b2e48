"""Interacting-particle simulation of path-dependent mean-field dynamics.

The package splits into a small stack: time grids and interpolated paths
(:mod:`pathmv.grid`), empirical measures and transport distances
(:mod:`pathmv.transport`), coefficient models (:mod:`pathmv.coefficients`,
:mod:`pathmv.jansen_rit`, :mod:`pathmv.keller_segel`), the particle
stepper (:mod:`pathmv.simulator`), and the experiment harness with its CLI
(:mod:`pathmv.harness`, :mod:`pathmv.cli`).
"""

from .coefficients import (
    ConstantCoefficientModel,
    CoefficientModel,
    DiracInitial,
    GaussianInitial,
    IntegralDriftModel,
    MeanFieldOU,
    MeanFieldOUParams,
    TrapezoidAccumulator,
    integral_drift,
    ou_drift,
    trapezoid_update,
)
from .errors import (
    AccumulatorSyncError,
    ConfigurationError,
    DomainError,
    GridDomainError,
    InternalConsistencyError,
    LineageMismatchError,
    PathMVError,
    ResourceLimitError,
    SimulationDivergedError,
    UnsupportedInputError,
)
from .grid import (
    AffinePathView,
    DiscretePath,
    TimeGrid,
    make_grid,
    path_eval,
    path_sup_norm,
)
from .jansen_rit import (
    JansenRitModel,
    JansenRitParams,
    jansen_rit_diffusion,
    jansen_rit_drift,
    sigmoid_S,
)
from .keller_segel import (
    KellerSegelModel,
    KellerSegelParams,
    ks_b0,
    ks_kernel,
    ks_memory_drift,
)
from .kernels import USING_NUMBA, set_thread_count
from .simulator import (
    BrownianDriver,
    ParticleEnsemble,
    continuous_eval,
    coupled_pair,
    ensemble_sup_moment,
    euler_step,
    load_ensemble,
    load_ensemble_csv,
    path_modulus,
    save_ensemble,
    save_ensemble_csv,
    simulate,
    strong_error,
)
from .transport import (
    EmpiricalMeasure,
    MeasurePathView,
    MixtureMeasure,
    adjacent_knot_slack,
    d_p_sup,
    mixture_at,
    mixture_sample,
    optimal_pairing,
    wasserstein_1d,
    wasserstein_1d_gaussian,
    wasserstein_assignment,
    wasserstein_to_dirac0,
)

__version__ = "0.1.0"
