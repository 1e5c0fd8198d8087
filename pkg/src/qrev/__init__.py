"""qrev: generalized qubit measurements, their time-reversed operators,
forward/backward trajectory unraveling, and arrow-of-time statistics."""

__version__ = "0.1.0"

from .channels import (
    Binary,
    Continuous,
    Dichotomous,
    Fluorescence,
    GaussianMomentum,
    GaussianPosition,
    Heterodyne,
    QuadratureConfig,
    completeness_residual,
    forward_operator,
    reverse_rank2,
    reversed_operator,
)
from .errors import (
    ConfigError,
    ImpossibleReadout,
    OrthogonalPostselection,
    ParameterError,
    PhysicsError,
    QrevError,
    RankDeficient,
    UndefinedArrow,
    VariantMismatch,
)
from .qubit import (
    Svd2,
    svd2,
    time_reverse_density,
    time_reverse_operator,
    time_reverse_state,
)
from .trajectory import (
    DriveSpec,
    SimConfig,
    TrajectoryRecord,
    bloch_sde_step,
    bloch_velocity,
    forward_step,
    retrodict_step,
    simulate_forward,
    synthesize_readout,
    unravel_backward,
)
from .arrow import (
    ArrowStats,
    BoundaryPair,
    ReadoutRecord,
    backward_probability,
    ensemble_arrow,
    fluorescence_log_arrow,
    forward_probability,
    log_arrow,
    mean_log_arrow_analytic,
    prepost_log_arrow,
    reverse_probability_equiv_check,
)
from .imperfect import (
    BranchEnsemble,
    CoarsePartition,
    branch_ensemble,
    imperfect_backward_probability,
    imperfect_forward_probability,
    imperfect_log_arrow,
    perfect_partition,
)
from .weak_values import (
    MeterOverlapModel,
    WeakValueResult,
    pointer_wavefunction,
    time_reversed_weak_value,
    weak_protocol_probabilities,
    weak_value,
)
