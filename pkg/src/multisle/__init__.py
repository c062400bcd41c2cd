"""Multiple-SLE partition functions, pairing predictions, and lattice validation."""

from .geometry import (
    BoundaryConfig,
    KappaParams,
    MoebiusTransform,
    PlanarPairing,
    apply_moebius,
    complement_channel,
    cross_ratio,
    enumerate_pairings,
    is_planar,
    rect_corner_preimages,
)
from .partition import (
    ConvexCombination,
    GffProduct,
    IsingPfaffian,
    PairingPrediction,
    PureChannel,
    convex_combine,
    covariance_defect,
    gff_Z,
    ising_Z,
    log_grad,
    pde_residual,
    pfaffian,
    predict_pairing_probabilities,
    pure_Z,
    reduce_to_ode,
)
from .loewner import (
    Localization,
    LoewnerState,
    NoiseSource,
    advance,
    drift,
    martingale_diagnostic,
    simulate,
)
from .hoermander import closed_form_bracket, hoermander_rank, numeric_bracket
from .harness import ExperimentSpec, Report, compare, emit, run_experiment, wilson_interval

__version__ = "0.1.0"
