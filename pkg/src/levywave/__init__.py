"""Spectral Galerkin laboratory for the damped wave equation under pure-jump Levy forcing."""

from .spectral import (
    GalerkinState,
    SpectralDomain,
    fractional_norm,
    from_physical,
    poincare_check,
    to_physical,
    vxh_norm,
)
from .noise import (
    BIG,
    SMALL,
    CompoundPoissonOnly,
    DivergentMomentError,
    JumpEvent,
    LevyModel,
    MarkLaw,
    NoisePath,
    TemperedStable,
    UniformBand,
    UnsupportedMeasureError,
    point_mark_law,
    sample_path,
    small_band_rate,
    small_jump_compensator,
    theta_bar,
    theta_bar_below,
    theta_p,
    theta_under,
)
from .dynamics import (
    CoefficientPair,
    LipschitzAudit,
    apply_jump,
    lipschitz_audit,
    make_coefficients,
)
from .solver import (
    BlowUpError,
    PicardResult,
    SolverConfig,
    Trajectory,
    linear_flow,
    picard_iterate,
    read_trajectory_binary,
    simulate,
    write_trajectory_binary,
    write_trajectory_csv,
)
from .analysis import (
    CouplingReport,
    EnergyParams,
    EnergyReport,
    MartingaleReport,
    MomentReport,
    admissible_kappa_interval,
    compute_params,
    coupling_experiment,
    decay_experiment,
    dissipation_inequality_check,
    energy,
    fit_decay_rate,
    invariant_moments,
    martingale_diagnostic,
    stability_params,
)

__version__ = "0.1.0"
