"""Continuum soft robots as Cosserat rods: the backbone strain field as a
space-time signal, its discrete spatial and space-time Fourier spectra, and
sparse functional-basis fits from simulated or measured pose data."""

from .errors import (
    DegenerateTangent,
    EmptyDictionary,
    IndexOutOfRange,
    LengthMismatch,
    NoConvergence,
    NotLieAlgebraElement,
    NumericalError,
    OutOfDomain,
    SingularMass,
    SingularRotation,
    StrainwaveError,
    ValidationError,
    ZeroEnergy,
)
from .liealg import (
    Pose,
    ScrewVector,
    adjoint_big,
    adjoint_small,
    coadjoint_big,
    coadjoint_small,
    dist_se3,
    dist_so3,
    exp_se3,
    hat,
    log_se3,
    vee,
)
from .rodmodel import (
    ActuatorRouting,
    RodProperties,
    actuation_matrix,
    cross_section_props,
    damping_matrix,
    gravity_wrench,
    inertia_matrix,
    stiffness_matrix,
)
from .gvs import (
    BasisDictionary,
    Configuration,
    DynamicsOptions,
    FourierAtom,
    GaussianAtom,
    PolynomialAtom,
    Trajectory,
    basis_matrix,
    family_atoms,
    forward_kinematics,
    generalized_damping,
    generalized_dynamics,
    generalized_stiffness,
    jacobian,
    jacobian_on_grid,
    mass_matrix,
    simulate,
    static_strain_solve,
    strain_at,
    strain_on_grid,
)
from .spectra import (
    Spectrum,
    StrainGrid,
    dsft,
    dstft,
    foh_transfer,
    min_segments,
    reconstruct_pcs,
    reconstruct_pls,
    replica_spectrum,
    spectrum_to_csv,
    stiffness_weighted_truncation,
    truncation_index,
    zoh_transfer,
)
from .fitting import (
    BPDConfig,
    FitResult,
    SeriesFit,
    backbone_errors,
    basis_energy,
    bpd_fit,
    energy_fractions,
    fit_series,
    kkt_certificate,
    truncate_bases,
)
from .pipeline import (
    AnalysisReport,
    ExperimentConfig,
    InputSignalSpec,
    PoseSeries,
    RobotConfig,
    extract_strain,
    generate_input,
    load_config,
    reconstruct_backbone,
    run_procedure,
)

__version__ = "0.1.0"
