"""Subspace iteration under adaptive noise, with streaming and private PCA."""

__version__ = "0.1.0"

from .angles import (
    AngleReport,
    angle_oracle,
    angle_report,
    cos_theta_k,
    orthonormalize,
    residual_norm,
    tan_theta_k,
)
from .dense import (
    SpectrumSummary,
    coherence,
    dct_basis,
    gram_schmidt_qr,
    load_matrix,
    random_orthogonal,
    random_orthonormal_basis,
    save_matrix,
    singular_values,
    spectral_norm,
    symmetric_eig,
    symmetrize,
    with_spectrum,
)
from .errors import (
    BudgetExceeded,
    CalibrationFailed,
    ConfigInvalid,
    DimensionMismatch,
    GapNonpositive,
    InvalidBudget,
    NoConvergence,
    NoisyPowerError,
    PreconditionUnmet,
    RankDeficient,
    StreamExhausted,
)
from .npm import (
    BudgetedGaussianNoise,
    ConjectureProbeReport,
    ConvergenceTrace,
    EntrywiseScaledGaussian,
    FixedNoise,
    GaussianNoise,
    LaplacianNoise,
    NpmConfig,
    SamplingNoise,
    ZeroNoise,
    check_decrease,
    noise_admissible,
    npm_run,
    probe_conjecture,
    required_iterations,
)
from .private import (
    NoiseScale,
    PrivacyParams,
    SignProfile,
    gaussian_sigma,
    incoherence_trace,
    laplacian_lambda,
    ppm_run,
    private_low_rank,
    sign_profile,
    spectral_ppm_run,
)
from .streaming import (
    ArrayStream,
    FileStream,
    FunctionStream,
    SpikedCovarianceModel,
    SpikedStream,
    SpmConfig,
    calibrate_scale,
    matrix_chernoff_probe,
    measure_error_terms,
    spiked_roundness,
    spm_run,
    sweep_samples,
)
