"""Noise-shaping quantization, fast binary embeddings, and quantized
compressed sensing with structured random measurement ensembles."""

__version__ = "0.1.0"

from .transforms import (
    BOE_DFT,
    BOE_HADAMARD,
    ENSEMBLE_KINDS,
    PCE,
    SignVector,
    StructuredEnsemble,
    apply_column_signs,
    circular_convolve,
    fwht,
    sample_ensemble,
)
from .quantize import (
    Alphabet,
    Beta,
    MSQ,
    QuantizedCode,
    SigmaDelta,
    StabilityWarning,
    coarse_sd_state_bound,
    noise_transfer_matrix,
    quantize_beta,
    quantize_msq,
    quantize_noise_shaping,
    quantize_sigma_delta,
    scheme_from_string,
    scheme_label,
    stability_margin,
)
from .condense import (
    Condenser,
    beta_condensation_vector,
    condense,
    condenser_for_scheme,
    eta_bound,
    pseudo_metric,
    sd_condensation_vector,
    vdr_row_l1_norms,
)
from .embed import (
    DistortionReport,
    EmbeddingPipeline,
    code_distance,
    embed_point,
    evaluate_embedding,
    gaussian_width_mc,
    pack_code,
    read_code,
    recommended_p,
    sample_l1_ball_points,
    unpack_code,
    write_code,
)
from .recover import (
    BpdnResult,
    LinearMap,
    RecoveryProblem,
    SolverParams,
    SparseSignal,
    bpdn_solve,
    choose_eta,
    generate_sparse_signal,
    measurement_operator,
    oracle_eta,
    reconstruct,
)
from .rip import (
    MripReport,
    RipEstimate,
    estimate_rip,
    exact_rip_small,
    expectation_identity_check,
    mrip_check,
)
from .experiments import ExperimentConfig, ExperimentResult, run_experiment
