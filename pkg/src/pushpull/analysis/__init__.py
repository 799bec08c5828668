"""Error metrics, convergence certificates and counterexample reproductions."""

from .certificate import (
    LAMBDA_FORMS,
    ConvergenceCertificate,
    build_certificate,
    certify,
    check_composite,
    composite_matrix,
    contraction_sigma,
    contraction_tau,
    determinant3,
    lambda_bound,
    lambda_k_constant,
    sequence_constants,
    spectral_radius,
    spectral_radius_power,
    stability_minors,
)
from .impossibility import (
    consensus_closed_forms,
    consensus_ratio_floor,
    reproduce_impossibility_consensus,
    reproduce_impossibility_pgd,
)
from ..metrics import (
    ErrorTriple,
    consensus_error,
    consensus_error_centered,
    error_triple,
    log_linear_fit,
    optimality_gap,
    tracking_error,
)
