"""Estimation of permuted smooth tensors.

The signal is a smooth function sampled on a grid whose indices have been
shuffled by unknown permutations, observed with noise.  The main estimator
(:func:`borda_denoise`) sorts each mode by slice averages and fits a
block-wise polynomial to the sorted tensor.
"""

from .tensor import (
    DenseTensor,
    ModePermutations,
    ShapeError,
    apply_permutation,
    compose,
    frobenius_norm,
    inverse_permutation,
    mse,
    read_pstn,
    refold,
    unfold,
    write_pstn,
)
from .models import (
    DomainError,
    GenerativeFunction,
    NoiseSpec,
    add_gaussian_noise,
    add_noise,
    builtin_model,
    derive_rng,
    evaluate_signal,
    parse_expression,
    sample_bernoulli,
    sample_permutation,
    sample_permutations,
)
from .blockpoly import (
    BlockPolynomialModel,
    CanonicalClustering,
    approximation_error,
    canonical_clustering,
    evaluate_model,
    fit_block_polynomial,
    load_model,
    monomial_basis,
    save_model,
)
from .borda import (
    BordaResult,
    HyperparameterPlan,
    ScoreProfile,
    borda_denoise,
    cross_validate,
    holdout_mask,
    max_permutation_loss,
    optimal_hyperparameters,
    permutation_loss,
    score,
    sort_permutation,
)
from .baselines import (
    SpectralConfig,
    constant_block_lse,
    exhaustive_lse,
    spectral_usvt,
)
from .experiments import (
    ExperimentConfig,
    MetricsReport,
    emit_report,
    export_csv,
    holdout_evaluate,
    ingest_csv,
    load_report,
    run_simulation,
)

__version__ = "0.1.0"
