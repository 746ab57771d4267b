"""Subspace learning on the Grassmann manifold with disturbance kernels.

Sequences of feature frames become subspaces (top singular directions);
subspaces are compared by closed-form kernels, including two that average
the projection kernel over random disturbances of the input subspaces; a
from-scratch SMO dual SVM classifies on the resulting Gram matrices; and a
harness reproduces the split/corruption/latency protocols with grid-search
model selection. Monte-Carlo samplers validate every closed form.
"""

from .subspace import SubspaceRep, build_subspace, truncate, null_complement
from .kernels import (
    KernelSpec,
    GramMatrix,
    DgCoefficients,
    FAMILIES,
    betainc,
    disturbance_scale,
    expected_cos2,
    retention_prob,
    dg_pg_coefficients,
    projection_kernel,
    binet_cauchy_kernel,
    scaled_projection_kernel,
    dg_pg_kernel,
    dg_dir_kernel,
    kernel_value,
    gram,
    cross_gram,
)
from .grassmann import (
    TangentVector,
    FixedTheta,
    FoldedTheta,
    PseudoGaussian,
    DirichletFluctuation,
    McEstimate,
    exp_map,
    principal_angles,
    sample_basis_disturbance,
    sample_dirichlet,
    mc_projection_moment,
    svd_perturbation_check,
)
from .svm import (
    BinaryProblem,
    SvmModel,
    MulticlassModel,
    SmoConvergenceError,
    train_binary,
    decision,
    dual_objective,
    train_multiclass,
    predict,
    save_model,
    load_model,
)
from .harness import (
    Dataset,
    DatasetEntry,
    PerSubjectFraction,
    RandomHalf,
    KFold,
    AppendedNoiseSpec,
    ParamGrid,
    ExperimentPlan,
    SynthSpec,
    Report,
    load_dataset,
    save_dataset,
    append_noise,
    truncate_latency,
    synth_generate,
    run_experiment,
)
from .estimators import SubspaceTransformer, GrassmannSVC

__version__ = "0.1.0"

__all__ = [
    "SubspaceRep", "build_subspace", "truncate", "null_complement",
    "KernelSpec", "GramMatrix", "DgCoefficients", "FAMILIES",
    "betainc", "disturbance_scale", "expected_cos2", "retention_prob",
    "dg_pg_coefficients", "projection_kernel", "binet_cauchy_kernel",
    "scaled_projection_kernel", "dg_pg_kernel", "dg_dir_kernel",
    "kernel_value", "gram", "cross_gram",
    "TangentVector", "FixedTheta", "FoldedTheta", "PseudoGaussian",
    "DirichletFluctuation", "McEstimate", "exp_map", "principal_angles",
    "sample_basis_disturbance", "sample_dirichlet", "mc_projection_moment",
    "svd_perturbation_check",
    "BinaryProblem", "SvmModel", "MulticlassModel", "SmoConvergenceError",
    "train_binary", "decision", "dual_objective", "train_multiclass",
    "predict", "save_model", "load_model",
    "Dataset", "DatasetEntry", "PerSubjectFraction", "RandomHalf", "KFold",
    "AppendedNoiseSpec", "ParamGrid", "ExperimentPlan", "SynthSpec", "Report",
    "load_dataset", "save_dataset", "append_noise", "truncate_latency",
    "synth_generate", "run_experiment",
    "SubspaceTransformer", "GrassmannSVC",
]
