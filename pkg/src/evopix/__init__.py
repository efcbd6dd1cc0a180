"""evopix: evolutionary search for class-wise few-pixel training-data corruption.

The package bundles a small from-scratch CNN engine, four parameter-update
rules (SGD, ADAM, RMSProp, AdaBound), a full-covariance CMA-ES, the pixel
perturbation machinery with its fitness scores (semantic mismatch + domain
divergence), and analysis drivers for optimizer robustness and loss-surface
interpolation.
"""

__version__ = "0.1.0"

from .data import LabeledDataset, load_dataset, load_idx, save_dataset, synth_dataset
from .engine import (
    Network,
    NetworkSpec,
    backward,
    cross_entropy,
    evaluate,
    format_arch,
    forward,
    init_network,
    load_checkpoint,
    param_count,
    parse_arch,
    save_checkpoint,
)
from .optim import OptimizerConfig, OptimizerState, TrainHistory, step, train
from .cmaes import Candidate, CmaEs
from .perturb import (
    PerturbationGenome,
    PixelPerturbation,
    apply_perturbation,
    baseline_column,
    baseline_uniform,
    decode_genome,
    encode_perturbation,
    genome_dim,
    load_perturbation,
    save_perturbation,
)
from .fitness import (
    FitnessReport,
    GenerationLog,
    SearchConfig,
    domain_divergence,
    evaluate_candidate,
    generalization_gap,
    mdd_es_search,
    semantic_mismatch,
)
from .analysis import (
    ComparisonReport,
    SurfacePoint,
    loss_surface,
    optimizer_comparison,
)
