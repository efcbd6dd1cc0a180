"""Fitness scores for the perturbation search and the search driver itself.

A candidate perturbation is scored by two terms that are simply added:

* semantic mismatch: mean cross-entropy of the candidate-trained network on
  clean training images minus its cross-entropy on the corrupted ones, so
  loss of generalization is positive;
* domain divergence: 1 - 2 * eps, where eps is the held-out error of a linear
  discriminator trained to tell corrupted (label 0) from clean (label 1)
  images. The proxy distribution distance 2 * (1 - 2 * eps) is reported
  alongside.

The outer loop maximizes the sum with CMA-ES, training one surrogate network
from scratch per candidate, and keeps the best-ever candidate.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .cmaes import CmaEs
from .data import LabeledDataset, require_nonempty
from .engine import Network, evaluate, init_network
from .errors import SizeMismatch
from .optim import OptimizerConfig, train
from .perturb import (
    PerturbationGenome,
    PixelPerturbation,
    apply_perturbation,
    baseline_uniform,
    decode_genome,
    encode_perturbation,
    genome_dim,
)

DIVERGED_FITNESS = -1e9  # sentinel for candidates whose training blew up

# spawn-key tags for deriving independent seed streams from the master seed
_TAG_START_POINT = 0
_TAG_ES = 1
_TAG_SUBSET = 2
_TAG_CANDIDATE = 3


def derive_seed(master_seed: int, *key: int) -> int:
    """Stable per-purpose seed derivation, independent of scheduling."""
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class FitnessReport:
    f_m: float
    f_d: float
    f_total: float
    epsilon: float
    d_a: float
    clean_train_loss: float
    corrupted_train_loss: float
    surrogate_train_acc: float


@dataclass
class SearchConfig:
    max_pixels: int
    generations: int
    population: int | None = None
    sigma0: float = 1.0
    arch: str | None = None           # default: reduced surrogate per dataset
    optimizer: str = "adam"
    epochs: int = 5
    batch_size: int = 64
    train_subset: int = 2000
    holdout_fraction: float = 0.2
    master_seed: int = 0

    def __post_init__(self):
        if self.max_pixels < 1 or self.generations < 1:
            raise ValueError("max_pixels and generations must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.train_subset < 1:
            raise ValueError("inner-training settings must be positive")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")

    def surrogate_arch(self, num_classes: int) -> str:
        return self.arch or f"8C3-P-16C3-P-64FC-{num_classes}S"


@dataclass
class GenerationLog:
    generation: int
    best_f_total: float
    mean_f_total: float
    best_f_m: float
    best_f_d: float
    best_epsilon: float
    best_ever_f_total: float
    clean_test_acc: float | None
    wall_ms: float

    def to_json(self) -> str:
        rec = {
            "generation": self.generation,
            "best_f_total": self.best_f_total,
            "mean_f_total": self.mean_f_total,
            "best_f_m": self.best_f_m,
            "best_f_d": self.best_f_d,
            "best_epsilon": self.best_epsilon,
            "best_ever_f_total": self.best_ever_f_total,
        }
        if self.clean_test_acc is not None:
            rec["clean_test_acc"] = self.clean_test_acc
        rec["wall_ms"] = self.wall_ms
        return json.dumps(rec)


def semantic_mismatch(net: Network, ds: LabeledDataset,
                      p: PixelPerturbation) -> float:
    """Clean-data cross-entropy minus corrupted-data cross-entropy.

    Both are evaluated with the same network (the one trained on the
    corrupted data), so a positive value means the network generalizes
    worse to clean inputs than to the inputs it was trained on.
    """
    clean_loss = evaluate(net, ds)[1]
    corrupted_loss = evaluate(net, apply_perturbation(ds, p))[1]
    return clean_loss - corrupted_loss


def generalization_gap(net: Network, clean_eval: LabeledDataset,
                       corrupted_train: LabeledDataset) -> float:
    """Clean error rate minus corrupted-train error rate."""
    clean_acc = evaluate(net, clean_eval)[0]
    corrupted_acc = evaluate(net, corrupted_train)[0]
    return (1.0 - clean_acc) - (1.0 - corrupted_acc)


def domain_divergence(
    clean: LabeledDataset,
    corrupted: LabeledDataset,
    split: float = 0.2,
    seed: int = 0,
    epochs: int = 5,
    batch_size: int = 64,
) -> tuple[float, float, float]:
    """Train a linear discriminator and return (epsilon, f_d, d_a).

    Corrupted images get label 0, clean images label 1. The 2n samples are
    interleaved pair-wise and the trailing `split` fraction of pairs is held
    out; epsilon is the held-out error, f_d = 1 - 2*epsilon and
    d_a = 2*(1 - 2*epsilon). The discriminator starts from zero weights, so
    swapping the two sample sets flips every prediction symmetrically and
    leaves epsilon unchanged.
    """
    require_nonempty(clean, "clean set")
    require_nonempty(corrupted, "corrupted set")
    if len(clean) != len(corrupted):
        raise SizeMismatch(f"{len(clean)} clean vs {len(corrupted)} corrupted")
    if tuple(clean.image_shape) != tuple(corrupted.image_shape):
        raise SizeMismatch("clean/corrupted image shapes differ")
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie in (0, 1)")

    n = len(clean)
    images = np.empty((2 * n, *clean.image_shape))
    images[0::2] = corrupted.images
    images[1::2] = clean.images
    labels = np.tile([0, 1], n)

    holdout_pairs = max(1, round(split * n))
    train_pairs = n - holdout_pairs
    if train_pairs < 1:
        raise SizeMismatch("not enough pairs for a train/held-out split")

    task = LabeledDataset(images, labels, 2)
    train_task = task.subset(np.arange(2 * train_pairs))
    holdout_task = task.subset(np.arange(2 * train_pairs, 2 * n))

    c, h, w = clean.image_shape
    disc = init_network("2S", (c, h, w), seed=0)
    disc.params[:] = 0.0  # zero start keeps the discriminator label-symmetric
    disc, _ = train(disc, train_task, OptimizerConfig.default("adam"),
                    epochs=epochs, batch_size=batch_size, seed=seed)
    accuracy = evaluate(disc, holdout_task)[0]
    epsilon = 1.0 - accuracy
    f_d = 1.0 - 2.0 * epsilon
    return epsilon, f_d, 2.0 * f_d


def training_subset(ds: LabeledDataset, size: int, master_seed: int) -> LabeledDataset:
    """Deterministic fitness-evaluation subset, shared by every candidate."""
    if len(ds) <= size:
        return ds
    rng = np.random.default_rng(derive_seed(master_seed, _TAG_SUBSET))
    return ds.subset(np.sort(rng.permutation(len(ds))[:size]))


def _evaluate_candidate(
    clean_subset: LabeledDataset,
    genome: PerturbationGenome,
    cfg: SearchConfig,
    candidate_seed: int,
) -> tuple[FitnessReport, Network]:
    p = decode_genome(genome)
    corrupted = apply_perturbation(clean_subset, p)
    arch = cfg.surrogate_arch(clean_subset.num_classes)
    net = init_network(arch, clean_subset.image_shape,
                       seed=derive_seed(candidate_seed, 0))
    net, _ = train(net, corrupted, OptimizerConfig.default(cfg.optimizer),
                   epochs=cfg.epochs, batch_size=cfg.batch_size,
                   seed=derive_seed(candidate_seed, 1))
    corrupted_acc, corrupted_loss = evaluate(net, corrupted)
    clean_loss = evaluate(net, clean_subset)[1]
    f_m = clean_loss - corrupted_loss
    epsilon, f_d, d_a = domain_divergence(
        clean_subset, corrupted, split=cfg.holdout_fraction,
        seed=derive_seed(candidate_seed, 2),
        epochs=cfg.epochs, batch_size=cfg.batch_size,
    )
    report = FitnessReport(
        f_m=f_m, f_d=f_d, f_total=f_m + f_d, epsilon=epsilon, d_a=d_a,
        clean_train_loss=clean_loss, corrupted_train_loss=corrupted_loss,
        surrogate_train_acc=corrupted_acc,
    )
    return report, net


def evaluate_candidate(
    ds_train: LabeledDataset,
    genome: PerturbationGenome,
    cfg: SearchConfig,
    candidate_seed: int,
) -> FitnessReport:
    """Score one genome: decode, corrupt the shared subset, train a surrogate
    from scratch, and assemble the fitness report. Pure in (inputs, seed)."""
    subset = training_subset(ds_train, cfg.train_subset, cfg.master_seed)
    return _evaluate_candidate(subset, genome, cfg, candidate_seed)[0]


def mdd_es_search(
    ds_train: LabeledDataset,
    cfg: SearchConfig,
    ds_test_clean: LabeledDataset | None = None,
) -> tuple[PixelPerturbation, list[GenerationLog]]:
    """Evolve class-wise pixel perturbations that maximize f_m + f_d.

    The search starts from the uniformly sampled baseline perturbation. Each
    generation trains one surrogate per candidate from scratch, with seeds
    keyed to (master seed, generation, candidate index) so results do not
    depend on evaluation order. `ds_test_clean` is used for diagnostic
    logging only and never influences any fitness value.
    """
    require_nonempty(ds_train)
    shape = ds_train.image_shape
    nc = ds_train.num_classes
    dim = genome_dim(nc, cfg.max_pixels, shape[0])

    start = baseline_uniform(nc, cfg.max_pixels, shape,
                             seed=derive_seed(cfg.master_seed, _TAG_START_POINT))
    m0 = encode_perturbation(start).vector
    es = CmaEs(dim, m0=m0, sigma0=cfg.sigma0, population=cfg.population,
               seed=derive_seed(cfg.master_seed, _TAG_ES))

    subset = training_subset(ds_train, cfg.train_subset, cfg.master_seed)
    logs: list[GenerationLog] = []
    best_genome: PerturbationGenome | None = None
    best_total = -np.inf

    for gen in range(cfg.generations):
        t0 = time.perf_counter()
        candidates = es.ask()
        reports: list[FitnessReport | None] = []
        nets: list[Network | None] = []
        for j, cand in enumerate(candidates):
            genome = PerturbationGenome(cand.vector, nc, cfg.max_pixels, shape)
            seed_j = derive_seed(cfg.master_seed, _TAG_CANDIDATE, gen, j)
            report, net = _evaluate_candidate(subset, genome, cfg, seed_j)
            if np.isfinite(report.f_total):
                cand.fitness = report.f_total
                reports.append(report)
                nets.append(net)
            else:
                cand.fitness = DIVERGED_FITNESS
                reports.append(None)
                nets.append(None)
        es.tell(candidates)

        fitnesses = np.array([c.fitness for c in candidates])
        gen_best = int(fitnesses.argmax())
        gen_best_report = reports[gen_best]
        if fitnesses[gen_best] > best_total:
            best_total = float(fitnesses[gen_best])
            best_genome = PerturbationGenome(
                candidates[gen_best].vector.copy(), nc, cfg.max_pixels, shape
            )

        clean_test_acc = None
        if ds_test_clean is not None and nets[gen_best] is not None:
            clean_test_acc = evaluate(nets[gen_best], ds_test_clean)[0]

        logs.append(GenerationLog(
            generation=gen,
            best_f_total=float(fitnesses[gen_best]),
            mean_f_total=float(fitnesses.mean()),
            best_f_m=gen_best_report.f_m if gen_best_report else float("nan"),
            best_f_d=gen_best_report.f_d if gen_best_report else float("nan"),
            best_epsilon=gen_best_report.epsilon if gen_best_report else float("nan"),
            best_ever_f_total=best_total,
            clean_test_acc=clean_test_acc,
            wall_ms=(time.perf_counter() - t0) * 1000.0,
        ))

    if best_genome is None:  # pragma: no cover - every candidate diverged
        raise RuntimeError("search produced no finite fitness")
    return decode_genome(best_genome), logs


def write_generation_logs(path, logs: list[GenerationLog]) -> None:
    with open(path, "w") as f:
        for log in logs:
            f.write(log.to_json())
            f.write("\n")
