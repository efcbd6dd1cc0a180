"""Analysis drivers: weight-space interpolation and optimizer robustness."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .engine import Network, evaluate
from .errors import ArchitectureMismatch
from .fitness import derive_seed
from .optim import OptimizerConfig, TrainHistory, train
from .perturb import PixelPerturbation, apply_perturbation


@dataclass(frozen=True)
class SurfacePoint:
    alpha: float
    train_loss: float
    test_loss: float
    train_acc: float
    test_acc: float


def loss_surface(
    net_a: Network,
    net_b: Network,
    ds_train: LabeledDataset,
    ds_test: LabeledDataset,
    n_alphas: int = 21,
) -> list[SurfacePoint]:
    """Evaluate w_alpha = alpha * w_b + (1 - alpha) * w_a on a uniform grid.

    The grid includes both endpoints, so alpha=0 reproduces net_a and
    alpha=1 reproduces net_b exactly. Convention: pass the SGD solution as
    net_a and the ADAM solution as net_b.
    """
    if net_a.spec != net_b.spec or net_a.input_shape != net_b.input_shape:
        raise ArchitectureMismatch(
            f"{net_a.arch}@{net_a.input_shape} vs {net_b.arch}@{net_b.input_shape}"
        )
    if n_alphas < 2:
        raise ValueError("need at least the two endpoint alphas")
    points = []
    probe = net_a.copy()
    for alpha in np.linspace(0.0, 1.0, n_alphas):
        probe.params = alpha * net_b.params + (1.0 - alpha) * net_a.params
        train_acc, train_loss = evaluate(probe, ds_train)
        test_acc, test_loss = evaluate(probe, ds_test)
        points.append(SurfacePoint(float(alpha), train_loss, test_loss,
                                   train_acc, test_acc))
    return points


def surface_table(points: list[SurfacePoint]) -> str:
    """Tab-delimited table with a header row, one line per alpha."""
    lines = ["alpha\ttrain_loss\ttest_loss\ttrain_acc\ttest_acc"]
    for p in points:
        lines.append(f"{p.alpha!r}\t{p.train_loss!r}\t{p.test_loss!r}"
                     f"\t{p.train_acc!r}\t{p.test_acc!r}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ComparisonCell:
    optimizer: str
    repeat: int
    clean_test_acc: float
    corrupted_train_acc: float
    history: TrainHistory


@dataclass(frozen=True)
class OptimizerSummary:
    optimizer: str
    mean_clean_test_acc: float
    std_clean_test_acc: float
    mean_corrupted_train_acc: float
    std_corrupted_train_acc: float


@dataclass
class ComparisonReport:
    cells: list[ComparisonCell]
    summaries: list[OptimizerSummary]

    def summary_for(self, optimizer: str) -> OptimizerSummary:
        for s in self.summaries:
            if s.optimizer == optimizer:
                return s
        raise KeyError(optimizer)


def _sample_std(values: list[float]) -> float:
    if len(values) < 2:
        return 0.0
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))


def optimizer_comparison(
    ds_train: LabeledDataset,
    ds_test: LabeledDataset,
    perturbation: PixelPerturbation | None,
    optimizers: list[str],
    epochs: int = 30,
    repeats: int = 3,
    seed: int = 0,
    arch: str | None = None,
    batch_size: int = 64,
    augment: bool = False,
) -> ComparisonReport:
    """Train fresh networks per (optimizer, repeat) on the corrupted data.

    Repeat r uses the same derived seed for every optimizer, so rows are
    paired: identical initialization and batch order, differing only in the
    update rule. Records clean-test and corrupted-train accuracy per cell
    plus mean and n-1 standard deviation per optimizer.
    """
    from .engine import init_network

    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    train_data = (apply_perturbation(ds_train, perturbation)
                  if perturbation is not None else ds_train)
    arch = arch or f"8C3-P-16C3-P-64FC-{ds_train.num_classes}S"

    cells = []
    for name in optimizers:
        cfg = OptimizerConfig.default(name)
        for r in range(repeats):
            net = init_network(arch, ds_train.image_shape,
                               seed=derive_seed(seed, r, 0))
            trained, history = train(net, train_data, cfg, epochs=epochs,
                                     batch_size=batch_size,
                                     seed=derive_seed(seed, r, 1),
                                     augment=augment)
            cells.append(ComparisonCell(
                optimizer=name,
                repeat=r,
                clean_test_acc=evaluate(trained, ds_test)[0],
                corrupted_train_acc=evaluate(trained, train_data)[0],
                history=history,
            ))

    summaries = []
    for name in optimizers:
        clean = [c.clean_test_acc for c in cells if c.optimizer == name]
        corr = [c.corrupted_train_acc for c in cells if c.optimizer == name]
        summaries.append(OptimizerSummary(
            optimizer=name,
            mean_clean_test_acc=sum(clean) / len(clean),
            std_clean_test_acc=_sample_std(clean),
            mean_corrupted_train_acc=sum(corr) / len(corr),
            std_corrupted_train_acc=_sample_std(corr),
        ))
    return ComparisonReport(cells, summaries)


def comparison_table(report: ComparisonReport) -> str:
    """Tab-delimited per-cell rows followed by per-optimizer aggregates."""
    lines = ["optimizer\trepeat\tclean_test_acc\tcorrupted_train_acc"]
    for c in report.cells:
        lines.append(f"{c.optimizer}\t{c.repeat}\t{c.clean_test_acc!r}"
                     f"\t{c.corrupted_train_acc!r}")
    lines.append("optimizer\tmean_clean\tstd_clean\tmean_corrupted\tstd_corrupted")
    for s in report.summaries:
        lines.append(f"{s.optimizer}\t{s.mean_clean_test_acc!r}"
                     f"\t{s.std_clean_test_acc!r}"
                     f"\t{s.mean_corrupted_train_acc!r}"
                     f"\t{s.std_corrupted_train_acc!r}")
    return "\n".join(lines) + "\n"
