import math

import numpy as np
import pytest

from evopix.analysis import (
    comparison_table,
    loss_surface,
    optimizer_comparison,
    surface_table,
)
from evopix.data import synth_dataset
from evopix.engine import evaluate, init_network
from evopix.errors import ArchitectureMismatch
from evopix.optim import OptimizerConfig, train
from evopix.perturb import PixelEdit, PixelPerturbation


@pytest.fixture(scope="module")
def toy_task():
    return synth_dataset(2, 2, 40, (1, 8, 8), test_per_class=30)


@pytest.fixture(scope="module")
def two_checkpoints(toy_task):
    tr, _ = toy_task
    net = init_network("4FC-2S", (1, 8, 8), seed=0)
    a, _ = train(net, tr, OptimizerConfig.default("sgd"), epochs=3,
                 batch_size=16, seed=1)
    b, _ = train(net, tr, OptimizerConfig.default("adam"), epochs=3,
                 batch_size=16, seed=1)
    return a, b


class TestLossSurface:
    def test_endpoints_match_direct_evaluation(self, toy_task, two_checkpoints):
        tr, te = toy_task
        a, b = two_checkpoints
        points = loss_surface(a, b, tr, te, n_alphas=5)
        acc_a, loss_a = evaluate(a, tr)
        acc_b, loss_b = evaluate(b, tr)
        assert abs(points[0].train_loss - loss_a) < 1e-9
        assert abs(points[0].train_acc - acc_a) < 1e-9
        assert abs(points[-1].train_loss - loss_b) < 1e-9
        assert abs(points[-1].train_acc - acc_b) < 1e-9

    def test_alpha_grid(self, toy_task, two_checkpoints):
        tr, te = toy_task
        a, b = two_checkpoints
        points = loss_surface(a, b, tr, te, n_alphas=21)
        alphas = [p.alpha for p in points]
        assert len(alphas) == 21
        assert alphas[0] == 0.0 and alphas[-1] == 1.0
        assert all(x < y for x, y in zip(alphas, alphas[1:]))

    def test_degenerate_segment(self, toy_task, two_checkpoints):
        tr, te = toy_task
        a, _ = two_checkpoints
        points = loss_surface(a, a.copy(), tr, te, n_alphas=7)
        first = points[0]
        for p in points[1:]:
            assert p.train_loss == pytest.approx(first.train_loss, abs=1e-12)
            assert p.test_loss == pytest.approx(first.test_loss, abs=1e-12)
            assert p.train_acc == first.train_acc

    def test_architecture_mismatch(self, toy_task, two_checkpoints):
        tr, te = toy_task
        a, _ = two_checkpoints
        other = init_network("6FC-2S", (1, 8, 8), seed=0)
        with pytest.raises(ArchitectureMismatch):
            loss_surface(a, other, tr, te)

    def test_table_round_trips_floats(self, toy_task, two_checkpoints):
        tr, te = toy_task
        a, b = two_checkpoints
        points = loss_surface(a, b, tr, te, n_alphas=3)
        text = surface_table(points)
        lines = text.strip().splitlines()
        assert lines[0].split("\t") == [
            "alpha", "train_loss", "test_loss", "train_acc", "test_acc"]
        row = lines[1].split("\t")
        assert float(row[1]) == points[0].train_loss


class TestOptimizerComparison:
    def test_single_cell(self, toy_task):
        tr, te = toy_task
        report = optimizer_comparison(tr, te, None, ["sgd"], epochs=2,
                                      repeats=1, seed=0, arch="4FC-2S",
                                      batch_size=16)
        assert len(report.cells) == 1
        assert report.cells[0].optimizer == "sgd"
        s = report.summary_for("sgd")
        assert s.mean_clean_test_acc == report.cells[0].clean_test_acc
        assert s.std_clean_test_acc == 0.0

    def test_identity_perturbation_matches_clean_baseline(self, toy_task):
        tr, te = toy_task
        identity = PixelPerturbation(2, 1, (1, 8, 8), [
            [PixelEdit(0, 0, (0.0,))], [PixelEdit(0, 0, (0.0,))],
        ])
        kw = dict(optimizers=["sgd", "adam"], epochs=2, repeats=1, seed=3,
                  arch="4FC-2S", batch_size=16)
        clean = optimizer_comparison(tr, te, None, **kw)
        ident = optimizer_comparison(tr, te, identity, **kw)
        for name in ("sgd", "adam"):
            a = clean.summary_for(name).mean_clean_test_acc
            b = ident.summary_for(name).mean_clean_test_acc
            assert abs(a - b) <= 0.05  # identical data: exact match expected
            assert a == b

    def test_summary_recomputes_from_cells(self, toy_task):
        tr, te = toy_task
        report = optimizer_comparison(tr, te, None, ["sgd", "adam"], epochs=2,
                                      repeats=3, seed=1, arch="4FC-2S",
                                      batch_size=16)
        for name in ("sgd", "adam"):
            rows = [c.clean_test_acc for c in report.cells if c.optimizer == name]
            assert len(rows) == 3
            s = report.summary_for(name)
            assert s.mean_clean_test_acc == pytest.approx(sum(rows) / 3, abs=1e-15)
            mean = sum(rows) / 3
            std = math.sqrt(sum((v - mean) ** 2 for v in rows) / 2)
            assert s.std_clean_test_acc == pytest.approx(std, abs=1e-15)

    def test_repeats_are_paired_across_optimizers(self, toy_task):
        # same repeat index uses the same init and batch order for every rule
        tr, te = toy_task
        report = optimizer_comparison(tr, te, None, ["sgd", "sgd"], epochs=1,
                                      repeats=2, seed=5, arch="4FC-2S",
                                      batch_size=16)
        first = [c for c in report.cells if c.repeat == 0]
        assert first[0].clean_test_acc == first[1].clean_test_acc

    def test_comparison_table_format(self, toy_task):
        tr, te = toy_task
        report = optimizer_comparison(tr, te, None, ["sgd"], epochs=1,
                                      repeats=2, seed=0, arch="4FC-2S",
                                      batch_size=16)
        text = comparison_table(report)
        lines = text.strip().splitlines()
        assert lines[0].startswith("optimizer\trepeat")
        assert len(lines) == 1 + 2 + 1 + 1  # header, cells, header, summary
