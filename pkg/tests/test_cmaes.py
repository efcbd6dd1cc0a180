import numpy as np
import pytest

from evopix.cmaes import Candidate, CmaEs, default_population
from evopix.errors import (
    BadDimension,
    NoHistory,
    NonFiniteFitness,
    PopulationSizeMismatch,
)


def run_es(es, objective, generations):
    for _ in range(generations):
        candidates = es.ask()
        for c in candidates:
            c.fitness = objective(c.vector)
        es.tell(candidates)
    return es


def sphere(x):
    return -float(np.sum(x ** 2))


def rosenbrock(x):
    return -float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)


class TestInit:
    def test_default_population(self):
        assert default_population(10) == 10  # 4 + floor(3 ln 10)
        assert default_population(1) == 4    # 4 + floor(3 ln 1)
        assert CmaEs(10, sigma0=1.0).lam == 10
        assert CmaEs(1, sigma0=1.0).lam == 4

    def test_identity_covariance(self):
        es = CmaEs(7, sigma0=0.5)
        assert np.array_equal(es.cov, np.eye(7))
        assert es.sigma == 0.5
        assert np.all(es.p_sigma == 0.0) and np.all(es.p_c == 0.0)

    def test_weights_normalized_non_increasing(self):
        es = CmaEs(12, sigma0=1.0)
        assert es.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(es.weights) <= 0)
        assert np.all(es.weights > 0)
        assert len(es.weights) == es.mu == es.lam // 2

    def test_bad_dimension(self):
        with pytest.raises(BadDimension):
            CmaEs(0, sigma0=1.0)


class TestAsk:
    def test_degenerate_sigma_collapses_to_mean(self):
        m0 = np.full(4, 2.5)
        es = CmaEs(4, m0=m0, sigma0=1e-300)
        for cand in es.ask():
            assert np.allclose(cand.vector, m0, atol=1e-290)

    def test_candidate_length(self):
        es = CmaEs(6, sigma0=1.0)
        assert all(len(c.vector) == 6 for c in es.ask())

    def test_standard_normal_statistics(self):
        es = CmaEs(1, m0=[0.0], sigma0=1.0, population=10_000, seed=123)
        samples = np.array([c.vector[0] for c in es.ask()])
        assert abs(samples.mean()) < 0.05
        assert abs(samples.var() - 1.0) < 0.1

    def test_deterministic_given_seed(self):
        a = np.stack([c.vector for c in CmaEs(3, sigma0=1.0, seed=9).ask()])
        b = np.stack([c.vector for c in CmaEs(3, sigma0=1.0, seed=9).ask()])
        assert np.array_equal(a, b)


class TestTell:
    def test_population_size_checked(self):
        es = CmaEs(3, sigma0=1.0)
        cands = es.ask()[:-1]
        with pytest.raises(PopulationSizeMismatch):
            es.tell(cands)

    def test_non_finite_fitness_rejected(self):
        es = CmaEs(3, sigma0=1.0)
        cands = es.ask()
        for c in cands:
            c.fitness = 1.0
        cands[0].fitness = float("nan")
        with pytest.raises(NonFiniteFitness):
            es.tell(cands)

    def test_identical_candidates_keep_mean(self):
        es = CmaEs(4, m0=np.arange(4.0), sigma0=1.0)
        vec = np.array([1.0, 2.0, 3.0, 4.0])
        cands = [Candidate(vec.copy(), fitness=float(k)) for k in range(es.lam)]
        old_mean = es.mean.copy()
        es.tell(cands)
        assert np.allclose(es.mean, vec, atol=1e-12)
        # recombination of identical points lands exactly on that point
        assert not np.allclose(old_mean, vec)

    def test_invariants_after_every_tell(self):
        es = CmaEs(5, m0=np.full(5, 3.0), sigma0=1.0, seed=3)
        for gen in range(60):
            cands = es.ask()
            for c in cands:
                c.fitness = sphere(c.vector)
            es.tell(cands)
            assert np.abs(es.cov - es.cov.T).max() <= 1e-9
            floor = 1e-12 * np.trace(es.cov) / es.dim
            assert np.linalg.eigvalsh(es.cov).min() >= floor * (1.0 - 1e-6)
            assert es.sigma > 0.0
        assert es.generation == 60


class TestConvergenceOracles:
    def test_sphere_dim5(self):
        es = CmaEs(5, m0=np.full(5, 3.0), sigma0=1.0, seed=0)
        run_es(es, sphere, 200)
        assert es.best().fitness > -1e-6
        assert np.abs(es.best().vector).max() < 1e-3

    def test_rosenbrock_dim2(self):
        es = CmaEs(2, m0=np.zeros(2), sigma0=1.0, seed=0)
        run_es(es, rosenbrock, 1500)
        assert es.best().fitness > -1e-4


class TestRankingInvariance:
    def test_strictly_increasing_transform_bitwise_identical(self):
        es1 = CmaEs(4, m0=np.ones(4), sigma0=0.7, seed=42)
        es2 = CmaEs(4, m0=np.ones(4), sigma0=0.7, seed=42)
        for _ in range(5):
            c1, c2 = es1.ask(), es2.ask()
            for a, b in zip(c1, c2):
                f = sphere(a.vector)
                a.fitness = f
                b.fitness = 2.0 * f + 7.0
            es1.tell(c1)
            es2.tell(c2)
        assert np.array_equal(es1.mean, es2.mean)
        assert np.array_equal(es1.cov, es2.cov)
        assert es1.sigma == es2.sigma

    def test_rank_ties_break_by_candidate_index(self):
        es1 = CmaEs(3, sigma0=1.0, seed=1)
        es2 = CmaEs(3, sigma0=1.0, seed=1)
        c1, c2 = es1.ask(), es2.ask()
        for a, b in zip(c1, c2):
            a.fitness = 1.0  # all tied
            b.fitness = 1.0
        es1.tell(c1)
        es2.tell(c2)
        assert np.array_equal(es1.mean, es2.mean)


class TestDeterminism:
    def test_same_seed_same_trajectory(self):
        means = []
        for _ in range(2):
            es = CmaEs(4, m0=np.full(4, 2.0), sigma0=1.0, seed=77)
            run_es(es, sphere, 20)
            means.append((es.mean.copy(), es.cov.copy(), es.sigma))
        assert np.array_equal(means[0][0], means[1][0])
        assert np.array_equal(means[0][1], means[1][1])
        assert means[0][2] == means[1][2]


class TestBest:
    def test_no_history(self):
        with pytest.raises(NoHistory):
            CmaEs(3, sigma0=1.0).best()

    def test_single_generation_best(self):
        es = CmaEs(3, sigma0=1.0, seed=5)
        cands = es.ask()
        for i, c in enumerate(cands):
            c.fitness = float(i)
        es.tell(cands)
        assert es.best().fitness == float(es.lam - 1)
        assert np.array_equal(es.best().vector, cands[-1].vector)

    def test_regression_keeps_earlier_best(self):
        es = CmaEs(2, sigma0=1.0, seed=6)
        cands = es.ask()
        for c in cands:
            c.fitness = 10.0
        best_vec = cands[0].vector.copy()
        es.tell(cands)
        cands = es.ask()
        for c in cands:
            c.fitness = -5.0  # worse generation
        es.tell(cands)
        assert es.best().fitness == 10.0
        assert np.array_equal(es.best().vector, best_vec)

    def test_best_monotone_over_generations(self):
        es = CmaEs(5, m0=np.full(5, 3.0), sigma0=1.0, seed=8)
        best_values = []
        for _ in range(40):
            cands = es.ask()
            for c in cands:
                c.fitness = sphere(c.vector)
            es.tell(cands)
            best_values.append(es.best().fitness)
        assert all(a <= b for a, b in zip(best_values, best_values[1:]))


class TestEigenRepair:
    def test_diagonal_fallback_on_eigen_failure(self, monkeypatch):
        from evopix import cmaes as cmaes_module
        from evopix.errors import EigenFailure

        es = CmaEs(3, sigma0=1.0, seed=0)
        cands = es.ask()
        for i, c in enumerate(cands):
            c.fitness = float(i)

        def broken_eigh(a):
            raise np.linalg.LinAlgError("forced failure")

        monkeypatch.setattr(cmaes_module.np.linalg, "eigh", broken_eigh)
        with pytest.warns(EigenFailure):
            es.tell(cands)
        # diagonal repair leaves a valid sampling state behind
        assert np.array_equal(es._eig_basis, np.eye(3))
        assert np.all(es._eig_sqrt > 0.0)
        monkeypatch.undo()
        assert all(len(c.vector) == 3 for c in es.ask())


class TestSnapshot:
    def test_resume_is_bit_identical(self, tmp_path):
        path = tmp_path / "es.json"

        es = CmaEs(4, m0=np.full(4, 2.0), sigma0=1.0, seed=13)
        run_es(es, sphere, 5)
        es.save_snapshot(path)
        run_es(es, sphere, 5)

        resumed = CmaEs.load_snapshot(path)
        run_es(resumed, sphere, 5)

        assert np.array_equal(es.mean, resumed.mean)
        assert np.array_equal(es.cov, resumed.cov)
        assert es.sigma == resumed.sigma
        assert es.generation == resumed.generation
        assert es.best().fitness == resumed.best().fitness
        assert np.array_equal(es.best().vector, resumed.best().vector)
        # next samples also agree bitwise
        a = np.stack([c.vector for c in es.ask()])
        b = np.stack([c.vector for c in resumed.ask()])
        assert np.array_equal(a, b)
