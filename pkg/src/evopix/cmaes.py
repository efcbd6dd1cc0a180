"""Full-covariance CMA-ES with an ask/tell interface, maximization convention.

Strategy constants follow the canonical defaults keyed off dimension and
parent count. The covariance matrix is symmetrized and eigenvalue-floored
after every update, and the eigendecomposition is cached for sampling.
"""
from __future__ import annotations

import base64
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadDimension,
    EigenFailure,
    NoHistory,
    NonFiniteFitness,
    PopulationSizeMismatch,
)

SNAPSHOT_VERSION = 1
EIG_FLOOR_SCALE = 1e-12  # eigenvalue floor = scale * trace(C) / dim


def default_population(dim: int) -> int:
    return 4 + int(3.0 * math.log(dim))


@dataclass
class Candidate:
    vector: np.ndarray
    fitness: float | None = None


def _b64(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode()


def _unb64(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).copy()


class CmaEs:
    """Search-distribution state plus the ask/tell update cycle.

    Fitness values are MAXIMIZED. The best-ever candidate across all
    generations is retained (elitist bookkeeping, not elitist selection).
    """

    def __init__(self, dim: int, m0=None, sigma0: float = 1.0,
                 population: int | None = None, seed: int = 0):
        if dim < 1:
            raise BadDimension(f"dim must be >= 1, got {dim}")
        if sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        self.dim = dim
        self.mean = (np.zeros(dim) if m0 is None
                     else np.array(m0, dtype=np.float64).reshape(dim))
        self.sigma = float(sigma0)
        self.lam = population if population is not None else default_population(dim)
        if self.lam < 2:
            raise ValueError("population must be >= 2")
        self.mu = self.lam // 2

        # logarithmic recombination weights over the top mu candidates
        raw = np.log(self.lam / 2.0 + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = raw / raw.sum()
        self.mueff = float(self.weights.sum() ** 2 / (self.weights ** 2).sum())

        n, mueff = float(dim), self.mueff
        self.c_sigma = (mueff + 2.0) / (n + mueff + 5.0)
        self.d_sigma = (1.0 + 2.0 * max(0.0, math.sqrt((mueff - 1.0) / (n + 1.0)) - 1.0)
                        + self.c_sigma)
        self.c_c = (4.0 + mueff / n) / (n + 4.0 + 2.0 * mueff / n)
        self.c_1 = 2.0 / ((n + 1.3) ** 2 + mueff)
        self.c_mu = min(1.0 - self.c_1,
                        2.0 * (mueff - 2.0 + 1.0 / mueff) / ((n + 2.0) ** 2 + mueff))
        self.chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

        self.cov = np.eye(dim)
        self.p_sigma = np.zeros(dim)
        self.p_c = np.zeros(dim)
        self.generation = 0
        self.rng = np.random.default_rng(seed)
        self._eig_basis = np.eye(dim)
        self._eig_sqrt = np.ones(dim)
        self._best: Candidate | None = None

    # -- sampling ----------------------------------------------------------

    def ask(self) -> list[Candidate]:
        """Sample lambda candidates from N(mean, sigma^2 C)."""
        z = self.rng.standard_normal((self.lam, self.dim))
        y = (z * self._eig_sqrt) @ self._eig_basis.T
        return [Candidate(self.mean + self.sigma * y[k]) for k in range(self.lam)]

    # -- update ------------------------------------------------------------

    def tell(self, candidates: list[Candidate]) -> None:
        """Consume a fully evaluated population and update (m, sigma, C).

        Candidates are ranked by descending fitness (stable, so ties keep
        candidate order); the mean recombines the top mu, sigma adapts by
        cumulative step-size adaptation, and C gets the rank-one plus
        rank-mu update. Invariants are restored afterwards: C symmetric,
        eigenvalues floored at 1e-12 * trace / dim.
        """
        if len(candidates) != self.lam:
            raise PopulationSizeMismatch(
                f"expected {self.lam} candidates, got {len(candidates)}"
            )
        fitness = np.array([c.fitness if c.fitness is not None else np.nan
                            for c in candidates], dtype=np.float64)
        if not np.isfinite(fitness).all():
            raise NonFiniteFitness("all candidates need finite fitness")

        order = np.argsort(-fitness, kind="stable")
        gen_best = candidates[order[0]]
        if self._best is None or gen_best.fitness > self._best.fitness:
            self._best = Candidate(gen_best.vector.copy(), float(gen_best.fitness))

        old_mean = self.mean
        selected = np.stack([candidates[k].vector for k in order[: self.mu]])
        self.mean = self.weights @ selected

        y_w = (self.mean - old_mean) / self.sigma
        inv_sqrt_y = self._eig_basis @ ((self._eig_basis.T @ y_w) / self._eig_sqrt)
        self.p_sigma = ((1.0 - self.c_sigma) * self.p_sigma
                        + math.sqrt(self.c_sigma * (2.0 - self.c_sigma) * self.mueff)
                        * inv_sqrt_y)

        self.generation += 1
        ps_norm = float(np.linalg.norm(self.p_sigma))
        denom = math.sqrt(1.0 - (1.0 - self.c_sigma) ** (2.0 * self.generation))
        h_sigma = ps_norm / denom / self.chi_n < 1.4 + 2.0 / (self.dim + 1.0)

        self.p_c = ((1.0 - self.c_c) * self.p_c
                    + h_sigma * math.sqrt(self.c_c * (2.0 - self.c_c) * self.mueff)
                    * y_w)

        ys = (selected - old_mean) / self.sigma
        rank_mu = (self.weights[:, None] * ys).T @ ys
        c1a = self.c_1 * (1.0 - (1.0 - h_sigma ** 2) * self.c_c * (2.0 - self.c_c))
        self.cov = ((1.0 - c1a - self.c_mu) * self.cov
                    + self.c_1 * np.outer(self.p_c, self.p_c)
                    + self.c_mu * rank_mu)

        self.sigma *= math.exp((self.c_sigma / self.d_sigma)
                               * (ps_norm / self.chi_n - 1.0))

        self._repair()

    def _repair(self) -> None:
        """Symmetrize C, floor its eigenvalues, refresh the cached basis."""
        self.cov = (self.cov + self.cov.T) / 2.0
        floor = EIG_FLOOR_SCALE * max(float(np.trace(self.cov)), 0.0) / self.dim
        floor = max(floor, 1e-300)
        try:
            vals, basis = np.linalg.eigh(self.cov)
        except np.linalg.LinAlgError as exc:
            warnings.warn(f"eigendecomposition failed ({exc}); diagonal repair",
                          EigenFailure)
            vals = np.maximum(np.diag(self.cov), floor)
            self.cov = np.diag(vals)
            self._eig_basis = np.eye(self.dim)
            self._eig_sqrt = np.sqrt(vals)
            return
        vals = np.maximum(vals, floor)
        self.cov = (basis * vals) @ basis.T
        self.cov = (self.cov + self.cov.T) / 2.0
        self._eig_basis = basis
        self._eig_sqrt = np.sqrt(vals)

    # -- results -----------------------------------------------------------

    def best(self) -> Candidate:
        """Best-ever candidate over all generations (not the current one)."""
        if self._best is None:
            raise NoHistory("no generation has been told yet")
        return Candidate(self._best.vector.copy(), self._best.fitness)

    # -- snapshots ---------------------------------------------------------

    def save_snapshot(self, path) -> None:
        doc = {
            "version": SNAPSHOT_VERSION,
            "dim": self.dim,
            "lam": self.lam,
            "sigma": self.sigma,
            "generation": self.generation,
            "mean": _b64(self.mean),
            "cov": _b64(self.cov),
            "p_sigma": _b64(self.p_sigma),
            "p_c": _b64(self.p_c),
            "eig_basis": _b64(self._eig_basis),
            "eig_sqrt": _b64(self._eig_sqrt),
            "rng_state": self.rng.bit_generator.state,
            "best": None if self._best is None else {
                "vector": _b64(self._best.vector),
                "fitness": self._best.fitness,
            },
        }
        with open(path, "w") as f:
            json.dump(doc, f)
            f.write("\n")

    @classmethod
    def load_snapshot(cls, path) -> "CmaEs":
        with open(path) as f:
            doc = json.load(f)
        if doc.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {doc.get('version')!r}")
        es = cls(doc["dim"], sigma0=1.0, population=doc["lam"], seed=0)
        es.sigma = float(doc["sigma"])
        es.generation = int(doc["generation"])
        es.mean = _unb64(doc["mean"], (es.dim,))
        es.cov = _unb64(doc["cov"], (es.dim, es.dim))
        es.p_sigma = _unb64(doc["p_sigma"], (es.dim,))
        es.p_c = _unb64(doc["p_c"], (es.dim,))
        # restore the cached decomposition verbatim so resumed sampling is
        # bit-identical to an uninterrupted run
        es._eig_basis = _unb64(doc["eig_basis"], (es.dim, es.dim))
        es._eig_sqrt = _unb64(doc["eig_sqrt"], (es.dim,))
        es.rng.bit_generator.state = doc["rng_state"]
        if doc["best"] is not None:
            es._best = Candidate(_unb64(doc["best"]["vector"], (es.dim,)),
                                 float(doc["best"]["fitness"]))
        return es
