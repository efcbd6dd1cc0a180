# The evolution strategy on two classic benchmarks. Fitness is maximized,
# so both objectives are negated costs; the optimum value is 0.
import numpy as np

from evopix.cmaes import CmaEs


def sphere(x):
    return -float(np.sum(x ** 2))


def rosenbrock(x):
    return -float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)


print("sphere, dim 5, start at (3, ..., 3)")
es = CmaEs(5, m0=np.full(5, 3.0), sigma0=1.0, seed=0)
for gen in range(1, 201):
    candidates = es.ask()
    for c in candidates:
        c.fitness = sphere(c.vector)
    es.tell(candidates)
    if gen % 40 == 0:
        print(f"  gen {gen:4d}  best {es.best().fitness:.3e}  sigma {es.sigma:.3e}")
print("  solution:", np.round(es.best().vector, 6))

print("rosenbrock, dim 2")
es = CmaEs(2, m0=np.zeros(2), sigma0=1.0, seed=0)
for gen in range(1, 1501):
    candidates = es.ask()
    for c in candidates:
        c.fitness = rosenbrock(c.vector)
    es.tell(candidates)
    if gen % 300 == 0:
        print(f"  gen {gen:4d}  best {es.best().fitness:.3e}")
print("  solution:", np.round(es.best().vector, 6), "(optimum is [1, 1])")

# fitness ranking is all that matters: any strictly increasing transform
# of the scores leaves the search trajectory bitwise unchanged
es1 = CmaEs(3, sigma0=1.0, seed=5)
es2 = CmaEs(3, sigma0=1.0, seed=5)
for _ in range(10):
    c1, c2 = es1.ask(), es2.ask()
    for a, b in zip(c1, c2):
        a.fitness = sphere(a.vector)
        b.fitness = 2.0 * sphere(b.vector) + 7.0
    es1.tell(c1)
    es2.tell(c2)
print("transform-invariant trajectories:", np.array_equal(es1.mean, es2.mean))
