# Walk through the CNN engine: architecture strings, deterministic
# initialization, training on the synthetic task, and a finite-difference
# check of the backpropagation.
import numpy as np

from evopix import (
    backward,
    cross_entropy,
    evaluate,
    forward,
    init_network,
    param_count,
    parse_arch,
    synth_dataset,
)
from evopix.optim import OptimizerConfig, train

# architecture strings: <k>C<s> conv, P 2x2 max-pool, <u>FC dense, <c>S softmax
spec = parse_arch("24C3-P-48C3-P-256FC-10S")
print("layers:", [type(l).__name__ for l in spec.layers])
print("parameters on 28x28 grayscale:", param_count(spec, (1, 28, 28)))

# deterministic init: same seed, same bits
a = init_network("8C3-P-16C3-P-64FC-2S", (1, 8, 8), seed=0)
b = init_network("8C3-P-16C3-P-64FC-2S", (1, 8, 8), seed=0)
print("same seed gives identical parameters:", np.array_equal(a.params, b.params))

# train on the bundled synthetic task
train_ds, test_ds = synth_dataset(seed=0, classes=2, per_class=200, shape=(1, 8, 8))
net, history = train(a, train_ds, OptimizerConfig.default("adam"),
                     epochs=10, batch_size=16, seed=0, eval_ds=test_ds)
for rec in history.epochs[::3]:
    print(f"epoch {rec.epoch:2d}  loss {rec.train_loss:.4f}  "
          f"train acc {rec.train_acc:.3f}  test acc {rec.eval_acc:.3f}")
print("final test accuracy:", evaluate(net, test_ds)[0])

# spot-check the analytic gradient against central finite differences
check = init_network("2C3-P-4FC-3S", (1, 6, 6), seed=7)
rng = np.random.default_rng(7)
batch = rng.uniform(size=(8, 1, 6, 6))
labels = rng.integers(0, 3, size=8)
analytic = backward(check, batch, labels).copy()

h = 1e-5
numeric = np.zeros_like(analytic)
for i in range(len(check.params)):
    orig = check.params[i]
    check.params[i] = orig + h
    up = cross_entropy(forward(check, batch), labels)
    check.params[i] = orig - h
    down = cross_entropy(forward(check, batch), labels)
    check.params[i] = orig
    numeric[i] = (up - down) / (2 * h)

scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
print("worst relative gradient error:", float((np.abs(analytic - numeric) / scale).max()))
