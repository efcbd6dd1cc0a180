# Class-wise pixel perturbations and the two fitness ingredients:
# semantic mismatch and the discriminator-based divergence score.
import numpy as np

from evopix import (
    apply_perturbation,
    baseline_column,
    baseline_uniform,
    domain_divergence,
    init_network,
    semantic_mismatch,
    synth_dataset,
)
from evopix.optim import OptimizerConfig, train
from evopix.perturb import PixelEdit, PixelPerturbation

train_ds, test_ds = synth_dataset(seed=0, classes=2, per_class=200, shape=(1, 8, 8))

# the two reference constructions
uniform = baseline_uniform(2, 1, (1, 8, 8), seed=0)
column = baseline_column(2, 1, (1, 8, 8))
print("uniform baseline edits:", uniform.edits)
print("column baseline edits:", column.edits)

# applying a perturbation touches at most one pixel per image here
corrupted = apply_perturbation(train_ds, uniform)
changed = (corrupted.images != train_ds.images).sum(axis=(1, 2, 3))
print("changed pixels per image: min", changed.min(), "max", changed.max())

# identical sets are chance-level for the discriminator; a saturating
# single-pixel code is trivially separable
eps, f_d, d_a = domain_divergence(train_ds, train_ds, split=0.2, seed=0)
print(f"clean vs clean:      eps={eps:.3f}  f_d={f_d:+.3f}  d_A={d_a:+.3f}")

code = PixelPerturbation(2, 1, (1, 8, 8), [
    [PixelEdit(0, 0, (1.0,))],
    [PixelEdit(7, 7, (1.0,))],
])
eps, f_d, d_a = domain_divergence(train_ds, apply_perturbation(train_ds, code),
                                  split=0.2, seed=0)
print(f"clean vs code-pixel: eps={eps:.3f}  f_d={f_d:+.3f}  d_A={d_a:+.3f}")

# semantic mismatch: train on corrupted data, then compare clean/corrupted loss
corrupted = apply_perturbation(train_ds, code)
net = init_network("8C3-P-16C3-P-64FC-2S", (1, 8, 8), seed=0)
net, _ = train(net, corrupted, OptimizerConfig.default("adam"),
               epochs=10, batch_size=16, seed=0)
print("semantic mismatch for the code perturbation:",
      round(semantic_mismatch(net, train_ds, code), 4))
print("semantic mismatch for a zero perturbation:",
      semantic_mismatch(net, train_ds, PixelPerturbation(2, 1, (1, 8, 8), [
          [PixelEdit(0, 0, (0.0,))], [PixelEdit(0, 0, (0.0,))]])))
