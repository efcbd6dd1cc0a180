# End-to-end desk-scale run: evolve a class-wise pixel perturbation on the
# synthetic task, then reproduce the two analyses around it — the optimizer
# robustness comparison and the weight-space interpolation. Takes a couple
# of minutes on one CPU core.
import numpy as np

from evopix import (
    apply_perturbation,
    evaluate,
    init_network,
    loss_surface,
    mdd_es_search,
    optimizer_comparison,
    synth_dataset,
)
from evopix.analysis import comparison_table
from evopix.fitness import SearchConfig
from evopix.optim import OptimizerConfig, train

train_ds, test_ds = synth_dataset(seed=0, classes=2, per_class=200, shape=(1, 8, 8))

cfg = SearchConfig(max_pixels=1, generations=15, population=8,
                   batch_size=16, master_seed=0)
best, logs = mdd_es_search(train_ds, cfg)
print("fitness trajectory (best ever):",
      [round(l.best_ever_f_total, 3) for l in logs[::3]])
print("evolved edits:", best.edits)

corrupted = apply_perturbation(train_ds, best)

# optimizer robustness: with enough training the adaptive rules overfit the
# planted pixels while plain SGD keeps most of its clean-test accuracy
report = optimizer_comparison(train_ds, test_ds, best,
                              ["sgd", "adam", "rmsprop", "adabound"],
                              epochs=40, repeats=3, seed=0, batch_size=8)
print(comparison_table(report))

# loss-surface interpolation between the SGD and ADAM solutions
sgd_net, _ = train(init_network("8C3-P-16C3-P-64FC-2S", (1, 8, 8), seed=0),
                   corrupted, OptimizerConfig.default("sgd"),
                   epochs=5, batch_size=16, seed=0)
adam_net, _ = train(init_network("8C3-P-16C3-P-64FC-2S", (1, 8, 8), seed=0),
                    corrupted, OptimizerConfig.default("adam"),
                    epochs=5, batch_size=16, seed=0)
print("alpha  train_loss  test_loss  test_acc   (alpha=0 SGD, alpha=1 ADAM)")
for p in loss_surface(sgd_net, adam_net, corrupted, test_ds, n_alphas=11):
    print(f"{p.alpha:5.2f}  {p.train_loss:10.4f}  {p.test_loss:9.4f}  {p.test_acc:8.3f}")
