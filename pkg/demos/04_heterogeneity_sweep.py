"""Sweep of the data-heterogeneity level (Dirichlet alpha) and what each
method does about it.

Lower alpha means more severe label skew. For every run the table reports
the PEAK per-round value of each decomposition term: on a small learnable
task heterogeneity damage is transient, so the worst round is where local
regularization and (server-side) gradient revision act.

Takes about two minutes.
"""

import numpy as np

from feddecomp import AggregationMode, FederationSpec, LocalConfig, run
from feddecomp.simulation import DataConfig, ModelConfig, RunConfig

SEEDS = (0, 1, 2)


def sweep_run(alpha, margin_weight, kind, seed):
    return RunConfig(
        federation=FederationSpec(num_clients=10, dirichlet_alpha=alpha,
                                  shortcut_strength=1.0, seed=seed,
                                  test_fraction=0.15),
        local=LocalConfig(learning_rate=0.2, batch_size=20, local_epochs=5,
                          margin_weight=margin_weight, seed=seed),
        mode=AggregationMode(kind=kind),
        data=DataConfig(classes=4, samples=2000, input_dim=6),
        model=ModelConfig(kind="softmax"),
        rounds=50,
        decompose_every=1,
        seed=seed,
    )


def peaks(alpha, margin_weight, kind):
    shift, agg, acc = [], [], []
    for seed in SEEDS:
        summary = run(sweep_run(alpha, margin_weight, kind, seed))
        shift.append(max(h.dist_shift_loss for h in summary.history))
        agg.append(max(h.aggregation_loss for h in summary.history))
        acc.append(summary.final_accuracy)
    return np.mean(shift), np.mean(agg), np.mean(acc)


print(f"{'setup':<28} {'peak shift':>11} {'peak agg':>9} {'final acc':>10}")
print("-" * 62)
for alpha in (100.0, 1.0, 0.1):
    sh, ag, ac = peaks(alpha, 0.0, "fedavg")
    print(f"fedavg, alpha={alpha:<14} {sh:>11.3f} {ag:>9.3f} {ac:>10.4f}")

sh, ag, ac = peaks(0.1, 0.03, "fedavg")
print(f"{'+ margin control (0.03)':<28} {sh:>11.3f} {ag:>9.3f} {ac:>10.4f}")
sh, ag, ac = peaks(0.1, 0.0, "principal")
print(f"{'+ principal aggregation':<28} {sh:>11.3f} {ag:>9.3f} {ac:>10.4f}")

print("\nreading the table: heterogeneity inflates both loss terms; margin")
print("control trims the worst-round shift, principal aggregation trims the")
print("worst-round aggregation damage")
