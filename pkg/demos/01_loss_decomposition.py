"""Walk through the three-term decomposition of the federated global loss.

The global objective L(w) = sum_i (n_i/n) L_i(w) splits exactly into

    local loss          how well each client's model fits its own shard
  + distribution shift  how much worse local models get on other shards
  + aggregation         how much the combined global model gains or loses
                        relative to the local models

First on a hand-built 2x2 example where the terms cancel by construction,
then on a real federated round.
"""

import numpy as np

from feddecomp import (
    FederationSpec,
    LocalConfig,
    AggregationMode,
    decompose_from_losses,
    run,
)
from feddecomp.simulation import DataConfig, ModelConfig, RunConfig

# --- hand-built case -------------------------------------------------------
# Two clients with equal weight. cross[j, i] is the loss of client i's model
# on client j's shard; the global model scores 2.5 on both shards.
cross = np.array([[1.0, 2.0], [3.0, 4.0]])
weights = np.array([0.5, 0.5])
per_shard_global = np.array([2.5, 2.5])

terms = decompose_from_losses(cross, weights, per_shard_global)
print("hand-built 2x2 example")
print(f"  local loss          {terms.local_loss:.3f}")
print(f"  shift (signed)      {terms.dist_shift_signed:+.3f}")
print(f"  aggregation (signed){terms.aggregation_signed:+.3f}")
print(f"  global loss         {terms.global_loss:.3f}")
print(f"  identity residual   "
      f"{terms.local_loss + terms.dist_shift_signed + terms.aggregation_signed - terms.global_loss:.2e}")

# --- a real federated run --------------------------------------------------
# Ten clients under severe label skew; the decomposition is computed every
# round (decompose_every=1) and the identity is enforced internally.
cfg = RunConfig(
    federation=FederationSpec(num_clients=10, dirichlet_alpha=0.1,
                              shortcut_strength=0.9, seed=7, test_fraction=0.2),
    local=LocalConfig(learning_rate=0.2, batch_size=20, local_epochs=3, seed=7),
    mode=AggregationMode(kind="fedavg"),
    data=DataConfig(classes=4, samples=1500, input_dim=6),
    model=ModelConfig(kind="softmax"),
    rounds=10,
    decompose_every=1,
    seed=7,
)
summary = run(cfg)

print("\nper-round decomposition under severe label skew (alpha=0.1)")
print(f"{'round':>5} {'local':>8} {'shift':>8} {'aggregation':>12} {'global':>8} {'test acc':>9}")
for h in summary.history:
    print(f"{h.round:>5} {h.local_loss:>8.4f} {h.dist_shift_loss:>8.4f} "
          f"{h.aggregation_loss:>12.4f} {h.global_loss:>8.4f} {h.test_accuracy:>9.4f}")

print("\nnote how the shift and aggregation terms spike in the early rounds")
print("while the clients disagree, then fade as the federation converges")
