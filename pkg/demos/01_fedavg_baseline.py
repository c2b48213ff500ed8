"""Baseline federated averaging on the synthetic task.

Ten fair clients train a softmax classifier on IID shards of well-separated
Gaussian clusters; the server averages their updates each round. No attacks,
no defense - just the training loop and its accuracy curve.
"""

from fedaudit import run_experiment
from fedaudit.scenarios import neutrality_config

config = neutrality_config(seed=0, rounds=30, privacy_on=False, defense="none")
result = run_experiment(config)

print("round  accuracy")
for log in result.rounds[::3]:
    bar = "#" * int(40 * log.global_accuracy)
    print(f"{log.round:5d}  {log.global_accuracy:.3f} {bar}")
print(f"\nfinal accuracy after {len(result.rounds)} rounds: "
      f"{result.final_accuracy:.3f}")
print(f"scalars sent server->clients: {result.total_comm_scalars:,}")
