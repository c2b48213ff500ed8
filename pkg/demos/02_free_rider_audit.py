"""Free riders versus the peer parameter audit.

Five plain free riders echo the allocated global update back at the server.
Every data-holding client audits every peer's previous upload on its own
shard: an echoed allocation reproduces the announced transition exactly, so
its accuracy divergence is zero and its contribution decays geometrically
until it crosses the elimination cutoff 1/(beta * N). Genuine local training
drifts toward each client's own shard optimum, which costs peers a few
accuracy points per audit and keeps fair contributions afloat (for a while -
the decay eventually catches slow fair clients too, which is why the
false-positive rate is the defense's weak spot).
"""

import numpy as np

from fedaudit import run_experiment, standard_config

config = standard_config(fair=10, plain=5, seed=0, rounds=60)
result = run_experiment(config)

fair, riders = set(result.fair_ids), set(result.fr_ids)
print("round  acc    median fair c   median rider c   eliminated so far")
gone: set[int] = set()
for log in result.rounds[::5]:
    gone |= {c for r in result.rounds[:log.round + 1] for c in r.newly_eliminated}
    fair_c = np.median([log.contributions[i] for i in fair])
    rider_c = np.median([log.contributions[i] for i in riders])
    tags = ",".join(str(i) for i in sorted(gone)) or "-"
    print(f"{log.round:5d}  {log.global_accuracy:.3f}  {fair_c:13.4f}   "
          f"{rider_c:14.4f}   {tags}")

print(f"\ndefense success rate: {result.dsr:.0f}% of free riders eliminated")
print(f"false positive rate:  {result.fpr:.0f}% of fair clients eliminated")
rounds_out = {cid: log.round for log in result.rounds for cid in log.newly_eliminated}
print("free riders left at rounds:",
      sorted(rounds_out[i] for i in riders if i in rounds_out))
