"""Annealing and pruning on a single mixed edge.

The architecture weights alpha are held fixed here and only the temperature
moves.  At T = 1.3 every op keeps a visible share; cooling sharpens the
differences.  The threshold rule drops an op as soon as its Gibbs weight falls
below theta = 0.4 / N, so the weakest ops leave first while close contenders
survive.  In a real search alpha keeps moving too, which is what finishes the
job.

    python demos/anneal_single_edge.py
"""

import numpy as np

from asapnas.cell import gibbs, normalized_entropy
from asapnas.ops import DEFAULT_NAMES
from asapnas.schedules import temp_exponential, threshold_policy

alpha = np.array([0.30, 0.25, 0.10, -0.05, -0.20, 0.28, 0.00])
names = list(DEFAULT_NAMES)
N = len(alpha)
theta = threshold_policy("fixed", 0, N)

print(f"ops: {', '.join(names)}")
print(f"alpha: {alpha.tolist()}  theta = 0.4/{N} = {theta:.5f}\n")
print(f"{'epoch':>5} {'T':>7} {'entropy':>8}  live weights")
live = list(range(N))
for epoch in range(0, 51, 5):
    T = temp_exponential(1.3, 0.95, epoch)
    phi = gibbs(alpha[live], T)
    top = int(np.argmax(phi))
    dropped = [live[k] for k in range(len(live)) if phi[k] < theta and k != top]
    shown = "  ".join(f"{names[i]}={p:.3f}" for i, p in zip(live, phi))
    print(f"{epoch:>5} {T:7.4f} {normalized_entropy(phi, N):8.4f}  {shown}")
    if dropped:
        print(f"{'':>23}pruned: {', '.join(names[i] for i in dropped)}")
    live = [i for i in live if i not in dropped]
print(f"\nsurvivors: {[names[i] for i in live]}")
