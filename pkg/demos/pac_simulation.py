"""Best-arm elimination with the theoretical schedule on synthetic gradients.

Each arm's architecture weight is a running sum of bounded i.i.d. increments.
Pruning with the theoretical temperature and threshold should lose the best
arm with probability at most delta.  In practice the schedule is very
conservative: the observed rate sits far below delta and elimination takes
thousands of steps even for clear gaps.

    python demos/pac_simulation.py [trials]
"""

import sys

from asapnas.pac import GradientStream, hoeffding_deviation_rate, pac_grid, corollary_bound
from asapnas.schedules import ScheduleState, margin_beta

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 500
print(f"{'N':>3} {'delta':>6} {'gap':>5} {'rate':>7} {'p':>7} {'mean steps':>11}")
for r in pac_grid((2, 5, 10), (0.05, 0.1), (0.1, 0.3), trials=trials):
    print(f"{r.N:>3} {r.delta:6.2f} {r.gap:5.2f} {r.error_rate:7.4f} {r.p_value:7.3f} "
          f"{r.mean_steps:11.0f}")

stream = GradientStream((0.0, 0.0))
for t in (10, 100, 1000):
    beta = margin_beta(ScheduleState(t, 2, 1.0, 0.1))
    rate = hoeffding_deviation_rate(stream, t, beta, trials=10_000)
    print(f"t={t:>5}: beta_t={beta:.4f}  deviation rate {rate:.5f}  "
          f"bound {corollary_bound(0.1, 2, t):.2e}")
