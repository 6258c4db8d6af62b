"""Four pruning strategies on the same data and seed.

``asap`` prunes by threshold while annealing; ``darts_mode`` keeps every op
at T = 1 and prunes once at the end; ``magnitude`` and ``accum_grad`` follow
a cubic sparsity ramp from epoch 20.  The columns to watch are the validation
accuracy lost when the final top-2 genotype is cut out of the supernet, and
the total tape size, which falls as ops leave the graph.

    python demos/pruner_comparison.py [seed]
"""

import sys

from asapnas.cli import load_data
from asapnas.config import validate
from asapnas.engine import search

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
print(f"{'preset':>15} {'epochs':>6} {'entropy':>8} {'soft':>6} {'hard':>6} {'drop':>6} {'ops':>9}")
for preset in ("asap_default", "darts_mode", "magnitude", "accum_grad"):
    cfg = validate({"preset": preset, "dataset": {"kind": "xor_grid", "n": 1024}})
    data, _ = load_data(cfg, seed)
    res = search(cfg.search_config(seed), data)
    tr = res.trace
    print(f"{preset:>15} {len(tr):>6} {tr.column('entropy')[-1]:8.4f} {res.soft_val_acc:6.3f} "
          f"{res.hard_val_acc:6.3f} {res.hard_prune_drop:6.3f} {tr.column('epoch_ops').sum():>9}")
