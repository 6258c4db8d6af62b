"""A full anneal-and-prune search on the xor grid, then a child evaluation.

The xor grid defeats a linear classifier, so the cell has to keep some
nonlinear operations.  The trace shows the live-op fraction shrinking once
the grace epochs are over, and the per-epoch tape size (``epoch_ops``)
shrinking with it.  The derived genotype is retrained from scratch and
compared with a random genotype of the same shape.

    python demos/search_xor.py [seed]
"""

import sys

import numpy as np

from asapnas.cli import load_data
from asapnas.config import validate
from asapnas.engine import evaluate_child, random_genotype, search, train_linear

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = validate({"preset": "asap_default", "dataset": {"kind": "xor_grid", "n": 2048}})
data, holdout = load_data(cfg, seed)
sc = cfg.search_config(seed)

res = search(sc, data)
print(f"{'epoch':>5} {'T':>7} {'live':>6} {'entropy':>8} {'val_acc':>8} {'ops':>7}  prunes")
for r in res.trace.records:
    print(f"{r.epoch:>5} {r.temperature:7.4f} {r.sparsity:6.3f} {r.entropy:8.4f} "
          f"{r.val_acc:8.4f} {r.epoch_ops:>7}  {len(r.prunes)}")
print(f"\nconverged: {res.converged} after {len(res.trace)} epochs")
print(f"validation accuracy: soft {res.soft_val_acc:.4f}, after top-2 derivation "
      f"{res.hard_val_acc:.4f}")
print("\n" + res.genotype.to_text())

opset, child = sc.opset(), cfg.child_config()
rnd = random_genotype(opset, sc.B, np.random.default_rng(seed), sc.top_k)
print(f"child test accuracy:  searched {evaluate_child(res.genotype, opset, data, holdout, child, seed):.4f}"
      f"  random {evaluate_child(rnd, opset, data, holdout, child, seed):.4f}"
      f"  linear {train_linear(data, holdout, child, seed):.4f}")
