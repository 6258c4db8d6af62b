"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v``; the lines appear under
"acceptance criteria" in the terminal summary.  Criteria 7 and 8 share one
``asapnas compare`` run over ``demos/configs/compare_xor.yaml``.
"""

import csv
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import softmax

from asapnas import tensor as tn
from asapnas.cell import Cell, gibbs
from asapnas.cli import load_data, main
from asapnas.config import load_config, validate
from asapnas.engine import alpha_grad, search
from asapnas.ops import default_opset
from asapnas.pac import check_claim1, logsumexp_bound_check, pac_grid
from asapnas.schedules import (ScheduleState, sparsity_schedule, temp_exponential,
                               threshold_policy)
from asapnas.tensor import Tensor

from conftest import numeric_grad, rel_err

ROOT = Path(__file__).resolve().parents[1]
COMPARE_XOR = ROOT / "demos" / "configs" / "compare_xor.yaml"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --------------------------------------------------------------------------
# 1. gradients
# --------------------------------------------------------------------------


def test_1_gradient_correctness(criterion):
    t0 = time.perf_counter()
    worst_alpha = worst_closed = worst_w = 0.0
    cells = 60
    for k in range(cells):
        rng = np.random.default_rng(k)
        cell = Cell.build(default_opset(3), int(rng.integers(1, 3)), rng)
        for e in cell.edges.values():
            e.alpha.data = rng.normal(size=len(e.live))
        s0, s1 = Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(4, 3)))
        W = Tensor(rng.normal(size=(4, 3)))
        T = float(rng.uniform(0.3, 3.0))

        def loss():
            return float(np.sum(cell(s0, s1, T).data * W.data))

        params = cell.params() + cell.alphas()
        tn.zero_grads(params)
        tn.backward(tn.sum_(cell(s0, s1, T) * W))
        tape = {id(p): p.grad.copy() for p in params}
        closed = {id(e.alpha): alpha_grad(e) for e in cell.edges.values()}
        for e in cell.edges.values():
            fd = numeric_grad(lambda _: loss(), e.alpha.data)
            worst_alpha = max(worst_alpha, rel_err(tape[id(e.alpha)], fd))
            worst_closed = max(worst_closed, rel_err(closed[id(e.alpha)], fd))
        for p in cell.params():
            fd = numeric_grad(lambda _: loss(), p.data)
            worst_w = max(worst_w, rel_err(tape[id(p)], fd))
    secs = time.perf_counter() - t0
    ok = max(worst_alpha, worst_closed, worst_w) <= 1e-4 and secs < 60
    criterion("1", ok, f"{cells} cells; max rel err alpha tape {worst_alpha:.2e}, "
                       f"alpha closed form {worst_closed:.2e}, weights {worst_w:.2e}; {secs:.1f}s")


# --------------------------------------------------------------------------
# 2. Gibbs invariants
# --------------------------------------------------------------------------


def test_2_gibbs_invariants(criterion):
    rng = np.random.default_rng(2)
    norm = shift = hot = cold = darts = 0.0
    shift_exact = True
    for _ in range(5000):
        N = int(rng.integers(2, 12))
        a = rng.uniform(-20, 20, size=N)
        T = float(10 ** rng.uniform(-3, 3))
        norm = max(norm, abs(gibbs(a, T).sum() - 1.0))
        # dyadic grid keeps alpha + c exact, hence the weights bit-identical
        k = rng.integers(-2**20, 2**20, size=N) / 1024.0
        c = float(rng.integers(-2**20, 2**20))
        shift_exact &= bool(np.array_equal(gibbs(k + c, T), gibbs(k, T)))
        shift = max(shift, np.max(np.abs(gibbs(a + rng.uniform(-1e3, 1e3), T) - gibbs(a, T))))
        hot = max(hot, np.max(np.abs(gibbs(rng.uniform(-1, 1, N), 1e6) - 1 / N)))
        top = np.sort(a)[-2:]
        if top[1] - top[0] > 1e-4:
            onehot = np.eye(N)[np.argmax(a)]
            cold = max(cold, np.max(np.abs(gibbs(a, 1e-6) - onehot)))
        darts = max(darts, np.max(np.abs(gibbs(a, 1.0) - softmax(a))))
    ok = (norm <= 1e-12 and shift_exact and shift <= 1e-12 and hot <= 1e-6 and cold <= 1e-9
          and darts <= 1e-12)
    criterion("2", ok, f"normalization {norm:.1e}, dyadic shift exact={shift_exact}, "
                       f"float shift {shift:.1e}, T=1e6 {hot:.1e}, T=1e-6 {cold:.1e}, "
                       f"T=1 vs softmax {darts:.1e}")


# --------------------------------------------------------------------------
# 3. schedules
# --------------------------------------------------------------------------


def test_3_schedule_arithmetic(criterion):
    T50 = temp_exponential(1.3, 0.95, 50)
    theta = threshold_policy("fixed", 10, 7)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20_000):
        N = int(rng.integers(2, 50))
        s = ScheduleState(int(rng.integers(1, 100_000)), N, float(10 ** rng.uniform(-2, 2)),
                          float(rng.uniform(1e-3, 0.99)), float(rng.uniform(1e-6, 1.0)) / N)
        worst = max(worst, abs(s.beta * 2 * s.rho_t - s.temperature) / max(1.0, s.temperature))
    ends = all(sparsity_schedule(si, sf, t0, n, dt, p, t0) == si
               and sparsity_schedule(si, sf, t0, n, dt, p, t0 + n * dt) == sf
               for si, sf, t0, n, dt, p in [(0.0, 0.8, 20, 29, 1.0, 3), (0.1, 0.9, 0, 10, 2.0, 1),
                                            (0.0, 0.857, 20, 9, 1.0, 3)])
    ok = 0.099 <= T50 <= 0.101 and theta == 0.4 / 7 and worst <= 1e-12 and ends
    criterion("3", ok, f"T(50)={T50:.6f}, theta={theta:.5f}, beta*2rho vs T worst {worst:.1e} "
                       f"over 20000 states, sparsity endpoints exact={ends}")


# --------------------------------------------------------------------------
# 4. pruning rule implies successive elimination
# --------------------------------------------------------------------------


def test_4_claim1_implication(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    n = 100_000
    counter = fired = lse_fail = 0
    for _ in range(n):
        N = int(rng.integers(2, 12))
        t = int(rng.integers(1, 5000))
        state = ScheduleState(t, N, 1.0, float(rng.uniform(0.01, 0.5)),
                              float(rng.uniform(0.05, 1.0)) / N)
        # running sums of bounded increments spread over a few temperatures
        alpha = rng.normal(size=N) * state.temperature * t * rng.uniform(0.1, 3.0)
        lse_fail += not logsumexp_bound_check(alpha / state.temperature)
        fires, se = check_claim1(alpha, state)
        fired += int(fires.sum())
        counter += int(np.sum(fires & ~se))
    secs = time.perf_counter() - t0
    ok = counter == 0 and lse_fail == 0 and fired > 0 and secs < 120
    criterion("4", ok, f"{n} states, {fired} threshold firings, {counter} counterexamples, "
                       f"{lse_fail} log-sum-exp violations; {secs:.1f}s")


# --------------------------------------------------------------------------
# 5. PAC grid
# --------------------------------------------------------------------------


@pytest.mark.slow
def test_5_pac_grid(criterion):
    t0 = time.perf_counter()
    rows = pac_grid((2, 5, 10), (0.05, 0.1), (0.1, 0.3), trials=2000)
    secs = time.perf_counter() - t0
    worst = max(rows, key=lambda r: r.error_rate / r.delta)
    ok = len(rows) == 12 and all(r.passed for r in rows) and secs < 600
    criterion("5", ok, f"{sum(r.passed for r in rows)}/12 configurations pass; highest "
                       f"rate {worst.error_rate:.4f} at N={worst.N} delta={worst.delta} "
                       f"gap={worst.gap}; {secs:.0f}s")


# --------------------------------------------------------------------------
# 6. search contracts
# --------------------------------------------------------------------------


@pytest.mark.slow
def test_6_search_contracts(criterion):
    problems = []
    runs = converged = events = 0
    for kind in ("blobs", "xor_grid"):
        cfg = validate({"preset": "asap_default",
                        "dataset": {"kind": kind, "n": 512, "noise": 0.2}})
        for seed in range(10):
            data, _ = load_data(cfg, seed)
            res = search(cfg.search_config(seed), data)
            again = search(cfg.search_config(seed), data)
            tag = f"{kind}/{seed}"
            recs = res.trace.records
            runs += 1
            if np.any(np.diff(res.trace.column("sparsity")) > 0):
                problems.append(f"{tag}: sparsity increased")
            for r in recs:
                if r.grace and (r.alpha_updates or r.prunes):
                    problems.append(f"{tag}: activity in grace epoch {r.epoch}")
                for ev in r.prunes:
                    events += 1
                    if not (ev.phi < ev.theta and ev.theta == r.threshold):
                        problems.append(f"{tag}: prune {ev} not below theta {r.threshold}")
            converged += res.converged
            if (recs[-1].entropy == 0.0) != res.converged:
                problems.append(f"{tag}: converged={res.converged} but entropy {recs[-1].entropy}")
            same = (again.genotype == res.genotype and all(
                np.array_equal(again.trace.column(c), res.trace.column(c), equal_nan=True)
                for c in ("temperature", "threshold", "sparsity", "entropy", "train_loss",
                          "val_acc", "epoch_ops"))
                and [str(e) for e in again.trace.prune_events] == [str(e) for e in res.trace.prune_events])
            if not same:
                problems.append(f"{tag}: rerun differs")
    criterion("6", not problems, f"{runs} runs, {converged} converged, {events} prune events, "
                                 f"{len(problems)} violations {problems[:3]}")


# --------------------------------------------------------------------------
# 7 and 8: one paired comparison on the xor grid
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def xor_compare(tmp_path_factory):
    out = tmp_path_factory.mktemp("compare_xor")
    t0 = time.perf_counter()
    rc = main(["compare", "--config", str(COMPARE_XOR), "--out", str(out)])
    return rc, out, time.perf_counter() - t0


@pytest.mark.slow
def test_7_epoch_cost_falls(criterion, xor_compare):
    rc, out, _ = xor_compare
    assert rc == 0
    cfg = load_config(COMPARE_XOR)
    grace = cfg.with_preset("asap_default").search_config(0).grace_epochs
    wins, detail = 0, []
    for seed in cfg.seeds:
        log = read_csv(out / "logs" / f"compare_asap_default_seed_{seed}_trace.csv")
        secs = np.array([float(r["epoch_seconds"]) for r in log])
        first, last = secs[grace:grace + 10].mean(), secs[-10:].mean()
        wins += last < first
        detail.append(f"{last / first:.2f}")
    criterion("7", wins >= 8, f"final/first post-grace epoch time lower on {wins}/10 seeds "
                              f"(ratios {', '.join(detail)})")


def final_third_max_drop(val_acc):
    v = np.asarray(val_acc)
    start = max(1, len(v) - len(v) // 3)
    return float(max(0.0, np.max(v[start - 1:-1] - v[start:])))


@pytest.mark.slow
def test_8a_hard_prune_drop(criterion, xor_compare):
    rc, out, secs = xor_compare
    assert rc == 0
    runs = read_csv(out / "compare" / "runs.csv")
    trace = read_csv(out / "compare" / "trace_val_acc.csv")
    wins, pairs = 0, []
    for r in (r for r in runs if r["run"] == "darts_mode"):
        s = r["seed"]
        curve = [float(row[f"asap_default_seed_{s}"]) for row in trace
                 if row[f"asap_default_seed_{s}"] != ""]
        asap_drop = final_third_max_drop(curve)
        darts_drop = float(r["hard_prune_drop"])
        wins += darts_drop > asap_drop
        pairs.append(f"{darts_drop:.3f}>{asap_drop:.3f}")
    criterion("8(a)", wins > len(pairs) / 2 and secs < 1200,
              f"darts hard-prune drop beats asap's largest final-third epoch drop on "
              f"{wins}/{len(pairs)} seeds; compare run {secs:.0f}s")


@pytest.mark.slow
def test_8b_child_accuracy(criterion, xor_compare):
    rc, out, _ = xor_compare
    assert rc == 0
    table = {r["run"]: r for r in read_csv(out / "compare" / "table.csv")}
    asap = float(table["asap_default"]["child_test_acc_mean"])
    darts = float(table["darts_mode"]["child_test_acc_mean"])
    rand = float(table["random_genotype"]["child_test_acc_mean"])
    criterion("8(b)", asap >= darts and asap >= rand,
              f"mean child test accuracy asap {asap:.4f}, darts_mode {darts:.4f}, "
              f"random genotype {rand:.4f}")


# --------------------------------------------------------------------------
# 9. CLI round trip
# --------------------------------------------------------------------------

CLI_CONFIG = """\
preset: asap_default
epochs: 12
seeds: [0, 1, 2, 3, 4]
dataset:
  kind: xor_grid
  n: 128
  test_n: 64
cell:
  B: 2
  width: 4
child:
  epochs: 3
compare:
  runs: [asap_default, darts_mode]
simulate:
  Ns: [2, 3]
  deltas: [0.1]
  gaps: [0.3]
  trials: 40
"""


def snapshot(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and "logs" not in p.parts}


def test_9_cli_round_trip(criterion, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(CLI_CONFIG)
    out = tmp_path / "out"
    geno = out / "search" / "asap_default" / "seed_0" / "genotype.txt"
    commands = [["search", "--config", str(cfg), "--out", str(out)],
                ["evaluate", "--config", str(cfg), "--out", str(out), "--genotype", str(geno)],
                ["simulate", "--config", str(cfg), "--out", str(out)],
                ["compare", "--config", str(cfg), "--out", str(out)]]
    codes = [main(c) for c in commands]
    first = snapshot(out)
    codes += [main(c) for c in commands]
    same = snapshot(out) == first
    kinds = sorted({k.split("/")[0] for k in first})
    criterion("9", codes == [0] * 8 and same,
              f"exit codes {codes}; {len(first)} output files under {kinds} "
              f"bit-identical on rerun={same}")
