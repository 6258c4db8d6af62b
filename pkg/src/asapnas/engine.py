"""Anneal-and-prune search: alternating weight / architecture updates on a cell.

One epoch of :func:`search`:

1. shuffle both halves of the data;
2. for every mini-batch pair, take an SGD step on the network weights using the
   training half; then, once out of the grace phase, take an Adam step on the
   architecture weights using the validation half and apply the pruner;
3. record metrics and advance the temperature and threshold.

The search stops when every edge has a single live operation or the epoch cap
is reached.  Pruner kinds:

``asap``
    drop every live op whose Gibbs weight falls below the current threshold.
``magnitude`` / ``accum_grad``
    at the end of each epoch from ``prune_start`` on, remove as many ops as the
    polynomial sparsity ramp asks for, smallest alpha (resp. smallest
    accumulated ``|dL/dalpha|``) first.
``darts_hard``
    never prune during search; a single hard prune derives the child.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as tn
from .cell import (Cell, Genotype, HardPruneReport, MixedEdge, derive_genotype,
                   prune_op)
from .data import Dataset, split_half
from .ops import OpSet, make_opset, DEFAULT_NAMES
from .optim import SGD, Adam
from .schedules import SchedulePolicy, sparsity_schedule
from .tensor import Tensor

PRUNERS = ("asap", "magnitude", "accum_grad", "darts_hard")


class SearchDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    epochs: int = 50
    batch_size: int = 64
    # network
    B: int = 4
    width: int = 8
    ops: tuple[str, ...] = DEFAULT_NAMES
    # weight optimizer
    w_lr: float = 0.05
    w_momentum: float = 0.9
    w_weight_decay: float = 3e-4
    grad_clip: float | None = 5.0
    # architecture optimizer
    alpha_lr: float = 1e-3
    alpha_betas: tuple[float, float] = (0.5, 0.999)
    # annealing
    schedule: str = "exponential"
    T0: float = 1.3
    decay: float = 0.95
    eta_L: float = 1.0
    delta: float = 0.1
    nu: float | None = None
    granularity: str = "epoch"
    # thresholding and grace
    threshold: str = "fixed"
    theta0: float = 0.4
    grace_mode: str = "epochs"
    grace_epochs: int = 5
    tau: float = math.inf
    # pruner
    pruner: str = "asap"
    sparsity_p: int = 3
    prune_start: int = 20
    top_k: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.w_lr <= 0 or self.alpha_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.pruner not in PRUNERS:
            raise ValueError(f"unknown pruner {self.pruner!r}; choose from {PRUNERS}")
        if self.grace_mode not in ("epochs", "temperature"):
            raise ValueError(f"grace_mode must be 'epochs' or 'temperature', got {self.grace_mode!r}")
        if self.granularity not in ("epoch", "step"):
            raise ValueError(f"granularity must be 'epoch' or 'step', got {self.granularity!r}")
        if self.pruner in ("magnitude", "accum_grad") and self.prune_start >= self.epochs:
            raise ValueError(f"prune_start ({self.prune_start}) must precede the epoch cap ({self.epochs})")

    def opset(self) -> OpSet:
        return make_opset(self.ops, self.width)

    def policy(self) -> SchedulePolicy:
        return SchedulePolicy(self.schedule, T0=self.T0, decay=self.decay, eta_L=self.eta_L,
                              delta=self.delta, nu=self.nu, threshold=self.threshold,
                              theta0=self.theta0, N=len(self.ops))

    def in_grace(self, epoch: int, T: float) -> bool:
        if self.grace_mode == "epochs":
            return epoch < self.grace_epochs
        return not T < self.tau


# --------------------------------------------------------------------------
# network
# --------------------------------------------------------------------------


class SearchNetwork:
    """Two linear stems -> cell -> linear classifier.

    The stems and head are linear so any nonlinearity has to come from the
    operations the search selects.
    """

    def __init__(self, cell: Cell, stems: list[tuple[Tensor, Tensor]], head: tuple[Tensor, Tensor]):
        self.cell = cell
        self.stems = stems
        self.head = head

    @classmethod
    def build(cls, cell: Cell, d_in: int, classes: int, rng: np.random.Generator) -> "SearchNetwork":
        d = cell.width
        stems = [(tn.parameter((d_in, d), d_in, rng, name=f"stem{k}.w"),
                  tn.parameter((d,), d_in, rng, name=f"stem{k}.b")) for k in range(2)]
        head = (tn.parameter((d, classes), d, rng, name="head.w"),
                tn.parameter((classes,), d, rng, name="head.b"))
        return cls(cell, stems, head)

    def with_cell(self, cell: Cell) -> "SearchNetwork":
        return SearchNetwork(cell, self.stems, self.head)

    def __call__(self, x, T: float) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        s0, s1 = [x @ w + b for (w, b) in self.stems]
        h = self.cell(s0, s1, T)
        return h @ self.head[0] + self.head[1]

    def weights(self) -> list[Tensor]:
        ps = [p for wb in self.stems for p in wb]
        return ps + self.cell.params() + list(self.head)

    def loss(self, X, y, T: float) -> Tensor:
        return tn.cross_entropy(self(X, T), y)

    def accuracy(self, X, y, T: float) -> float:
        logits = self(X, T).data
        return float(np.mean(np.argmax(logits, axis=1) == y))


# --------------------------------------------------------------------------
# gradients
# --------------------------------------------------------------------------


def alpha_grad(edge: MixedEdge, upstream_grad: np.ndarray | None = None,
               T: float | None = None) -> np.ndarray:
    """Closed-form dL/dalpha for an edge from its last forward pass.

    ``dL/dalpha_k = Phi_k / T * <dL/d(mixed), o_k - mixed>``.  The 1/T factor
    comes from differentiating ``alpha/T``.  ``upstream_grad`` defaults to the
    gradient a backward pass left on the mixed output.
    """
    rec = edge.last
    if rec is None:
        raise RuntimeError(f"edge {edge.key} has no recorded forward pass")
    T = rec.T if T is None else T
    g = rec.mixed.grad if upstream_grad is None else np.asarray(upstream_grad)
    if g is None:
        raise RuntimeError(f"edge {edge.key}: no upstream gradient; run backward first")
    if len(rec.outputs) == 1:
        return np.zeros(1)
    mixed = rec.mixed.data
    return np.array([rec.phi[k] / T * np.sum(g * (o.data - mixed))
                     for k, o in enumerate(rec.outputs)])


# --------------------------------------------------------------------------
# trace
# --------------------------------------------------------------------------


@dataclass
class PruneEvent:
    epoch: int
    edge: tuple[int, int]
    op: str
    phi: float
    theta: float

    def __str__(self) -> str:
        return f"{self.edge[0]}->{self.edge[1]}:{self.op}@{self.phi!r}"


@dataclass
class EpochRecord:
    epoch: int
    temperature: float
    threshold: float
    sparsity: float
    entropy: float
    train_loss: float
    val_acc: float
    epoch_seconds: float
    epoch_ops: int
    grace: bool
    alpha_updates: int
    prunes: list[PruneEvent] = field(default_factory=list)


TRACE_HEADER = ("epoch", "temperature", "threshold", "sparsity", "entropy", "train_loss",
                "val_acc", "epoch_seconds", "prunes")


@dataclass
class SearchTrace:
    """Per-epoch search metrics.

    ``to_csv(path)`` writes the deterministic view, where wall-clock
    ``epoch_seconds`` is replaced by ``epoch_ops`` (primitive tape nodes in the
    epoch); ``to_csv(path, timing=True)`` writes :data:`TRACE_HEADER` verbatim.
    """

    records: list[EpochRecord] = field(default_factory=list)
    grace_mode: str = "epochs"

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def prune_events(self) -> list[PruneEvent]:
        return [ev for r in self.records for ev in r.prunes]

    def to_csv(self, path, timing: bool = False) -> None:
        header = list(TRACE_HEADER)
        if not timing:
            header[header.index("epoch_seconds")] = "epoch_ops"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in self.records:
                cost = repr(r.epoch_seconds) if timing else r.epoch_ops
                w.writerow([r.epoch, repr(r.temperature), repr(r.threshold), repr(r.sparsity),
                            repr(r.entropy), repr(r.train_loss), repr(r.val_acc), cost,
                            ";".join(str(ev) for ev in r.prunes)])


@dataclass
class SearchResult:
    genotype: Genotype
    trace: SearchTrace
    network: SearchNetwork
    hard_prune: HardPruneReport
    final_temperature: float
    soft_val_acc: float
    hard_val_acc: float
    converged: bool

    def __iter__(self):
        return iter((self.genotype, self.trace))

    @property
    def hard_prune_drop(self) -> float:
        return self.soft_val_acc - self.hard_val_acc


# --------------------------------------------------------------------------
# pruners
# --------------------------------------------------------------------------


class _PruneSink:
    """Keeps the architecture optimizer in step with pruned alpha entries."""

    def __init__(self, alpha_opt: Adam, w_opt: SGD, accum: dict):
        self.alpha_opt = alpha_opt
        self.w_opt = w_opt
        self.accum = accum

    def __call__(self, edge: MixedEdge, op_index: int):
        res = prune_op(edge, op_index)
        self.alpha_opt.transfer(res.old_alpha, res.new_alpha, res.keep)
        self.w_opt.forget(res.instance.params)
        self.accum.pop((edge.key, op_index), None)
        return res


def prune_threshold(cell: Cell, T: float, theta: float, epoch: int = 0,
                    sink=None) -> list[PruneEvent]:
    """Prune every live op with Phi < theta; an edge never loses its argmax."""
    sink = sink or prune_op
    events = []
    for key, e in sorted(cell.edges.items()):
        if len(e.live) < 2:
            continue
        phi = e.phi(T)
        top = int(np.argmax(phi))
        doomed = [(e.live[k], float(phi[k])) for k in range(len(phi))
                  if phi[k] < theta and k != top]
        for op_index, p in doomed:
            sink(e, op_index)
            events.append(PruneEvent(epoch, key, cell.opset[op_index].name, p, theta))
    return events


def _prune_by_score(cell: Cell, count: int, score, epoch: int, sink) -> list[PruneEvent]:
    prunable = cell.live_count() - len(cell.edges)
    if count < 0 or count > prunable:
        raise ValueError(f"cannot prune {count} ops: only {prunable} can go while keeping one per edge")
    ranked = sorted((score(e, k), key, e.live[k])
                    for key, e in sorted(cell.edges.items()) for k in range(len(e.live)))
    events = []
    for s, key, op_index in ranked:
        if len(events) == count:
            break
        e = cell.edges[key]
        if len(e.live) < 2:
            continue
        sink(e, op_index)
        events.append(PruneEvent(epoch, key, cell.opset[op_index].name, float(s), math.nan))
    return events


def prune_magnitude(cell: Cell, count: int, epoch: int = 0, sink=None) -> list[PruneEvent]:
    """Remove the ``count`` live ops with the smallest alpha across the cell."""
    return _prune_by_score(cell, count, lambda e, k: float(e.alpha.data[k]), epoch,
                           sink or prune_op)


def prune_accum_grad(cell: Cell, count: int, accumulator: dict, epoch: int = 0,
                     sink=None) -> list[PruneEvent]:
    """Remove the ``count`` live ops with the smallest accumulated |dL/dalpha|.

    ``accumulator`` maps ``(edge key, op index)`` to the running sum; missing
    entries count as 0.
    """
    return _prune_by_score(cell, count,
                           lambda e, k: float(accumulator.get((e.key, e.live[k]), 0.0)),
                           epoch, sink or prune_op)


def prune_hard_final(cell: Cell, T: float, top_k: int = 2) -> HardPruneReport:
    return derive_genotype(cell, T, top_k)


def random_genotype(opset: OpSet, B: int, rng: np.random.Generator, top_k: int = 2) -> Genotype:
    names = [n for n in opset.names if n != "zero"]
    edges = []
    for i in range(2, B + 2):
        sources = rng.choice(i, size=min(top_k, i), replace=False)
        edges += [(int(j), i, names[rng.integers(len(names))]) for j in sorted(sources)]
    return Genotype(B, sorted(edges))


# --------------------------------------------------------------------------
# search loop
# --------------------------------------------------------------------------


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[k:k + size] for k in range(0, n, size)]


def search(config: SearchConfig, dataset: Dataset) -> SearchResult:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    train, val = split_half(dataset, config.seed)
    rng = np.random.default_rng(config.seed)
    opset = config.opset()
    cell = Cell.build(opset, config.B, rng)
    net = SearchNetwork.build(cell, dataset.d, dataset.classes, rng)
    policy = config.policy()
    w_opt = SGD(config.w_lr, config.w_momentum, config.w_weight_decay, config.grad_clip)
    a_opt = Adam(config.alpha_lr, config.alpha_betas)
    accum: dict = {}
    sink = _PruneSink(a_opt, w_opt, accum)
    initial = cell.initial_count()
    trace = SearchTrace(grace_mode=config.grace_mode)

    step = 0
    T = policy.temperature(step)
    theta = policy.threshold(step)
    for epoch in range(config.epochs):
        t_start = time.perf_counter()
        grace = config.in_grace(epoch, T)
        ops_count = 0
        losses = []
        events: list[PruneEvent] = []
        alpha_updates = 0
        tb = _batches(len(train), config.batch_size, rng)
        vb = _batches(len(val), config.batch_size, rng)
        for b, idx in enumerate(tb):
            loss = net.loss(train.features[idx], train.labels[idx], T)
            if not np.isfinite(loss.data):
                raise SearchDiverged(f"non-finite training loss at epoch {epoch}, batch {b}")
            losses.append(float(loss.data))
            tn.zero_grads(net.weights())
            ops_count += tn.backward(loss)
            w_opt.step(net.weights())

            if not grace and not cell.converged():
                vidx = vb[b % len(vb)]
                vloss = net.loss(val.features[vidx], val.labels[vidx], T)
                if not np.isfinite(vloss.data):
                    raise SearchDiverged(f"non-finite validation loss at epoch {epoch}, batch {b}")
                alphas = cell.alphas()
                tn.zero_grads(alphas)
                ops_count += tn.backward(vloss)
                a_opt.step(alphas)
                alpha_updates += 1
                for key, e in cell.edges.items():
                    if e.alpha.grad is not None:
                        for k, g in zip(e.live, np.abs(e.alpha.grad)):
                            accum[(key, k)] = accum.get((key, k), 0.0) + float(g)
                if config.pruner == "asap":
                    events += prune_threshold(cell, T, theta, epoch, sink)

            if config.granularity == "step":
                step += 1
                T, theta = policy.temperature(step), policy.threshold(step)

        if config.pruner in ("magnitude", "accum_grad") and epoch >= config.prune_start:
            s_f = (initial - len(cell.edges)) / initial
            s_t = sparsity_schedule(0.0, s_f, config.prune_start,
                                    max(1, config.epochs - 1 - config.prune_start), 1,
                                    config.sparsity_p,
                                    min(epoch, config.epochs - 1))
            target = int(round(s_t * initial))
            count = max(0, min(target - (initial - cell.live_count()),
                               cell.live_count() - len(cell.edges)))
            if config.pruner == "magnitude":
                events += prune_magnitude(cell, count, epoch, sink)
            else:
                events += prune_accum_grad(cell, count, accum, epoch, sink)

        val_acc = net.accuracy(val.features, val.labels, T)
        trace.records.append(EpochRecord(
            epoch=epoch, temperature=T, threshold=theta,
            sparsity=cell.live_count() / initial, entropy=cell.mean_entropy(T),
            train_loss=float(np.mean(losses)), val_acc=val_acc,
            epoch_seconds=time.perf_counter() - t_start, epoch_ops=ops_count,
            grace=grace, alpha_updates=alpha_updates, prunes=events))

        if config.granularity == "epoch":
            step += 1
            T, theta = policy.temperature(step), policy.threshold(step)
        if config.pruner != "darts_hard" and cell.converged():
            break

    T_final = trace.records[-1].temperature
    report = prune_hard_final(cell, T_final, config.top_k)
    soft = trace.records[-1].val_acc
    hard = net.with_cell(cell.restrict(report.genotype)).accuracy(val.features, val.labels, T_final)
    return SearchResult(report.genotype, trace, net, report, T_final, soft, hard, cell.converged())


# --------------------------------------------------------------------------
# child evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChildConfig:
    epochs: int = 40
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 3e-4
    grad_clip: float | None = 5.0
    # independent initializations averaged by evaluate_child
    repeats: int = 1


def train_child(genotype: Genotype, opset: OpSet, train: Dataset, test: Dataset,
                config: ChildConfig = ChildConfig(), seed: int = 0) -> float:
    """Train the fixed cell from scratch on ``train``; return ``test`` accuracy."""
    rng = np.random.default_rng(seed)
    cell = Cell.from_genotype(genotype, opset, rng)
    net = SearchNetwork.build(cell, train.d, train.classes, rng)
    opt = SGD(config.lr, config.momentum, config.weight_decay, config.grad_clip)
    for epoch in range(config.epochs):
        for idx in _batches(len(train), config.batch_size, rng):
            loss = net.loss(train.features[idx], train.labels[idx], 1.0)
            if not np.isfinite(loss.data):
                raise SearchDiverged(f"non-finite child loss at epoch {epoch}")
            tn.zero_grads(net.weights())
            tn.backward(loss)
            opt.step(net.weights())
    return net.accuracy(test.features, test.labels, 1.0)


def evaluate_child(genotype: Genotype, opset: OpSet, train: Dataset, test: Dataset,
                   config: ChildConfig = ChildConfig(), seed: int = 0) -> float:
    """Mean test accuracy over ``config.repeats`` trainings seeded ``100 * seed + i``."""
    return float(np.mean([train_child(genotype, opset, train, test, config, 100 * seed + i)
                          for i in range(config.repeats)]))


def train_linear(train: Dataset, test: Dataset, config: ChildConfig = ChildConfig(),
                 seed: int = 0) -> float:
    """Softmax regression with the child recipe; the baseline any cell should match."""
    rng = np.random.default_rng(seed)
    W = tn.parameter((train.d, train.classes), train.d, rng, "W")
    b = tn.parameter((train.classes,), train.d, rng, "b")
    opt = SGD(config.lr, config.momentum, config.weight_decay, config.grad_clip)
    for _ in range(config.epochs):
        for idx in _batches(len(train), config.batch_size, rng):
            loss = tn.cross_entropy(Tensor(train.features[idx]) @ W + b, train.labels[idx])
            tn.zero_grads([W, b])
            tn.backward(loss)
            opt.step([W, b])
    pred = np.argmax(test.features @ W.data + b.data, axis=1)
    return float(np.mean(pred == test.labels))
