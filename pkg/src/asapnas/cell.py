"""The annealable cell: mixed edges over a DAG, Gibbs mixing, pruning, genotypes.

Node numbering: 0 and 1 are the cell inputs, ``2 .. B+1`` the intermediate
nodes.  Every intermediate node ``i`` sums the mixed edges ``j -> i`` for all
``j < i``; the cell output concatenates the intermediate nodes and maps them
back to width ``d`` with a dense projection.

Genotype text format (one record per line, ``#`` starts a comment)::

    # asapnas genotype v1
    nodes 4
    edge 0 2 relu_dense
    edge 1 2 identity
    ...

``nodes`` must come first; each ``edge`` line is ``source target op_name``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import tensor as tn
from .ops import OpInstance, OpSet
from .tensor import ShapeError, Tensor


def gibbs(alpha, T: float) -> np.ndarray:
    """Temperature softmax ``exp(alpha/T) / sum exp(alpha/T)``."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    if not np.all(np.isfinite(alpha)):
        raise ValueError("alpha must be finite")
    z = (alpha - alpha.max()) / T
    e = np.exp(z)
    return e / e.sum()


def gibbs_tensor(alpha: Tensor, T: float) -> Tensor:
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    return tn.softmax(tn.scale(alpha, 1.0 / T))


def normalized_entropy(phi: np.ndarray, n_initial: int) -> float:
    if len(phi) <= 1 or n_initial <= 1:
        return 0.0
    p = phi[phi > 0]
    return float(-(p * np.log(p)).sum() / math.log(n_initial))


class _ForwardRecord(NamedTuple):
    T: float
    phi: np.ndarray
    outputs: list[Tensor]
    mixed: Tensor


class PruneResult(NamedTuple):
    op_index: int
    op_name: str
    old_alpha: Tensor
    new_alpha: Tensor
    keep: np.ndarray
    instance: OpInstance


class MixedEdge:
    """Edge ``source -> target`` holding its live candidate operations.

    ``live`` lists OpSet indices; ``alpha`` and ``instances`` are aligned with
    it.  Pruned entries are dropped from all three.
    """

    def __init__(self, source: int, target: int, opset: OpSet,
                 instances: Sequence[OpInstance], live: Sequence[int],
                 alpha: np.ndarray | None = None):
        if len(live) < 1:
            raise ValueError("an edge needs at least one live operation")
        if len(instances) != len(live):
            raise ValueError("instances and live indices must align")
        self.source = source
        self.target = target
        self.opset = opset
        self.live = list(live)
        self.instances = list(instances)
        data = np.zeros(len(live)) if alpha is None else np.asarray(alpha, dtype=np.float64)
        self.alpha = Tensor(data, requires_grad=True, name=f"alpha[{source}->{target}]")
        self.n_initial = len(live)
        self.last: _ForwardRecord | None = None

    @classmethod
    def build(cls, source: int, target: int, opset: OpSet,
              rng: np.random.Generator) -> "MixedEdge":
        instances = [op.build(opset.width, rng) for op in opset]
        return cls(source, target, opset, instances, range(opset.N))

    @property
    def key(self) -> tuple[int, int]:
        return (self.source, self.target)

    @property
    def live_names(self) -> list[str]:
        return [self.opset[i].name for i in self.live]

    def phi(self, T: float) -> np.ndarray:
        return gibbs(self.alpha.data, T)

    def params(self) -> list[Tensor]:
        return [p for inst in self.instances for p in inst.params]

    def __repr__(self) -> str:
        return f"MixedEdge({self.source}->{self.target}, live={self.live_names})"


def mixed_forward(edge: MixedEdge, x: Tensor, T: float) -> Tensor:
    """Gibbs-weighted sum of the live operations applied to ``x``."""
    if len(edge.live) == 1:
        out = edge.instances[0](x)
        edge.last = _ForwardRecord(T, np.ones(1), [out], out)
        return out
    phi = gibbs_tensor(edge.alpha, T)
    outputs = [inst(x) for inst in edge.instances]
    mixed = None
    for k, o in enumerate(outputs):
        term = tn.take(phi, k) * o
        mixed = term if mixed is None else mixed + term
    edge.last = _ForwardRecord(T, phi.data.copy(), outputs, mixed)
    return mixed


def edge_entropy(edge: MixedEdge, T: float) -> float:
    """Entropy of the edge's Gibbs weights over ln(ops live at search start)."""
    if len(edge.live) == 1:
        return 0.0
    return normalized_entropy(edge.phi(T), edge.n_initial)


def prune_op(edge: MixedEdge, op_index: int) -> PruneResult:
    """Remove OpSet operation ``op_index`` from the edge's live set."""
    if op_index not in edge.live:
        raise ValueError(f"operation {op_index} is not live on edge {edge.key}")
    if len(edge.live) < 2:
        raise ValueError(f"cannot prune the last live operation on edge {edge.key}")
    pos = edge.live.index(op_index)
    keep = np.ones(len(edge.live), dtype=bool)
    keep[pos] = False
    old = edge.alpha
    edge.alpha = Tensor(old.data[keep], requires_grad=True, name=old.name)
    inst = edge.instances.pop(pos)
    edge.live.pop(pos)
    edge.last = None
    return PruneResult(op_index, edge.opset[op_index].name, old, edge.alpha, keep, inst)


class Cell:
    """DAG of ``B`` intermediate nodes fed by two inputs."""

    def __init__(self, opset: OpSet, edges: Sequence[MixedEdge], B: int,
                 proj_w: Tensor, proj_b: Tensor):
        self.opset = opset
        self.B = B
        self.width = opset.width
        self.edges = {e.key: e for e in edges}
        for (j, i) in self.edges:
            if not 0 <= j < i < B + 2 or i < 2:
                raise ValueError(f"edge {j}->{i} is not a forward edge of a {B}-node cell")
        self.proj_w = proj_w
        self.proj_b = proj_b
        self._incoming = {i: [e for (j, t), e in sorted(self.edges.items()) if t == i]
                          for i in range(2, B + 2)}

    @classmethod
    def build(cls, opset: OpSet, B: int, rng: np.random.Generator) -> "Cell":
        if B < 1:
            raise ValueError(f"a cell needs at least one intermediate node, got B={B}")
        d = opset.width
        edges = [MixedEdge.build(j, i, opset, rng) for i in range(2, B + 2) for j in range(i)]
        proj_w = tn.parameter((B * d, d), B * d, rng, name="proj.w")
        proj_b = tn.parameter((d,), B * d, rng, name="proj.b")
        return cls(opset, edges, B, proj_w, proj_b)

    @classmethod
    def from_genotype(cls, genotype: "Genotype", opset: OpSet,
                      rng: np.random.Generator) -> "Cell":
        """Fixed cell: one live operation per genotype edge, fresh weights."""
        d = opset.width
        edges = []
        for (j, i, name) in genotype.edges:
            k = opset.index(name)
            edges.append(MixedEdge(j, i, opset, [opset[k].build(d, rng)], [k]))
        B = genotype.nodes
        proj_w = tn.parameter((B * d, d), B * d, rng, name="proj.w")
        proj_b = tn.parameter((d,), B * d, rng, name="proj.b")
        return cls(opset, edges, B, proj_w, proj_b)

    def restrict(self, genotype: "Genotype") -> "Cell":
        """Hard-pruned view that reuses this cell's trained weights."""
        edges = []
        for (j, i, name) in genotype.edges:
            src = self.edges[(j, i)]
            k = self.opset.index(name)
            pos = src.live.index(k)
            edges.append(MixedEdge(j, i, self.opset, [src.instances[pos]], [k]))
        return Cell(self.opset, edges, self.B, self.proj_w, self.proj_b)

    def edges_into(self, i: int) -> list[MixedEdge]:
        return self._incoming[i]

    def params(self) -> list[Tensor]:
        ps = [p for e in self.edges.values() for p in e.params()]
        return ps + [self.proj_w, self.proj_b]

    def alphas(self) -> list[Tensor]:
        return [e.alpha for e in self.edges.values() if len(e.live) > 1]

    def live_count(self) -> int:
        return sum(len(e.live) for e in self.edges.values())

    def initial_count(self) -> int:
        return sum(e.n_initial for e in self.edges.values())

    def converged(self) -> bool:
        return all(len(e.live) == 1 for e in self.edges.values())

    def mean_entropy(self, T: float) -> float:
        if not self.edges:
            return 0.0
        return float(np.mean([edge_entropy(e, T) for e in self.edges.values()]))

    def node_values(self, s0: Tensor, s1: Tensor, T: float) -> list[Tensor]:
        for s in (s0, s1):
            if s.data.ndim != 2 or s.shape[1] != self.width:
                raise ShapeError(
                    f"cell_forward: inputs must have width {self.width}, got {s0.shape} and {s1.shape}")
        states = [s0, s1]
        for i in range(2, self.B + 2):
            acc = None
            for e in self.edges_into(i):
                y = mixed_forward(e, states[e.source], T)
                acc = y if acc is None else acc + y
            if acc is None:
                acc = Tensor(np.zeros((s0.shape[0], self.width)))
            states.append(acc)
        return states

    def __call__(self, s0: Tensor, s1: Tensor, T: float) -> Tensor:
        return cell_forward(self, s0, s1, T)


def cell_forward(cell: Cell, s0: Tensor, s1: Tensor, T: float) -> Tensor:
    states = cell.node_values(s0, s1, T)
    return tn.concat(states[2:], axis=1) @ cell.proj_w + cell.proj_b


# --------------------------------------------------------------------------
# genotypes
# --------------------------------------------------------------------------


class GenotypeError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class Genotype:
    nodes: int
    edges: list[tuple[int, int, str]] = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["# asapnas genotype v1", f"nodes {self.nodes}"]
        lines += [f"edge {j} {i} {name}" for (j, i, name) in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, known_ops: Sequence[str] | None = None) -> "Genotype":
        nodes = None
        edges = []
        seen = set()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "nodes":
                if nodes is not None:
                    raise GenotypeError("duplicate 'nodes' record", lineno)
                if len(parts) != 2 or not parts[1].isdigit() or int(parts[1]) < 1:
                    raise GenotypeError(f"expected 'nodes <positive int>', got {raw!r}", lineno)
                nodes = int(parts[1])
            elif parts[0] == "edge":
                if nodes is None:
                    raise GenotypeError("'edge' before 'nodes'", lineno)
                if len(parts) != 4 or not (parts[1].isdigit() and parts[2].isdigit()):
                    raise GenotypeError(f"expected 'edge <src> <dst> <op>', got {raw!r}", lineno)
                j, i, name = int(parts[1]), int(parts[2]), parts[3]
                if not (0 <= j < i and 2 <= i < nodes + 2):
                    raise GenotypeError(f"edge {j}->{i} is not a forward edge of a {nodes}-node cell", lineno)
                if known_ops is not None and name not in known_ops:
                    raise GenotypeError(f"unknown operation {name!r}", lineno)
                if (j, i) in seen:
                    raise GenotypeError(f"duplicate edge {j}->{i}", lineno)
                seen.add((j, i))
                edges.append((j, i, name))
            else:
                raise GenotypeError(f"unknown record {parts[0]!r}", lineno)
        if nodes is None:
            raise GenotypeError("missing 'nodes' record")
        return cls(nodes, edges)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path, known_ops: Sequence[str] | None = None) -> "Genotype":
        with open(path) as fh:
            return cls.from_text(fh.read(), known_ops)


@dataclass
class HardPruneReport:
    genotype: Genotype
    ties: list[tuple[int, int]]
    phi_gaps: dict[tuple[int, int], float]


def derive_genotype(cell: Cell, T: float, top_k: int = 2) -> HardPruneReport:
    """Argmax-Phi operation per edge, then the ``top_k`` strongest edges per node.

    Ties are broken by the lowest live position and reported.  An edge whose
    winner is ``zero`` is dropped.  ``phi_gaps`` holds, per edge, the Phi of the
    kept operation minus the largest discarded Phi.
    """
    ties = []
    gaps = {}
    best: dict[int, list[tuple[float, int, int, str]]] = {}
    for (j, i), e in sorted(cell.edges.items()):
        phi = e.phi(T)
        k = int(np.argmax(phi))
        if np.sum(phi == phi[k]) > 1:
            ties.append((j, i))
        rest = np.delete(phi, k)
        gaps[(j, i)] = float(phi[k] - (rest.max() if rest.size else 0.0))
        name = e.opset[e.live[k]].name
        if name == "zero":
            continue
        best.setdefault(i, []).append((float(phi[k]), j, i, name))
    edges = []
    for i in sorted(best):
        ranked = sorted(best[i], key=lambda r: (-r[0], r[1]))
        edges += [(j, t, name) for (_, j, t, name) in ranked[:top_k]]
    return HardPruneReport(Genotype(cell.B, sorted(edges)), ties, gaps)
