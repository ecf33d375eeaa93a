"""Colored labelled trees, the barrier construction and the exploration map.

A tree is stored as flat arrays in preorder, so that node index order is the
lexicographic order of the ordered tree.  Labels are absolute integers: the
root carries ``x`` and each edge adds an independent copy of J.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Literal

import numpy as np

from . import _treekern as K
from .measures import JumpDistribution, OrderBook
from .streams import as_key, replica_key, replica_keys

WHITE, GREEN, RED = 0, 1, 2
COLOR_NAMES = {WHITE: "white", GREEN: "green", RED: "red"}
DEFAULT_NODE_CAP = 10_000_000


@dataclass
class Capped:
    """Returned instead of a tree when the arena would exceed ``node_cap``."""

    partial_size: int
    node_cap: int


@dataclass
class ColoredTree:
    parent: np.ndarray
    label: np.ndarray
    depth: np.ndarray
    color: np.ndarray
    root_label: int
    child_ptr: np.ndarray = field(repr=False)
    child_idx: np.ndarray = field(repr=False)

    @classmethod
    def from_parents(cls, parent, label, root_label=None, color=None) -> "ColoredTree":
        """Build from preorder parent/label arrays (parent[0] == -1)."""
        parent = np.asarray(parent, dtype=np.int64)
        label = np.asarray(label, dtype=np.int64)
        n = parent.shape[0]
        if n == 0 or parent[0] != -1:
            raise ValueError("node 0 must be the root")
        if np.any(parent[1:] >= np.arange(1, n)) or np.any(parent[1:] < 0):
            raise ValueError("parents must precede children (preorder)")
        depth = np.ones(n, dtype=np.int64)
        for v in range(1, n):
            depth[v] = depth[parent[v]] + 1
        counts = np.bincount(parent[1:], minlength=n)
        child_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=child_ptr[1:])
        # stable sort by parent keeps siblings in index order
        child_idx = (np.argsort(parent[1:], kind="stable") + 1).astype(np.int64)
        if color is None:
            color = np.zeros(n, dtype=np.int8)
            color[0] = GREEN
        return cls(parent, label, depth, np.asarray(color, dtype=np.int8),
                   int(label[0] if root_label is None else root_label), child_ptr, child_idx)

    def __len__(self) -> int:
        return int(self.parent.shape[0])

    @property
    def size(self) -> int:
        return len(self)

    def height(self) -> int:
        return int(self.depth.max())

    def psi_star(self) -> int:
        return int(self.label.max())

    def children(self, v: int) -> np.ndarray:
        return self.child_idx[self.child_ptr[v]:self.child_ptr[v + 1]]

    def path(self, v: int) -> list[int]:
        """Nodes v_1 = root, ..., v_|v| = v."""
        out = [v]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out[::-1]

    def check_labels(self, jumps: JumpDistribution | None = None) -> bool:
        inc = self.label[1:] - self.label[self.parent[1:]]
        ok = self.label[0] == self.root_label
        if jumps is not None:
            ok = ok and bool(np.isin(inc, jumps.values).all())
        return bool(ok)

    def dump(self) -> str:
        """Indented ``depth label color`` lines in preorder."""
        return "\n".join(
            f"{'  ' * (int(d) - 1)}{int(d)} {int(l)} {COLOR_NAMES[int(c)]}"
            for d, l, c in zip(self.depth, self.label, self.color)
        )

    def subtree(self, keep: np.ndarray) -> "ColoredTree":
        """Restrict to a prefix-closed node mask, preserving order."""
        idx = np.flatnonzero(keep)
        remap = -np.ones(len(self), dtype=np.int64)
        remap[idx] = np.arange(idx.shape[0])
        parent = np.where(self.parent[idx] >= 0, remap[self.parent[idx]], -1)
        return ColoredTree.from_parents(parent, self.label[idx], self.root_label, self.color[idx])


def _tree_from_kernel(parent, label, root_label) -> ColoredTree:
    return ColoredTree.from_parents(parent, label, root_label)


def sample_tree(x: int, jumps: JumpDistribution, key, node_cap: int = DEFAULT_NODE_CAP,
                max_depth: int | None = None) -> ColoredTree | Capped:
    """Eager sampler: the whole tree T_x (optionally cut at ``max_depth``)."""
    parent, label, depth, capped = K.grow_tree(
        as_key(key), int(x), jumps.cum, jumps.values, False, False, int(node_cap),
        int(max_depth) if max_depth else K.NO_LIMIT)
    if capped:
        return Capped(int(parent.shape[0]), int(node_cap))
    return _tree_from_kernel(parent, label, x)


def sample_barrier_tree(x: int, jumps: JumpDistribution, key,
                        node_cap: int = DEFAULT_NODE_CAP) -> ColoredTree | Capped:
    """Lazy sampler: B(T_x) without ever generating descendants of killed nodes.

    Under the same key this is exactly ``barrier_tree(sample_tree(x, ...))``.
    """
    parent, label, depth, capped = K.grow_tree(
        as_key(key), int(x), jumps.cum, jumps.values, True, False, int(node_cap), K.NO_LIMIT)
    if capped:
        return Capped(int(parent.shape[0]), int(node_cap))
    return _tree_from_kernel(parent, label, x)


def killed_set(tree: ColoredTree) -> np.ndarray:
    """Indices of killed nodes: first drop below the root label along their path."""
    return np.flatnonzero(K.killed_mask(tree.parent, tree.label, tree.root_label))


def _barrier_mask(tree: ColoredTree) -> np.ndarray:
    killed = K.killed_mask(tree.parent, tree.label, tree.root_label)
    keep = np.ones(len(tree), dtype=bool)
    for v in range(1, len(tree)):
        p = tree.parent[v]
        keep[v] = keep[p] and not killed[p]
    return keep


def barrier_tree(tree: ColoredTree) -> ColoredTree:
    """B(T): remove all descendants of killed nodes, keep the killed nodes."""
    return tree.subtree(_barrier_mask(tree))


def clamp_labels(tree: ColoredTree) -> ColoredTree:
    """Apply x -> max(x, 0) to every label; with barrier_tree this gives B_+(T)."""
    return ColoredTree(tree.parent, np.maximum(tree.label, 0), tree.depth, tree.color.copy(),
                       tree.root_label, tree.child_ptr, tree.child_idx)


@dataclass
class ExplorationTrace:
    tau: int
    nodes: np.ndarray          # node turned green (kind 1) or red (kind 2) at step k+1
    kinds: np.ndarray
    final_colors: np.ndarray
    size_barrier: int
    n_killed: int
    labels: np.ndarray         # label of the recolored node at each step (clamped)
    initial_labels: np.ndarray
    snapshots: list[OrderBook] | None = None

    def events(self) -> Iterator[tuple[int, str, int]]:
        for k, (kind, lab) in enumerate(zip(self.kinds, self.labels), start=1):
            yield k, "green" if kind == 1 else "red", int(lab)

    def to_csv(self) -> str:
        rows = ["k,event,node_label"]
        rows += [f"{k},{ev},{lab}" for k, ev, lab in self.events()]
        return "\n".join(rows) + "\n"


def explore(tree: ColoredTree, record: bool = False, max_steps: int | None = None) -> ExplorationTrace:
    """Run the exploration from the initial coloring until it terminates.

    Termination: the active (largest-label, last-in-order) green node has a
    label below the root label, or no green node is left.  With ``record``
    the green-label measures Gamma_0, ..., Gamma_tau are attached, computed on
    clamped labels (the order book seen through the coupling).
    """
    nodes, kinds, steps, colors = K.explore_kernel(
        tree.child_ptr, tree.child_idx, tree.label, np.array([0], dtype=np.int64),
        np.int64(tree.root_label), K.NO_LIMIT if max_steps is None else int(max_steps))
    killed = K.killed_mask(tree.parent, tree.label, tree.root_label)
    keep = _barrier_mask(tree)
    clamped = np.maximum(tree.label, 0)
    trace = ExplorationTrace(
        tau=int(steps), nodes=nodes, kinds=kinds, final_colors=colors,
        size_barrier=int(keep.sum()), n_killed=int(killed.sum()),
        labels=clamped[nodes], initial_labels=clamped[[0]])
    if record:
        trace.snapshots = gamma_snapshots(trace)
    return trace


def gamma_snapshots(trace: ExplorationTrace) -> list[OrderBook]:
    counts: dict[int, int] = {}
    for lab in trace.initial_labels:
        counts[int(lab)] = counts.get(int(lab), 0) + 1
    out = [OrderBook(counts)]
    for kind, lab in zip(trace.kinds, trace.labels):
        lab = int(lab)
        counts[lab] = counts.get(lab, 0) + (1 if kind == 1 else -1)
        out.append(OrderBook(counts))
    return out


@dataclass
class ExcursionPath:
    """Book increments over one excursion as produced by the exploration.

    ``times[0] == 0`` is the opening add at the root label; the following
    ``tau`` entries are the exploration steps separated by Exp(2 lambda)
    holding times.
    """

    level: int
    times: np.ndarray
    kinds: np.ndarray          # 1 add, 2 remove
    labels: np.ndarray
    tau: int

    @property
    def jump_count(self) -> int:
        return self.tau + 1

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def height(self) -> int:
        return int(self.labels.max()) - self.level

    def deposited_below(self) -> int:
        return int(np.count_nonzero((self.kinds == 1) & (self.labels <= self.level)))

    def books(self) -> list[OrderBook]:
        counts: dict[int, int] = {}
        out = []
        for kind, lab in zip(self.kinds, self.labels):
            lab = int(lab)
            counts[lab] = counts.get(lab, 0) + (1 if kind == 1 else -1)
            out.append(OrderBook(counts))
        return out


def exploration_to_book_path(tree: ColoredTree, lam: float, rng: np.random.Generator) -> ExcursionPath:
    """Coupled excursion above ``root_label - 1``: exploration steps on the clock of S."""
    trace = explore(tree)
    holding = rng.exponential(1.0 / (2.0 * lam), size=trace.tau)
    times = np.concatenate([[0.0], np.cumsum(holding)])
    kinds = np.concatenate([[1], np.where(trace.kinds == 1, 1, 2)]).astype(np.int8)
    labels = np.concatenate([trace.initial_labels, trace.labels])
    return ExcursionPath(tree.root_label - 1, times, kinds, labels, trace.tau)


def contour(tree: ColoredTree) -> np.ndarray:
    """Depth-first contour: starts at 1 (root), one unit step per edge crossing, ends at 0."""
    out = [1]
    stack = [(0, 0)]
    while stack:
        v, j = stack.pop()
        kids = tree.children(v)
        if j < kids.shape[0]:
            stack.append((v, j + 1))
            stack.append((int(kids[j]), 0))
            out.append(int(tree.depth[kids[j]]))
        else:
            out.append(int(tree.depth[v]) - 1)
    return np.asarray(out, dtype=np.int64)


def visits(path: np.ndarray, m: int) -> int:
    return int(np.count_nonzero(path == m))


def hits(path: np.ndarray, u: int) -> bool:
    """Whether the contour reaches u before 0 (for u >= 1)."""
    zero = np.flatnonzero(path == 0)
    end = zero[0] if zero.shape[0] else path.shape[0]
    return bool(np.any(path[:end] >= u))


@dataclass
class Forest:
    """One tree per atom of an initial book; labels clamped recursively at 0."""

    tree: ColoredTree          # all trees in one arena
    roots: np.ndarray
    root_levels: np.ndarray


def sample_forest(initial: OrderBook, jumps: JumpDistribution, key,
                  node_cap: int = DEFAULT_NODE_CAP) -> Forest | Capped:
    """Independent tree T_a for each atom at level a, ordered by level.

    Child labels are ``max(parent + J, 0)`` so that exploring the forest
    reproduces the book from ``initial`` until it empties.
    """
    key = as_key(key)
    parents, labels, roots, levels = [], [], [], []
    offset = 0
    for i, a in enumerate(initial.levels()):
        p, l, _, capped = K.grow_tree(replica_key(key, i), int(a), jumps.cum, jumps.values,
                                      False, True, int(node_cap), K.NO_LIMIT)
        if capped:
            return Capped(offset + int(p.shape[0]), int(node_cap))
        parents.append(np.where(p >= 0, p + offset, -1))
        labels.append(l)
        roots.append(offset)
        levels.append(a)
        offset += p.shape[0]
    if not roots:
        empty = ColoredTree(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int64),
                            np.empty(0, np.int8), 0, np.zeros(1, np.int64), np.empty(0, np.int64))
        return Forest(empty, np.empty(0, np.int64), np.empty(0, np.int64))
    parent = np.concatenate(parents)
    label = np.concatenate(labels)
    n = parent.shape[0]
    kids = parent >= 0
    counts = np.bincount(parent[kids], minlength=n)
    child_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=child_ptr[1:])
    child_idx = np.flatnonzero(kids)[np.argsort(parent[kids], kind="stable")].astype(np.int64)
    depth = np.ones(n, dtype=np.int64)
    for v in range(n):
        if parent[v] >= 0:
            depth[v] = depth[parent[v]] + 1
    color = np.zeros(n, dtype=np.int8)
    roots = np.asarray(roots, dtype=np.int64)
    color[roots] = GREEN
    tree = ColoredTree(parent, label, depth, color, int(label[0]), child_ptr, child_idx)
    return Forest(tree, roots, np.asarray(levels, dtype=np.int64))


def explore_forest(forest: Forest, max_steps: int | None = None):
    """Explore until no green node is left; returns (kinds, labels) of book events."""
    t = forest.tree
    if forest.roots.shape[0] == 0:
        return np.empty(0, np.int8), np.empty(0, np.int64)
    nodes, kinds, steps, _ = K.explore_kernel(
        t.child_ptr, t.child_idx, t.label, forest.roots, K.NEG_LIMIT,
        K.NO_LIMIT if max_steps is None else int(max_steps))
    return kinds, t.label[nodes]


Condition = Literal["psi_star", "tau", "height"]


@dataclass
class ConditionedSample:
    tree: ColoredTree
    attempts: int
    accepted: int
    capped: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts


class BudgetExhausted(RuntimeError):
    def __init__(self, attempts: int, capped: int):
        super().__init__(f"no accepted tree after {attempts} attempts ({capped} capped)")
        self.attempts = attempts
        self.capped = capped


def condition_holds(condition: Condition, u: int, x: int, jumps: JumpDistribution, keys: np.ndarray,
                    node_cap: int = DEFAULT_NODE_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized check of ``psi_star(B) > u``, ``tau > u`` or ``h(T) > u`` per key.

    Returns (holds, capped).  Trees are scanned only as far as needed.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    out = np.empty((keys.shape[0], K.N_STATS), dtype=np.int64)
    z = np.empty((keys.shape[0], 0), dtype=np.int64)
    big, neg = K.NO_LIMIT, K.NEG_LIMIT
    if condition == "psi_star":
        K.scan_batch(keys, x, jumps.cum, jumps.values, big, neg, big, node_cap,
                     np.int64(u + 1), big, neg, big, out, z)
        return out[:, K.STOPPED] == 1, out[:, K.CAPPED] == 1
    if condition == "height":
        K.scan_batch(keys, x, jumps.cum, jumps.values, big, big, big, node_cap,
                     big, np.int64(u + 1), neg, big, out, z)
        return out[:, K.STOPPED] == 1, out[:, K.CAPPED] == 1
    if condition == "tau":
        # |B| >= u + 2 already forces tau >= |B| - 1 > u
        K.scan_batch(keys, x, jumps.cum, jumps.values, big, neg, big, np.int64(u + 2),
                     big, big, neg, big, out, z)
        full = out[:, K.CAPPED] == 0
        tau = 2 * out[:, K.N_B] - out[:, K.N_K] - 1
        return np.where(full, tau > u, True), np.zeros(keys.shape[0], dtype=bool)
    raise ValueError(f"unknown condition {condition!r}")


def sample_conditioned(condition: Condition, u: int, jumps: JumpDistribution, master_seed: int,
                       budget: int = 1_000_000, x: int = 1, node_cap: int = DEFAULT_NODE_CAP,
                       batch: int = 4096) -> ConditionedSample:
    """Rejection sampling of T_x given the condition; the first accepted tree is materialized."""
    attempts = 0
    capped_total = 0
    while attempts < budget:
        n = min(batch, budget - attempts)
        keys = replica_keys(master_seed, n, start=attempts)
        ok, capped = condition_holds(condition, u, x, jumps, keys, node_cap)
        capped_total += int(capped.sum())
        hit = np.flatnonzero(ok & ~capped)
        if hit.shape[0]:
            first = int(hit[0])
            attempts += first + 1
            tree = sample_tree(x, jumps, keys[first], node_cap)
            if isinstance(tree, Capped):
                capped_total += 1
                continue
            return ConditionedSample(tree, attempts, 1, capped_total)
        attempts += n
    raise BudgetExhausted(attempts, capped_total)


def acceptance_rate(condition: Condition, u: int, jumps: JumpDistribution, master_seed: int,
                    attempts: int, x: int = 1, node_cap: int = DEFAULT_NODE_CAP) -> tuple[float, int]:
    keys = replica_keys(master_seed, attempts)
    ok, capped = condition_holds(condition, u, x, jumps, keys, node_cap)
    return float(np.mean(ok & ~capped)), int(capped.sum())
