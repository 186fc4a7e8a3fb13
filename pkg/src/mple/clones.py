"""N-way clone detection over an artifact graph, at every configured granularity."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from rapidfuzz.distance import LCSseq
from rapidfuzz.process import cdist

from .graph import ArtifactGraph, NodeType, abstracted_hash, exact_hash
from .lexer import tokenize
from .similarity import LABEL_WEIGHT, STRUCTURE_WEIGHT, node_similarity

DEFAULT_GRANULARITIES = frozenset({NodeType.CLASS, NodeType.METHOD, NodeType.BLOCK})

_EPS = 1e-9


class CloneType(enum.Enum):
    TYPE1 = "TYPE1"
    TYPE2 = "TYPE2"
    TYPE3 = "TYPE3"


@dataclass(frozen=True)
class DetectionConfig:
    similarity_threshold: float = 0.75
    min_tokens: int = 8
    granularities: frozenset = DEFAULT_GRANULARITIES

    def __post_init__(self):
        if not 0 < self.similarity_threshold <= 1:
            raise ValueError("similarity_threshold must be in (0, 1]")
        if self.min_tokens < 1:
            raise ValueError("min_tokens must be >= 1")
        object.__setattr__(
            self, "granularities", frozenset(NodeType(g) if not isinstance(g, NodeType)
                                             else g for g in self.granularities)
        )

    def to_dict(self):
        return {
            "theta": self.similarity_threshold,
            "min_tokens": self.min_tokens,
            "granularities": sorted(g.name for g in self.granularities),
        }


@dataclass(frozen=True)
class CloneClass:
    granularity: NodeType
    clone_type: CloneType
    members: frozenset
    representative: int

    def to_dict(self):
        return {
            "granularity": self.granularity.name,
            "clone_type": self.clone_type.value,
            "members": sorted(self.members),
            "representative": self.representative,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            NodeType[data["granularity"]],
            CloneType(data["clone_type"]),
            frozenset(data["members"]),
            data["representative"],
        )


def classify_clone(clone: CloneClass, graph: ArtifactGraph) -> CloneType:
    nodes = [graph[m] for m in clone.members]
    if len({exact_hash(n) for n in nodes}) == 1:
        return CloneType.TYPE1
    if len({abstracted_hash(n) for n in nodes}) == 1:
        return CloneType.TYPE2
    return CloneType.TYPE3


class SimilarityBounds:
    """Vectorized upper bounds on ``node_similarity`` for all same-type node pairs.

    Leaf pairs are exact (LCS via rapidfuzz). For inner nodes the greedy
    matching sum is bounded by the smaller of the two row-max sums of the
    child bound matrices, capped by the child counts. Used only to skip
    exact similarity evaluations that cannot reach the threshold.
    """

    def __init__(self, graph: ArtifactGraph, chunk: int = 2048):
        self.chunk = chunk
        self.nodes = defaultdict(list)
        for n in graph.nodes():
            self.nodes[n.node_type].append(n)
        self.row = {t: {n.id: i for i, n in enumerate(ns)} for t, ns in self.nodes.items()}
        self._vocab: dict[str, int] = {}
        self._U: dict[NodeType, np.ndarray] = {}

    def _encode(self, seq):
        vocab = self._vocab
        return [vocab.setdefault(t, len(vocab)) for t in seq]

    def _leaf_seq(self, node):
        if node.node_type is NodeType.INSTANCE_REF:
            return (node.label,) + node.tokens
        return node.tokens

    def _pair_sim(self, seqs_a, seqs_b):
        lens_a = np.array([len(s) for s in seqs_a], dtype=np.float64)
        lens_b = np.array([len(s) for s in seqs_b], dtype=np.float64)
        lcs = cdist(seqs_a, seqs_b, scorer=LCSseq.similarity, dtype=np.int32, workers=-1)
        denom = lens_a[:, None] + lens_b[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            sim = np.where(denom == 0, 1.0, 2.0 * lcs / denom)
        return sim

    def matrix(self, t: NodeType) -> np.ndarray:
        if t not in self._U:
            self._U[t] = self._inner(t)
        return self._U[t]

    def _inner(self, t):
        parents = self.nodes[t]
        n = len(parents)
        label_seqs = [self._encode(tokenize(p.label)) for p in parents]
        ls = self._pair_sim(label_seqs, label_seqs)
        kcount = np.array([len(p.children) for p in parents], dtype=np.float64)
        child_types = {c.node_type for p in parents for c in p.children}
        recursive = t in child_types
        passes = 2 if recursive else 1
        u_self = None
        for _ in range(passes):
            total = np.zeros((n, n))
            for ct in child_types:
                if ct is t:
                    total += self._child_part(parents, ct, u_self, crude=u_self is None)
                else:
                    total += self._child_part(parents, ct, None)
            ksum = kcount[:, None] + kcount[None, :]
            with np.errstate(invalid="ignore", divide="ignore"):
                cs = np.where(ksum == 0, 1.0, 2.0 * total / ksum)
            u_self = np.minimum(LABEL_WEIGHT * ls + STRUCTURE_WEIGHT * cs, 1.0)
        return u_self

    def _child_part(self, parents, ct, u_self, crude=False):
        n = len(parents)
        groups = [[c for c in p.children if c.node_type is ct] for p in parents]
        counts = np.array([len(g) for g in groups])
        nonempty = np.flatnonzero(counts)
        out = np.zeros((n, n))
        if len(nonempty) == 0:
            return out
        cnt = counts[nonempty].astype(np.float64)
        starts = np.concatenate(([0], np.cumsum(counts[nonempty])[:-1]))
        flat = [c for i in nonempty for c in groups[i]]
        m = len(flat)
        if crude:
            part = np.minimum.outer(cnt, cnt)
        else:
            rowmax = np.empty((m, len(nonempty)))
            if ct in (NodeType.STATEMENT, NodeType.INSTANCE_REF):
                seqs = [self._encode(self._leaf_seq(c)) for c in flat]
                for r0 in range(0, m, self.chunk):
                    sim = self._pair_sim(seqs[r0:r0 + self.chunk], seqs)
                    rowmax[r0:r0 + self.chunk] = np.maximum.reduceat(sim, starts, axis=1)
            else:
                u = u_self if u_self is not None else self.matrix(ct)
                rows = np.array([self.row[ct][c.id] for c in flat])
                for r0 in range(0, m, self.chunk):
                    sub = u[np.ix_(rows[r0:r0 + self.chunk], rows)]
                    rowmax[r0:r0 + self.chunk] = np.maximum.reduceat(sub, starts, axis=1)
            r = np.add.reduceat(rowmax, starts, axis=0)
            part = np.minimum(np.minimum(r, r.T), np.minimum.outer(cnt, cnt))
        out[np.ix_(nonempty, nonempty)] = part
        return out


def _candidates(graph, config):
    by_gran = defaultdict(list)
    for node in graph.nodes():
        if node.node_type in config.granularities and node.token_mass() >= config.min_tokens:
            by_gran[node.node_type].append(node)
    return by_gran


def _form_classes(cands, theta, bounds_for, order):
    """Hash-ordered class formation for one granularity.

    Returns a list of member lists; the first member of each is the
    representative.
    """
    def sort_key(n):
        return (exact_hash(n), order[n.id])

    cands = sorted(cands, key=sort_key)
    classes = []
    exact_groups = defaultdict(list)
    for n in cands:
        exact_groups[exact_hash(n)].append(n)
    rest = []
    for h in sorted(exact_groups):
        group = exact_groups[h]
        if len(group) >= 2:
            classes.append(group)
        else:
            rest.append(group[0])
    abs_groups = defaultdict(list)
    for n in rest:
        abs_groups[abstracted_hash(n)].append(n)
    remaining = []
    for group in sorted(abs_groups.values(), key=lambda g: sort_key(g[0])):
        if len(group) >= 2:
            classes.append(group)
        else:
            remaining.append(group[0])
    if not remaining:
        return classes
    fixed = len(classes)
    bounds = bounds_for(remaining[0].node_type) if (fixed + len(remaining)) > 24 else None
    reps = [c[0] for c in classes]
    for n in sorted(remaining, key=sort_key):
        target = None
        if bounds is not None:
            u, row = bounds
            rep_rows = np.array([row[r.id] for r in reps], dtype=np.int64)
            hopeful = np.flatnonzero(u[row[n.id], rep_rows] + _EPS >= theta) if len(reps) else []
            probe = hopeful
        else:
            probe = range(len(reps))
        for k in probe:
            if node_similarity(n, reps[k]) + _EPS >= theta:
                target = k
                break
        if target is None:
            classes.append([n])
            reps.append(n)
        else:
            classes[target].append(n)
    return [c for c in classes if len(c) >= 2]


def detect_clones(graph: ArtifactGraph, config: DetectionConfig | None = None) -> list[CloneClass]:
    """Detect clone classes at every configured granularity.

    Exact duplicates group first, then candidates equal after identifier and
    literal abstraction, then near-misses join the first class whose
    representative is at least ``similarity_threshold`` similar. Members nested
    inside a member of another class are dropped in favour of the coarser
    clone, and classes left with fewer than two members disappear.
    """
    config = config or DetectionConfig()
    theta = config.similarity_threshold
    order = {n.id: i for i, n in enumerate(graph.nodes())}
    by_gran = _candidates(graph, config)
    bounds = None

    def bounds_for(t):
        nonlocal bounds
        if bounds is None:
            bounds = SimilarityBounds(graph)
        return bounds.matrix(t), bounds.row[t]

    raw = []
    for gran in sorted(by_gran, key=lambda g: g.rank):
        for members in _form_classes(by_gran[gran], theta, bounds_for, order):
            raw.append((gran, members))
    return _prune(graph, raw, order)


def _prune(graph, raw, order):
    depth_cache = {}

    def depth(nid):
        if nid not in depth_cache:
            depth_cache[nid] = graph.depth(nid)
        return depth_cache[nid]

    def key(item):
        gran, members = item
        return (gran.rank, min(depth(m.id) for m in members), exact_hash(members[0]),
                order[members[0].id])

    claimed: set[int] = set()
    claimed_ancestors: set[int] = set()
    result = []
    for gran, members in sorted(raw, key=key):
        ids = {m.id for m in members}
        kept = []
        for m in members:
            anc = set(graph.ancestors(m.id))
            if anc & claimed or m.id in claimed or m.id in claimed_ancestors or anc & ids:
                continue
            kept.append(m)
        if len(kept) < 2:
            continue
        for m in kept:
            claimed.add(m.id)
            claimed_ancestors.update(graph.ancestors(m.id))
        rep = min(kept, key=lambda m: (exact_hash(m), order[m.id]))
        clone = CloneClass(gran, CloneType.TYPE1, frozenset(m.id for m in kept), rep.id)
        result.append(CloneClass(gran, classify_clone(clone, graph), clone.members, rep.id))
    return result


def clone_report(graph: ArtifactGraph, classes, config: DetectionConfig) -> dict:
    return {
        "variant_id": graph.variant_id,
        "config": config.to_dict(),
        "classes": [c.to_dict() for c in classes],
    }
