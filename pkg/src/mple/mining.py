"""Pairwise variant comparison and similarity-driven merge ordering."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from itertools import combinations

from .graph import ArtifactGraph, ArtifactNode
from .similarity import greedy_pairs, node_similarity


class CorrespondenceKind(enum.Enum):
    MATCH = "MATCH"
    LEFT_ONLY = "LEFT_ONLY"
    RIGHT_ONLY = "RIGHT_ONLY"


@dataclass(frozen=True)
class Correspondence:
    left: int | None
    right: int | None
    similarity: float
    kind: CorrespondenceKind


@dataclass
class MatchResult:
    correspondences: list
    overall_similarity: float

    def matches(self):
        return [c for c in self.correspondences if c.kind is CorrespondenceKind.MATCH]


def _one_sided(node: ArtifactNode, kind, out):
    for n in node.walk():
        if kind is CorrespondenceKind.LEFT_ONLY:
            out.append(Correspondence(n.id, None, 0.0, kind))
        else:
            out.append(Correspondence(None, n.id, 0.0, kind))


def compare_variants(a: ArtifactGraph, b: ArtifactGraph, theta: float = 0.75) -> MatchResult:
    """Top-down, containment-respecting matching of two variants.

    Roots always match. Below a matched pair, children are paired by greedy
    best-pair matching restricted to pairs with similarity >= ``theta``;
    every unmatched child contributes its whole subtree as one-sided.
    """
    out = []
    overall = node_similarity(a.root, b.root)
    stack = [(a.root, b.root, overall)]
    while stack:
        x, y, sim = stack.pop()
        out.append(Correspondence(x.id, y.id, sim, CorrespondenceKind.MATCH))
        pairs = greedy_pairs(x.children, y.children, cutoff=theta)
        used_l = {i for i, _, _ in pairs}
        used_r = {j for _, j, _ in pairs}
        for i, j, s in sorted(pairs, reverse=True):
            stack.append((x.children[i], y.children[j], s))
        for i, c in enumerate(x.children):
            if i not in used_l:
                _one_sided(c, CorrespondenceKind.LEFT_ONLY, out)
        for j, c in enumerate(y.children):
            if j not in used_r:
                _one_sided(c, CorrespondenceKind.RIGHT_ONLY, out)
    return MatchResult(out, overall)


def variant_similarity(a: ArtifactGraph, b: ArtifactGraph) -> float:
    return node_similarity(a.root, b.root)


@dataclass
class Taxonomy:
    merge_order: list
    similarity_matrix: dict = field(default_factory=dict)
    links: list = field(default_factory=list)

    def similarity(self, x, y):
        if x == y:
            return 1.0
        return self.similarity_matrix[(x, y) if x < y else (y, x)]

    def to_dict(self):
        return {
            "merge_order": list(self.merge_order),
            "similarity_matrix": [
                {"a": x, "b": y, "similarity": s}
                for (x, y), s in sorted(self.similarity_matrix.items())
            ],
            "links": [{"variant": v, "closest": p, "similarity": s} for v, p, s in self.links],
        }

    @classmethod
    def from_dict(cls, data):
        matrix = {(e["a"], e["b"]): e["similarity"] for e in data["similarity_matrix"]}
        links = [(e["variant"], e["closest"], e["similarity"]) for e in data["links"]]
        return cls(list(data["merge_order"]), matrix, links)


def order_from_matrix(ids, matrix) -> Taxonomy:
    """Agglomerative ordering from a symmetric similarity matrix.

    ``matrix`` maps sorted id pairs to similarity. Seeds with the most
    similar pair, then appends the unplaced variant closest to any placed
    one. Ties go to the lexicographically smaller id(s).
    """
    ids = sorted(ids)
    tax = Taxonomy([], dict(matrix), [])
    if len(ids) == 1:
        tax.merge_order = ids
        return tax
    best = min(combinations(ids, 2), key=lambda p: (-matrix[p], p))
    tax.merge_order = [best[0], best[1]]
    tax.links.append((best[1], best[0], matrix[best]))
    placed = set(best)
    while len(placed) < len(ids):
        candidates = []
        for v in ids:
            if v in placed:
                continue
            for p in tax.merge_order:
                s = tax.similarity(v, p)
                candidates.append((-s, v, p))
        neg, v, p = min(candidates)
        s = -neg
        tax.merge_order.append(v)
        tax.links.append((v, p, s))
        placed.add(v)
    return tax


def mine_taxonomy(variants) -> Taxonomy:
    """Similarity matrix over all variants and the merge order it implies."""
    by_id = {v.variant_id: v for v in variants}
    if len(by_id) != len(variants):
        raise ValueError("variant ids must be unique")
    matrix = {}
    for x, y in combinations(sorted(by_id), 2):
        matrix[(x, y)] = variant_similarity(by_id[x], by_id[y])
    return order_from_matrix(by_id, matrix)
