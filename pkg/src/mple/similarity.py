"""Token- and tree-level similarity used by detection, mining and extraction."""

from __future__ import annotations

import hashlib
import heapq
from functools import lru_cache

from rapidfuzz.distance import LCSseq

from .graph import ArtifactNode, NodeType, exact_hash
from .lexer import tokenize

LABEL_WEIGHT = 0.3
STRUCTURE_WEIGHT = 0.7

_CACHE: dict[tuple[str, str], float] = {}
_CACHE_LIMIT = 2_000_000


def clear_cache():
    _CACHE.clear()


def lcs_length(a, b) -> int:
    """Length of a longest common subsequence of two token sequences."""
    if not a or not b:
        return 0
    return LCSseq.similarity(a, b)


def token_similarity(a, b) -> float:
    """Dice-normalized LCS: 2*|LCS| / (|a| + |b|); 1.0 when both are empty."""
    if not a and not b:
        return 1.0
    return 2.0 * lcs_length(a, b) / (len(a) + len(b))


def label_similarity(a: str, b: str) -> float:
    if a == b:
        return 1.0
    return token_similarity(_label_tokens(a), _label_tokens(b))


@lru_cache(maxsize=65536)
def _label_tokens(label: str) -> tuple:
    return tokenize(label)


def _leaf_tokens(node):
    if node.node_type is NodeType.INSTANCE_REF:
        return (node.label,) + node.tokens
    return node.tokens


def _cheap_bound(a: ArtifactNode, b: ArtifactNode) -> float:
    if a.node_type in (NodeType.STATEMENT, NodeType.INSTANCE_REF):
        la, lb = len(_leaf_tokens(a)), len(_leaf_tokens(b))
        return 1.0 if la + lb == 0 else 2.0 * min(la, lb) / (la + lb)
    ka, kb = len(a.children), len(b.children)
    cs = 1.0 if ka + kb == 0 else 2.0 * min(ka, kb) / (ka + kb)
    return LABEL_WEIGHT * label_similarity(a.label, b.label) + STRUCTURE_WEIGHT * cs


def _bag_hash(node: ArtifactNode) -> str:
    """Hash of what ``node_similarity`` sees, ignoring child order.

    Two nodes have similarity 1.0 exactly when their bag hashes agree.
    """
    h = node._hashes.get("bag")
    if h is None:
        if node.node_type in (NodeType.STATEMENT, NodeType.INSTANCE_REF):
            body = (node.node_type.name, _leaf_tokens(node))
        else:
            kids = sorted(_bag_hash(c) for c in node.children)
            body = (node.node_type.name, _label_tokens(node.label), kids)
        h = hashlib.blake2b(repr(body).encode("utf-8"), digest_size=16).hexdigest()
        node._hashes["bag"] = h
    return h


def node_similarity(a: ArtifactNode, b: ArtifactNode) -> float:
    """Recursive similarity in [0, 1]; 0 for differing node types.

    Leaves compare by ``token_similarity``. Inner nodes mix label similarity
    (weight 0.3) with child similarity (0.7), where children are paired by
    greedy best-pair matching.
    """
    if a.node_type is not b.node_type:
        return 0.0
    ha, hb = exact_hash(a), exact_hash(b)
    if ha == hb:
        return 1.0
    key = (ha, hb) if ha < hb else (hb, ha)
    cached = _CACHE.get(key)
    if cached is not None:
        return cached
    if a.node_type in (NodeType.STATEMENT, NodeType.INSTANCE_REF):
        sim = token_similarity(_leaf_tokens(a), _leaf_tokens(b))
    else:
        ls = label_similarity(a.label, b.label)
        ka, kb = len(a.children), len(b.children)
        if ka + kb == 0:
            cs = 1.0
        else:
            total = sum(s for _, _, s in greedy_pairs(a.children, b.children))
            cs = 2.0 * total / (ka + kb)
        sim = LABEL_WEIGHT * ls + STRUCTURE_WEIGHT * cs
    if len(_CACHE) >= _CACHE_LIMIT:
        _CACHE.clear()
    _CACHE[key] = sim
    return sim


def greedy_pairs(left, right, cutoff=None):
    """Greedy best-pair matching of two child lists.

    Pairs are accepted in descending similarity, ties broken by the sorted
    EXACT-hash pair and then by position. Similarities are computed lazily:
    a pair is only evaluated once it reaches the top of the queue with both
    sides still free, using a cheap upper bound until then. With ``cutoff``,
    only pairs with similarity >= cutoff are accepted.

    Returns a list of ``(i, j, similarity)`` in acceptance order.
    """
    lh = [exact_hash(n) for n in left]
    rh = [exact_hash(n) for n in right]
    used_l, used_r = set(), set()
    result = []

    # similarity-1.0 pairs come first and need no evaluation
    groups = {}
    for j, b in enumerate(right):
        groups.setdefault(_bag_hash(b), []).append(j)
    perfect = []
    for i, a in enumerate(left):
        for j in groups.get(_bag_hash(a), ()):
            lo, hi = (lh[i], rh[j]) if lh[i] <= rh[j] else (rh[j], lh[i])
            perfect.append((lo, hi, i, j))
    perfect.sort()
    for _, _, i, j in perfect:
        if i in used_l or j in used_r:
            continue
        used_l.add(i)
        used_r.add(j)
        result.append((i, j, 1.0))

    heap = []
    for i, a in enumerate(left):
        if i in used_l:
            continue
        for j, b in enumerate(right):
            if j in used_r or a.node_type is not b.node_type:
                continue
            lo, hi = (lh[i], rh[j]) if lh[i] <= rh[j] else (rh[j], lh[i])
            heap.append((-_cheap_bound(a, b), lo, hi, i, j, False))
    heapq.heapify(heap)
    limit = min(len(left), len(right))
    while heap and len(result) < limit:
        neg, lo, hi, i, j, evaluated = heapq.heappop(heap)
        if i in used_l or j in used_r:
            continue
        if cutoff is not None and -neg < cutoff:
            break
        if not evaluated:
            s = node_similarity(left[i], right[j])
            heapq.heappush(heap, (-s, lo, hi, i, j, True))
            continue
        used_l.add(i)
        used_r.add(j)
        result.append((i, j, -neg))
    return result
