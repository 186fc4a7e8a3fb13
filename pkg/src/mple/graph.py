"""Generic artifact graph: typed ordered trees, canonical hashing, interchange format."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator

from .errors import GraphParseError, StructuralError
from .lexer import is_identifier, is_literal, tokenize


class NodeType(enum.Enum):
    SYSTEM = 0
    PACKAGE = 1
    CLASS = 2
    METHOD = 3
    BLOCK = 4
    STATEMENT = 5
    INSTANCE_REF = 6

    @property
    def rank(self) -> int:
        """Granularity rank, coarse (0) to fine."""
        return self.value


_CONTAINERS = frozenset(
    {NodeType.SYSTEM, NodeType.PACKAGE, NodeType.CLASS, NodeType.METHOD, NodeType.BLOCK}
)
ALLOWED_CHILDREN = {
    NodeType.SYSTEM: {NodeType.PACKAGE, NodeType.CLASS},
    NodeType.PACKAGE: {NodeType.PACKAGE, NodeType.CLASS},
    NodeType.CLASS: {NodeType.METHOD},
    NodeType.METHOD: {NodeType.BLOCK, NodeType.STATEMENT},
    NodeType.BLOCK: {NodeType.BLOCK, NodeType.STATEMENT},
    NodeType.STATEMENT: set(),
    NodeType.INSTANCE_REF: set(),
}
for _t in _CONTAINERS:
    ALLOWED_CHILDREN[_t].add(NodeType.INSTANCE_REF)

LEAF_TYPES = frozenset({NodeType.STATEMENT, NodeType.INSTANCE_REF})


class Abstraction(enum.Enum):
    EXACT = "EXACT"
    ABSTRACTED = "ABSTRACTED"


@dataclass(frozen=True)
class CanonicalHash:
    value: str
    abstraction: Abstraction


@dataclass(eq=False)
class ArtifactNode:
    id: int
    node_type: NodeType
    label: str = ""
    tokens: tuple = ()
    children: list = field(default_factory=list)
    attributes: dict = field(default_factory=dict)
    _hashes: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.tokens = tuple(self.tokens)

    def walk(self) -> Iterator["ArtifactNode"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def size(self) -> int:
        return sum(1 for _ in self.walk())

    def token_mass(self) -> int:
        cached = self._hashes.get("mass")
        if cached is None:
            cached = len(self.tokens) + sum(c.token_mass() for c in self.children)
            self._hashes["mass"] = cached
        return cached

    def key(self) -> tuple:
        """The node's own content, ignoring its children."""
        return (self.node_type, self.label, self.tokens)


def invalidate(node: ArtifactNode) -> None:
    """Drop cached hashes of ``node`` and its whole subtree after an edit."""
    for n in node.walk():
        n._hashes.clear()


def copy_tree(node: ArtifactNode, start_id: int = 0) -> ArtifactNode:
    """Deep copy with fresh caches and pre-order ids starting at ``start_id``."""
    counter = [start_id]

    def rec(n):
        new = ArtifactNode(counter[0], n.node_type, n.label, n.tokens, [], dict(n.attributes))
        counter[0] += 1
        new.children = [rec(c) for c in n.children]
        return new

    return rec(node)


class ArtifactGraph:
    """A parsed variant: a rooted ordered tree plus an id index."""

    def __init__(self, variant_id: str, root: ArtifactNode):
        if root.node_type is not NodeType.SYSTEM:
            raise StructuralError(f"root must be SYSTEM, got {root.node_type.name}")
        self.variant_id = variant_id
        self.root = root
        self.node_index: dict[int, ArtifactNode] = {}
        for node in root.walk():
            if node.id in self.node_index:
                raise StructuralError(f"duplicate node id {node.id}")
            self.node_index[node.id] = node
        self._parents = None

    @classmethod
    def renumbered(cls, variant_id: str, root: ArtifactNode) -> "ArtifactGraph":
        return cls(variant_id, copy_tree(root))

    def __len__(self):
        return len(self.node_index)

    def __getitem__(self, node_id):
        return self.node_index[node_id]

    def nodes(self):
        return self.root.walk()

    def parents(self) -> dict[int, int | None]:
        if self._parents is None:
            parents = {self.root.id: None}
            for node in self.root.walk():
                for c in node.children:
                    parents[c.id] = node.id
            self._parents = parents
        return self._parents

    def ancestors(self, node_id):
        parents = self.parents()
        p = parents[node_id]
        while p is not None:
            yield p
            p = parents[p]

    def depth(self, node_id) -> int:
        return sum(1 for _ in self.ancestors(node_id))

    def content_equal(self, other: "ArtifactGraph") -> bool:
        return exact_hash(self.root) == exact_hash(other.root)


def check_structure(root: ArtifactNode, path="") -> None:
    """Raise StructuralError on the first nesting or field violation."""
    stack = [(root, path or root.node_type.name)]
    while stack:
        node, where = stack.pop()
        t = node.node_type
        if node.tokens and t not in LEAF_TYPES:
            raise StructuralError(f"{where}: tokens only allowed on STATEMENT/INSTANCE_REF")
        if t in (NodeType.CLASS, NodeType.METHOD) and not node.label:
            raise StructuralError(f"{where}: {t.name} requires a label")
        for i, c in enumerate(node.children):
            child_where = f"{where}/{i}:{c.node_type.name}" + (f"({c.label})" if c.label else "")
            if c.node_type not in ALLOWED_CHILDREN[t]:
                raise StructuralError(
                    f"{child_where}: {c.node_type.name} not allowed inside {t.name}"
                )
            stack.append((c, child_where))


# ---------------------------------------------------------------- hashing

def _enc(parts) -> str:
    return "".join(f"{len(p)}:{p}" for p in parts)


def _digest(text: str) -> str:
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()


def exact_hash(node: ArtifactNode) -> str:
    h = node._hashes.get("exact")
    if h is None:
        # iterative post-order so deep trees do not hit the recursion limit
        stack = [(node, False)]
        while stack:
            n, ready = stack.pop()
            if "exact" in n._hashes:
                continue
            if not ready:
                stack.append((n, True))
                stack.extend((c, False) for c in n.children if "exact" not in c._hashes)
                continue
            body = "|".join(
                (
                    n.node_type.name,
                    _enc([n.label]),
                    _enc(n.tokens),
                    ",".join(c._hashes["exact"] for c in n.children),
                )
            )
            n._hashes["exact"] = _digest(body)
        h = node._hashes["exact"]
    return h


def abstract_tokens(tokens, mapping) -> list[str]:
    """Identifiers to positional placeholders (shared ``mapping``), literals to LIT."""
    out = []
    for t in tokens:
        if is_literal(t):
            out.append("LIT")
        elif is_identifier(t):
            ph = mapping.get(t)
            if ph is None:
                ph = mapping[t] = f"ID{len(mapping) + 1}"
            out.append(ph)
        else:
            out.append(t)
    return out


def abstracted_hash(node: ArtifactNode) -> str:
    h = node._hashes.get("abstract")
    if h is None:
        mapping: dict[str, str] = {}
        parts = []
        for n in node.walk():
            parts.append(n.node_type.name)
            parts.append(str(len(n.children)))
            parts.append(_enc(abstract_tokens(tokenize(n.label), mapping)))
            parts.append(_enc(abstract_tokens(n.tokens, mapping)))
        h = node._hashes["abstract"] = _digest("|".join(parts))
    return h


def canonical_hash(node: ArtifactNode, abstraction=Abstraction.EXACT) -> CanonicalHash:
    abstraction = Abstraction(abstraction)
    if abstraction is Abstraction.EXACT:
        return CanonicalHash(exact_hash(node), abstraction)
    return CanonicalHash(abstracted_hash(node), abstraction)


# ---------------------------------------------------------- interchange

def node_to_dict(node: ArtifactNode) -> dict:
    return {
        "type": node.node_type.name,
        "label": node.label,
        "tokens": list(node.tokens),
        "attributes": dict(sorted(node.attributes.items())),
        "children": [node_to_dict(c) for c in node.children],
    }


def graph_to_dict(graph: ArtifactGraph) -> dict:
    return {"variant_id": graph.variant_id, "root": node_to_dict(graph.root)}


def serialize_graph(graph: ArtifactGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def node_from_dict(data, counter=None, where="root") -> ArtifactNode:
    if counter is None:
        counter = [0]
    if not isinstance(data, dict):
        raise StructuralError(f"{where}: node must be an object")
    try:
        node_type = NodeType[data["type"]]
    except KeyError:
        raise StructuralError(f"{where}: missing or unknown node type {data.get('type')!r}")
    label = data.get("label", "")
    tokens = data.get("tokens", [])
    attributes = data.get("attributes", {})
    children = data.get("children", [])
    if not isinstance(label, str) or not isinstance(tokens, list) or not isinstance(children, list):
        raise StructuralError(f"{where}: malformed node fields")
    if not all(isinstance(t, str) for t in tokens):
        raise StructuralError(f"{where}: tokens must be strings")
    if not isinstance(attributes, dict):
        raise StructuralError(f"{where}: attributes must be an object")
    node = ArtifactNode(counter[0], node_type, label, tuple(tokens), [],
                        {str(k): str(v) for k, v in attributes.items()})
    counter[0] += 1
    for i, c in enumerate(children):
        node.children.append(node_from_dict(c, counter, f"{where}/{i}"))
    return node


def graph_from_dict(data) -> ArtifactGraph:
    if not isinstance(data, dict) or "root" not in data:
        raise StructuralError("graph document needs 'variant_id' and 'root'")
    root = node_from_dict(data["root"])
    check_structure(root)
    return ArtifactGraph(str(data.get("variant_id", "")), root)


def parse_generic_tree(text: str) -> ArtifactGraph:
    """Read an interchange document; ids are assigned in pre-order."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphParseError(exc.msg, exc.lineno, exc.colno) from None
    return graph_from_dict(data)
