"""Refactoring clone classes into configurable components and expanding them back."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .clones import CloneClass
from .errors import BindingError, ExtractionError, PreconditionError
from .graph import (
    ArtifactGraph,
    ArtifactNode,
    NodeType,
    copy_tree,
    exact_hash,
)
from .lexer import is_parameterizable, tokenize
from .similarity import node_similarity

_LEAVES = (NodeType.STATEMENT, NodeType.INSTANCE_REF)


def slot_marker(name: str) -> str:
    return "${" + name + "}"


def _slot_name(token: str):
    if token.startswith("${") and token.endswith("}"):
        return token[2:-1]
    return None


@dataclass
class Binding:
    values: dict = field(default_factory=dict)
    included: dict = field(default_factory=dict)

    def to_tokens(self) -> tuple:
        out = [f"{k}={v}" for k, v in self.values.items()]
        out += [f"?{k}={int(v)}" for k, v in sorted(self.included.items())]
        return tuple(out)

    @classmethod
    def from_tokens(cls, tokens) -> "Binding":
        values, included = {}, {}
        for t in tokens:
            k, _, v = t.partition("=")
            if k.startswith("?"):
                included[int(k[1:])] = v == "1"
            else:
                values[k] = v
        return cls(values, included)

    def to_dict(self):
        return {"values": dict(self.values), "included": {str(k): v for k, v in self.included.items()}}

    @classmethod
    def from_dict(cls, data):
        return cls(dict(data.get("values", {})),
                   {int(k): bool(v) for k, v in data.get("included", {}).items()})


@dataclass
class ConfigurableComponent:
    component_id: str
    template: ArtifactNode
    parameters: list
    optional_nodes: frozenset

    def to_dict(self):
        from .graph import node_to_dict

        return {
            "component_id": self.component_id,
            "template": node_to_dict(self.template),
            "parameters": list(self.parameters),
            "optional_nodes": sorted(self.optional_nodes),
        }

    @classmethod
    def from_dict(cls, data):
        from .graph import node_from_dict

        return cls(
            data["component_id"],
            node_from_dict(data["template"]),
            list(data["parameters"]),
            frozenset(data["optional_nodes"]),
        )


@dataclass
class ComponentInstance:
    instance_of: str
    binding: Binding
    original_location: int


# ---------------------------------------------------------------- union tree

class _Union:
    __slots__ = ("node_type", "present", "children")

    def __init__(self, node_type):
        self.node_type = node_type
        self.present: dict[int, ArtifactNode] = {}
        self.children: list[_Union] = []

    def ref(self) -> ArtifactNode:
        return self.present[min(self.present)]


def _fresh_union(node, j):
    u = _Union(node.node_type)
    u.present[j] = node
    u.children = [_fresh_union(c, j) for c in node.children]
    return u


def _leaf_compatible(a: ArtifactNode, b: ArtifactNode) -> bool:
    if a.node_type is NodeType.INSTANCE_REF:
        return a.label == b.label and a.tokens == b.tokens
    if len(a.tokens) != len(b.tokens):
        return False
    return all(
        x == y or (is_parameterizable(x) and is_parameterizable(y))
        for x, y in zip(a.tokens, b.tokens)
    )


def _weight(u: _Union, node: ArtifactNode):
    if u.node_type is not node.node_type:
        return None
    ref = u.ref()
    if u.node_type in _LEAVES and not _leaf_compatible(ref, node):
        return None
    sim = node_similarity(ref, node)
    return sim if sim > 0 else None


def _align(union_children, member_children):
    """Order-preserving maximum-weight alignment; returns merge operations."""
    n, m = len(union_children), len(member_children)
    w = [[_weight(u, c) for c in member_children] for u in union_children]
    dp = [[0.0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best = max(dp[i - 1][j], dp[i][j - 1])
            wij = w[i - 1][j - 1]
            if wij is not None and dp[i - 1][j - 1] + wij > best:
                best = dp[i - 1][j - 1] + wij
            dp[i][j] = best
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        wij = w[i - 1][j - 1] if i > 0 and j > 0 else None
        if wij is not None and dp[i][j] == dp[i - 1][j - 1] + wij:
            ops.append(("match", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif j > 0 and (i == 0 or dp[i][j] == dp[i][j - 1]):
            ops.append(("member", None, j - 1))
            j -= 1
        else:
            ops.append(("union", i - 1, None))
            i -= 1
    ops.reverse()
    return ops


def _merge(u: _Union, node: ArtifactNode, j: int) -> None:
    u.present[j] = node
    merged = []
    for op, ui, mj in _align(u.children, node.children):
        if op == "match":
            child = u.children[ui]
            _merge(child, node.children[mj], j)
            merged.append(child)
        elif op == "union":
            merged.append(u.children[ui])
        else:
            merged.append(_fresh_union(node.children[mj], j))
    u.children = merged


# ------------------------------------------------------------ template build

class _SlotTable:
    def __init__(self, k):
        self.k = k
        self.names: dict[tuple, str] = {}

    def slot(self, values: tuple) -> str:
        name = self.names.get(values)
        if name is None:
            name = self.names[values] = f"P{len(self.names) + 1}"
        return name


def _label_template(u: _Union, k: int, slots: _SlotTable) -> str:
    labels = [u.present[j].label if j in u.present else None for j in range(k)]
    distinct = {lab for lab in labels if lab is not None}
    if len(distinct) == 1:
        return distinct.pop()
    toks = {j: tokenize(lab) for j, lab in enumerate(labels) if lab is not None}
    ok = all(" ".join(toks[j]) == labels[j] for j in toks)
    lengths = {len(t) for t in toks.values()}
    if ok and len(lengths) == 1:
        out = []
        for pos in range(lengths.pop()):
            vals = tuple(toks[j][pos] if j in toks else None for j in range(k))
            present = {v for v in vals if v is not None}
            if len(present) == 1:
                out.append(present.pop())
            elif all(is_parameterizable(v) for v in present):
                out.append(slot_marker(slots.slot(vals)))
            else:
                break
        else:
            return " ".join(out)
    return slot_marker(slots.slot(tuple(labels)))


def _build_template(root: _Union, k: int):
    slots = _SlotTable(k)
    optional: dict[int, frozenset] = {}
    counter = [0]
    everyone = frozenset(range(k))

    def rec(u: _Union) -> ArtifactNode:
        nid = counter[0]
        counter[0] += 1
        label = _label_template(u, k, slots)
        tokens = ()
        if u.node_type in _LEAVES:
            ref = u.ref()
            toks = []
            for pos in range(len(ref.tokens)):
                vals = tuple(u.present[j].tokens[pos] if j in u.present else None for j in range(k))
                present = {v for v in vals if v is not None}
                toks.append(present.pop() if len(present) == 1 else slot_marker(slots.slot(vals)))
            tokens = tuple(toks)
        node = ArtifactNode(nid, u.node_type, label, tokens)
        if frozenset(u.present) != everyone:
            optional[nid] = frozenset(u.present)
        node.children = [rec(c) for c in u.children]
        return node

    template = rec(root)
    return template, slots, optional


def _component_id(template, parameters, optional_ids) -> str:
    text = "|".join([exact_hash(template), ",".join(parameters),
                     ",".join(map(str, sorted(optional_ids)))])
    return "K" + hashlib.blake2b(text.encode(), digest_size=6).hexdigest()


def extract_component(clone: CloneClass, graph: ArtifactGraph):
    """Turn a clone class into a configurable component plus one instance per member.

    The template is the union of all members aligned against the
    representative. Token positions where members disagree become parameter
    slots (one slot per distinct value pattern). Nodes missing from some
    members become optional.
    """
    members = sorted((graph[m] for m in clone.members), key=exact_hash)
    rep = graph[clone.representative]
    members.remove(rep)
    members.insert(0, rep)
    k = len(members)
    union = _fresh_union(rep, 0)
    for j in range(1, k):
        _merge(union, members[j], j)
    template, slots, optional = _build_template(union, k)
    parameters = list(slots.names.values())
    cid = _component_id(template, parameters, optional)
    component = ConfigurableComponent(cid, template, parameters, frozenset(optional))
    instances = []
    for j, member in enumerate(members):
        values = {}
        for vals, name in slots.names.items():
            v = vals[j]
            if v is None:
                v = next(x for x in vals if x is not None)
            values[name] = v
        included = {nid: j in present for nid, present in optional.items()}
        binding = Binding(values, included)
        if exact_hash(expand_instance(component, binding)) != exact_hash(member):
            raise ExtractionError(f"member {member.id} is not reproducible", member.id)
        instances.append(ComponentInstance(cid, binding, member.id))
    instances.sort(key=lambda inst: inst.original_location)
    return component, instances


def expand_instance(component: ConfigurableComponent, binding: Binding, start_id: int = 0):
    """Instantiate the template: substitute slots, keep or drop optional nodes."""
    missing = [p for p in component.parameters if p not in binding.values]
    missing_opt = [o for o in component.optional_nodes if o not in binding.included]
    if missing or missing_opt:
        raise BindingError(
            f"incomplete binding for {component.component_id}: "
            f"missing slots {missing} optional nodes {sorted(missing_opt)}"
        )
    params = set(component.parameters)
    counter = [start_id]

    def subst(tok):
        name = _slot_name(tok)
        return binding.values[name] if name in params else tok

    def rec(t: ArtifactNode):
        label = t.label
        if "${" in label:
            label = " ".join(subst(p) for p in label.split(" "))
        node = ArtifactNode(counter[0], t.node_type, label, tuple(subst(x) for x in t.tokens))
        counter[0] += 1
        for c in t.children:
            if c.id in component.optional_nodes and not binding.included[c.id]:
                continue
            node.children.append(rec(c))
        return node

    return rec(component.template)


# ------------------------------------------------------------- refactoring

def make_instance_ref(instance: ComponentInstance, node_id: int = 0) -> ArtifactNode:
    return ArtifactNode(
        node_id,
        NodeType.INSTANCE_REF,
        instance.instance_of,
        instance.binding.to_tokens(),
        [],
        {
            "component": instance.instance_of,
            "binding": json.dumps(instance.binding.to_dict(), sort_keys=True),
            "original_location": str(instance.original_location),
        },
    )


def refactor_graph(graph: ArtifactGraph, classes):
    """Replace every clone-class member with an INSTANCE_REF to its component.

    Returns ``(refactored_graph, components)``; the new graph is renumbered in
    pre-order and each INSTANCE_REF records the replaced node id.
    """
    seen: set[int] = set()
    for clone in classes:
        for m in clone.members:
            if m in seen:
                raise PreconditionError(f"node {m} belongs to more than one clone class")
            seen.add(m)
    for m in seen:
        overlap = seen.intersection(graph.ancestors(m))
        if overlap:
            raise PreconditionError(f"member {m} is nested inside member {min(overlap)}")
    replacement = {}
    components = {}
    for clone in classes:
        try:
            component, instances = extract_component(clone, graph)
        except ExtractionError:
            continue
        components[component.component_id] = component
        for inst in instances:
            replacement[inst.original_location] = inst

    def rec(node):
        if node.id in replacement:
            return make_instance_ref(replacement[node.id])
        new = ArtifactNode(0, node.node_type, node.label, node.tokens, [], dict(node.attributes))
        new.children = [rec(c) for c in node.children]
        return new

    new_graph = ArtifactGraph(graph.variant_id, copy_tree(rec(graph.root)))
    return new_graph, [components[c] for c in sorted(components)]


def expand_all(graph: ArtifactGraph, components) -> ArtifactGraph:
    """Inverse of ``refactor_graph``: expand every INSTANCE_REF in place."""
    by_id = {c.component_id: c for c in components} if not isinstance(components, dict) else components
    return ArtifactGraph(graph.variant_id, copy_tree(expand_node(graph.root, by_id)))


def expand_node(node: ArtifactNode, components: dict) -> ArtifactNode:
    if node.node_type is NodeType.INSTANCE_REF:
        component = components.get(node.label)
        if component is None:
            raise BindingError(f"unknown component {node.label!r}")
        return expand_instance(component, Binding.from_tokens(node.tokens))
    new = ArtifactNode(0, node.node_type, node.label, node.tokens, [], dict(node.attributes))
    new.children = [expand_node(c, components) for c in node.children]
    return new
