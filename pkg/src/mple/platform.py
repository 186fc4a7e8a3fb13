"""The integrated platform: an annotated superset of all integrated variants.

Variant nodes are matched to platform nodes purely by content: a child
matches the platform child with the same (type, label, tokens) and the same
occurrence index among equal-content siblings. Node identity is therefore a
function of the root path alone, which makes the merged result independent
of the order in which variants arrive.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field

from .components import Binding, ConfigurableComponent, expand_instance
from .conditions import condition_features, eval_condition, format_condition, parse_condition
from .errors import FeatureModelError, PlatformError
from .graph import ArtifactGraph, ArtifactNode, NodeType, copy_tree, exact_hash


def _key_hash(node_type, label, tokens) -> str:
    text = json.dumps([node_type.name, label, list(tokens)], ensure_ascii=False)
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()


@dataclass(eq=False)
class PlatformNode:
    pid: int
    node_type: NodeType
    label: str
    tokens: tuple
    rank: int = 0
    children: list = field(default_factory=list)
    variant_set: set = field(default_factory=set)
    ordering_keys: dict = field(default_factory=dict)
    presence_condition: object = None
    member_hashes: set = field(default_factory=set)

    def __post_init__(self):
        self.key_hash = _key_hash(self.node_type, self.label, self.tokens)
        self._index = {(c.key(), c.rank): c for c in self.children}

    def key(self):
        return (self.node_type, self.label, self.tokens)

    def sort_key(self):
        return (self.key_hash, self.rank)

    def walk(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass
class IntegratedPlatform:
    root: PlatformNode
    variants: set = field(default_factory=set)
    components: dict = field(default_factory=dict)
    root_labels: dict = field(default_factory=dict)
    next_pid: int = 1

    def nodes(self):
        return self.root.walk()

    def node_count(self) -> int:
        return sum(1 for _ in self.nodes())

    def node(self, pid) -> PlatformNode:
        for n in self.nodes():
            if n.pid == pid:
                return n
        raise PlatformError(f"unknown platform node {pid}")

    def add_components(self, components):
        for c in components:
            self.components[c.component_id] = c


def _absorb(platform, pnode, vnode, vid, position):
    pnode.variant_set.add(vid)
    pnode.ordering_keys[vid] = position
    pnode.member_hashes.add(exact_hash(vnode))
    seen = Counter()
    added = False
    for pos, child in enumerate(vnode.children):
        key = child.key()
        rank = seen[key]
        seen[key] += 1
        target = pnode._index.get((key, rank))
        if target is None:
            target = PlatformNode(platform.next_pid, child.node_type, child.label, child.tokens, rank)
            platform.next_pid += 1
            pnode._index[(key, rank)] = target
            pnode.children.append(target)
            added = True
        _absorb(platform, target, child, vid, pos)
    if added:
        pnode.children.sort(key=PlatformNode.sort_key)


def init_platform(variant: ArtifactGraph, components=()) -> IntegratedPlatform:
    """A platform mirroring one variant; the starting point for integration."""
    root = PlatformNode(0, NodeType.SYSTEM, "", ())
    platform = IntegratedPlatform(root)
    return integrate_variant(platform, variant, components)


def integrate_variant(platform: IntegratedPlatform, variant: ArtifactGraph,
                      components=()) -> IntegratedPlatform:
    """Merge ``variant`` into ``platform`` in place and return it."""
    vid = variant.variant_id
    if vid in platform.variants:
        raise PlatformError(f"variant {vid!r} is already integrated")
    platform.variants.add(vid)
    platform.root_labels[vid] = variant.root.label
    platform.add_components(components)
    _absorb(platform, platform.root, variant.root, vid, 0)
    return platform


def integrate_all(variants, taxonomy=None, components=()) -> IntegratedPlatform:
    """Fold ``integrate_variant`` over the variants (in taxonomy order if given)."""
    variants = list(variants)
    if not variants:
        raise PlatformError("need at least one variant")
    if taxonomy is not None:
        by_id = {v.variant_id: v for v in variants}
        variants = [by_id[v] for v in taxonomy.merge_order]
    platform = init_platform(variants[0], components)
    for v in variants[1:]:
        integrate_variant(platform, v)
    return platform


def annotate_feature(platform: IntegratedPlatform, node_ids, condition, features=None):
    """Attach a presence condition to platform nodes.

    ``features`` lists the declared feature names (a FeatureModel works too);
    when omitted the model synthesized from the platform is used.
    """
    if isinstance(condition, str):
        condition = parse_condition(condition)
    if features is None:
        from .features import synthesize_feature_model

        features = synthesize_feature_model(platform)
    declared = set(features.features) if hasattr(features, "features") else set(features)
    unknown = condition_features(condition) - declared
    if unknown:
        raise FeatureModelError(f"undeclared features in condition: {sorted(unknown)}")
    by_pid = {n.pid: n for n in platform.nodes()}
    missing = [pid for pid in node_ids if pid not in by_pid]
    if missing:
        raise PlatformError(f"unknown platform nodes {sorted(missing)}")
    for pid in node_ids:
        by_pid[pid].presence_condition = condition
    return platform


# --------------------------------------------------------------- derivation

def _expand(node: ArtifactNode, components, bindings=None) -> ArtifactNode:
    if node.node_type is NodeType.INSTANCE_REF:
        component = components.get(node.label)
        if component is None:
            raise PlatformError(f"unknown component {node.label!r}")
        binding = Binding.from_tokens(node.tokens)
        if bindings and node.attributes.get("_feature") in bindings:
            binding = bindings[node.attributes["_feature"]]
        return expand_instance(component, binding)
    node.children = [_expand(c, components, bindings) for c in node.children]
    return node


def derive_variant(platform: IntegratedPlatform, selection, feature_model=None, check=True):
    """Derive an ArtifactGraph from the platform.

    ``selection`` is an integrated variant id (reproduced exactly, in its own
    sibling order) or a feature Configuration. Under a configuration a node is
    kept when its parent is, and its presence condition holds or, without one,
    it shares its parent's variant set or the feature of its variant set is
    selected. Siblings are then ordered by their mean ordering key. Instance
    references are expanded in both cases.
    """
    if isinstance(selection, str):
        vid = selection
        if vid not in platform.variants:
            raise PlatformError(f"unknown variant {vid!r}")

        def build(p):
            node = ArtifactNode(0, p.node_type, p.label, p.tokens)
            kids = [c for c in p.children if vid in c.variant_set]
            kids.sort(key=lambda c: c.ordering_keys[vid])
            node.children = [build(c) for c in kids]
            return node

        root = build(platform.root)
        root.label = platform.root_labels[vid]
        root = _expand(root, platform.components)
        return ArtifactGraph(vid, copy_tree(root))

    from .features import feature_for_signature, instance_feature_map, synthesize_feature_model, validate_configuration

    fm = feature_model or synthesize_feature_model(platform)
    if check:
        ok, violations = validate_configuration(fm, selection)
        if not ok:
            raise FeatureModelError("invalid configuration: " + "; ".join(violations))
    selected = selection.selected
    sig_feature = feature_for_signature(fm)
    inst_feature = instance_feature_map(fm)
    layer_bindings = _layer_bindings(fm, selection)

    def present(p, parent):
        if p.presence_condition is not None:
            return eval_condition(p.presence_condition, selected)
        if p.variant_set == parent.variant_set:
            return True  # same signature as its (included) parent
        return sig_feature.get(frozenset(p.variant_set)) in selected

    def mean_key(c):
        keys = c.ordering_keys.values()
        return (sum(keys) / len(keys), c.key_hash, c.rank)

    def build(p):
        node = ArtifactNode(0, p.node_type, p.label, p.tokens)
        if p.pid in inst_feature:
            node.attributes["_feature"] = inst_feature[p.pid]
        kids = sorted((c for c in p.children if present(c, p)), key=mean_key)
        node.children = [build(c) for c in kids]
        return node

    root = build(platform.root)
    root.label = platform.root_labels[min(platform.root_labels)] if platform.root_labels else ""
    root = _expand(root, platform.components, layer_bindings)
    for n in root.walk():
        n.attributes.pop("_feature", None)
    return ArtifactGraph("+".join(sorted(selected)) or "config", copy_tree(root))


def _layer_bindings(fm, config):
    """Component bindings chosen through layer configurations."""
    out = {}
    for inst, layer_config in getattr(config, "layer_bindings", {}).items():
        feature = fm.features.get(inst)
        if feature is None or feature.layer_ref is None:
            raise FeatureModelError(f"{inst!r} is not a component instance feature")
        layer = fm.layers[feature.layer_ref]
        values, included = {}, {}
        for name in layer_config.selected:
            if name in layer.slot_values:
                slot, value = layer.slot_values[name]
                values[slot] = value
        for name, nid in layer.optional_nodes.items():
            included[nid] = name in layer_config.selected
        out[inst] = Binding(values, included)
    return out


def derive_component(platform: IntegratedPlatform, component_id, binding) -> ArtifactNode:
    component = platform.components.get(component_id)
    if component is None:
        raise PlatformError(f"unknown component {component_id!r}")
    return expand_instance(component, binding)


# ------------------------------------------------------------ serialization

def _node_doc(p: PlatformNode, with_pids: bool) -> dict:
    doc = {
        "type": p.node_type.name,
        "label": p.label,
        "tokens": list(p.tokens),
        "rank": p.rank,
        "variants": sorted(p.variant_set),
        "ordering_keys": {k: p.ordering_keys[k] for k in sorted(p.ordering_keys)},
        "member_hashes": sorted(p.member_hashes),
        "presence_condition": (
            format_condition(p.presence_condition) if p.presence_condition is not None else None
        ),
        "children": [_node_doc(c, with_pids) for c in p.children],
    }
    if with_pids:
        doc["pid"] = p.pid
    return doc


def canonical_form(platform: IntegratedPlatform) -> str:
    """Deterministic text with platform ids erased; equal for equal platforms."""
    doc = {
        "variants": sorted(platform.variants),
        "root_labels": {k: platform.root_labels[k] for k in sorted(platform.root_labels)},
        "components": [platform.components[c].to_dict() for c in sorted(platform.components)],
        "root": _node_doc(platform.root, with_pids=False),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def platform_to_dict(platform: IntegratedPlatform) -> dict:
    return {
        "variants": sorted(platform.variants),
        "root_labels": {k: platform.root_labels[k] for k in sorted(platform.root_labels)},
        "components": [platform.components[c].to_dict() for c in sorted(platform.components)],
        "next_pid": platform.next_pid,
        "root": _node_doc(platform.root, with_pids=True),
    }


def save_platform(platform: IntegratedPlatform) -> str:
    return json.dumps(platform_to_dict(platform), sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def _node_from_doc(doc) -> PlatformNode:
    children = [_node_from_doc(c) for c in doc["children"]]
    cond = doc.get("presence_condition")
    return PlatformNode(
        doc["pid"],
        NodeType[doc["type"]],
        doc["label"],
        tuple(doc["tokens"]),
        doc["rank"],
        children,
        set(doc["variants"]),
        dict(doc["ordering_keys"]),
        parse_condition(cond) if cond else None,
        set(doc["member_hashes"]),
    )


def platform_from_dict(data) -> IntegratedPlatform:
    components = {}
    for c in data.get("components", []):
        comp = ConfigurableComponent.from_dict(c)
        components[comp.component_id] = comp
    return IntegratedPlatform(
        _node_from_doc(data["root"]),
        set(data["variants"]),
        components,
        dict(data.get("root_labels", {})),
        data.get("next_pid", 1),
    )


def load_platform(text: str) -> IntegratedPlatform:
    try:
        return platform_from_dict(json.loads(text))
    except (KeyError, TypeError, ValueError) as exc:
        raise PlatformError(f"malformed platform document: {exc}") from None
