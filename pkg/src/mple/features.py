"""Feature-model synthesis from an integrated platform.

Every distinct variant signature (the set of variants containing a platform
node) becomes one system-layer feature. Component instances add features
that point at a per-component layer model.
"""

from __future__ import annotations

import enum
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations

from .components import Binding
from .errors import CapacityError, FeatureModelError
from .graph import NodeType

ROOT = "ROOT"


class Variability(enum.Enum):
    MANDATORY = "mandatory"
    OPTIONAL = "optional"
    IN_GROUP = "in_group"


class GroupKind(enum.Enum):
    XOR = "xor"
    OR = "or"


class ConstraintKind(enum.Enum):
    REQUIRES = "requires"
    EXCLUDES = "excludes"


@dataclass(frozen=True)
class Block:
    signature: frozenset
    node_ids: tuple


@dataclass
class Feature:
    name: str
    variant_signature: frozenset
    parent: str | None
    variability: Variability
    layer_ref: str | None = None
    nodes: tuple = ()
    slot: str | None = None
    value: str | None = None


@dataclass(frozen=True)
class CrossTreeConstraint:
    kind: ConstraintKind
    lhs: str
    rhs: str

    def __str__(self):
        return f"{self.lhs} {self.kind.value} {self.rhs}"


@dataclass
class FeatureModel:
    root: str
    features: dict = field(default_factory=dict)
    groups: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    layers: dict = field(default_factory=dict)

    def children(self, name):
        return [f for f in self.features.values() if f.parent == name]

    def ancestors(self, name):
        p = self.features[name].parent
        while p is not None:
            yield p
            p = self.features[p].parent

    @property
    def slot_values(self):
        """Value feature name -> (slot, value); meaningful on layer models."""
        return {f.name: (f.slot, f.value) for f in self.features.values() if f.value is not None}

    @property
    def optional_nodes(self):
        """Optional-node feature name -> template node id; meaningful on layer models."""
        return {f.name: int(f.nodes[0]) for f in self.features.values()
                if f.nodes and f.layer_ref is None and f.slot is None and self.root != ROOT}


class Configuration:
    """Selected feature names plus, per instance feature, a layer configuration."""

    def __init__(self, selected, layer_bindings=None):
        self.selected = frozenset(selected)
        self.layer_bindings = dict(layer_bindings or {})

    def _key(self):
        return (self.selected, tuple(sorted((k, v._key()) for k, v in self.layer_bindings.items())))

    def __eq__(self, other):
        return isinstance(other, Configuration) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"Configuration({sorted(self.selected)})"

    def to_dict(self):
        return {
            "selected": sorted(self.selected),
            "layer_bindings": {k: self.layer_bindings[k].to_dict() for k in sorted(self.layer_bindings)},
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data.get("selected", []),
                   {k: cls.from_dict(v) for k, v in data.get("layer_bindings", {}).items()})


# ------------------------------------------------------------------ blocks

def _sig_key(sig):
    return (-len(sig), tuple(sorted(sig)))


def compute_blocks(platform) -> list[Block]:
    """Platform nodes grouped by variant set; the widest signature comes first."""
    groups = defaultdict(list)
    for n in platform.nodes():
        groups[frozenset(n.variant_set)].append(n.pid)
    return [Block(sig, tuple(sorted(groups[sig]))) for sig in sorted(groups, key=_sig_key)]


def _parents(signatures):
    """Smallest proper superset for every signature (None for the widest)."""
    out = {}
    for s in signatures:
        supers = [t for t in signatures if s < t]
        out[s] = min(supers, key=lambda t: (len(t), tuple(sorted(t)))) if supers else None
    return out


def mine_constraints(blocks, names=None) -> list[CrossTreeConstraint]:
    """REQUIRES for signature inclusion, EXCLUDES for disjointness.

    Only pairs outside an ancestor relation are considered. REQUIRES is
    reduced transitively over tree edges plus the remaining requires edges;
    an EXCLUDES is dropped when an ancestor pair already excludes, or when
    the two sides sit in the same XOR group.
    """
    sigs = [b.signature if isinstance(b, Block) else frozenset(b) for b in blocks]
    sigs = sorted(set(sigs), key=_sig_key)
    if names is None:
        names = {s: f"F{i}" for i, s in enumerate(sigs, 1)}
    parent = _parents(sigs)

    def anc(s):
        out = []
        p = parent[s]
        while p is not None:
            out.append(p)
            p = parent[p]
        return out

    ancestors = {s: anc(s) for s in sigs}

    def related(a, b):
        return a in ancestors[b] or b in ancestors[a]

    req = set()
    exc = set()
    for a, b in combinations(sigs, 2):
        if related(a, b):
            continue
        if a <= b:
            req.add((a, b))
        elif b <= a:
            req.add((b, a))
        if not a & b:
            exc.add(frozenset((a, b)))

    # transitive reduction: drop a->b if b is reachable from a without that edge
    def reachable(src, dst, skip):
        stack, seen = [src], {src}
        while stack:
            x = stack.pop()
            nxt = [parent[x]] if parent[x] is not None else []
            nxt += [y for (w, y) in req if w == x and (w, y) != skip]
            for y in nxt:
                if y == dst:
                    return True
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return False

    for edge in sorted(req, key=lambda e: (_sig_key(e[0]), _sig_key(e[1]))):
        if reachable(edge[0], edge[1], edge):
            req.discard(edge)

    xor_pairs = set()
    children = defaultdict(list)
    for s in sigs:
        if parent[s] is not None:
            children[parent[s]].append(s)
    for p, kids in children.items():
        if _group_kind(p, [k for k in kids if k != p]) is GroupKind.XOR:
            xor_pairs.update(frozenset(x) for x in combinations(kids, 2))

    def implied(pair):
        a, b = tuple(pair)
        for x in [a] + ancestors[a]:
            for y in [b] + ancestors[b]:
                other = frozenset((x, y))
                if other == pair:
                    continue
                if other in exc or other in xor_pairs:
                    return True
        return pair in xor_pairs

    kept_exc = [p for p in exc if not implied(p)]
    out = [CrossTreeConstraint(ConstraintKind.REQUIRES, names[a], names[b]) for a, b in req]
    for pair in kept_exc:
        x, y = sorted(names[s] for s in pair)
        out.append(CrossTreeConstraint(ConstraintKind.EXCLUDES, x, y))
    return sorted(out, key=lambda c: (c.kind.value, _natural(c.lhs), _natural(c.rhs)))


def _natural(name):
    return [int(p) if p.isdigit() else p for p in re.split(r"(\d+)", name)]


def _group_kind(parent_sig, kid_sigs):
    if len(kid_sigs) < 2 or frozenset().union(*kid_sigs) != parent_sig:
        return None
    pairs = list(combinations(kid_sigs, 2))
    if all(not (a & b) for a, b in pairs):
        return GroupKind.XOR
    if all(a & b for a, b in pairs):
        return GroupKind.OR
    return None


# --------------------------------------------------------------- synthesis

def synthesize_feature_model(platform) -> FeatureModel:
    """Fully constrained system model plus one layer model per component."""
    blocks = compute_blocks(platform)
    if not blocks:
        raise FeatureModelError("empty platform")
    sigs = [b.signature for b in blocks]
    names = {s: f"F{i}" for i, s in enumerate(sigs, 1)}
    parent = _parents(sigs)
    everything = frozenset(platform.variants)
    fm = FeatureModel(ROOT)
    fm.features[ROOT] = Feature(ROOT, everything, None, Variability.MANDATORY)
    for b in blocks:
        s = b.signature
        p = names[parent[s]] if parent[s] is not None else ROOT
        psig = parent[s] if parent[s] is not None else everything
        var = Variability.MANDATORY if s == psig else Variability.OPTIONAL
        fm.features[names[s]] = Feature(names[s], s, p, var, nodes=b.node_ids)

    kids = defaultdict(list)
    for s in sigs:
        if parent[s] is not None:
            kids[parent[s]].append(s)
    for p in sorted(kids, key=_sig_key):
        kind = _group_kind(p, kids[p])
        if kind is not None:
            members = sorted((names[k] for k in kids[p]), key=_natural)
            fm.groups.append((names[p], kind, members))
            for m in members:
                fm.features[m].variability = Variability.IN_GROUP

    fm.groups.sort(key=lambda g: _natural(g[0]))
    fm.constraints = mine_constraints(blocks, names)
    _add_instances(fm, platform, names)
    return fm


def _add_instances(fm, platform, names):
    by_block = defaultdict(dict)
    values = defaultdict(lambda: defaultdict(set))
    for n in platform.nodes():
        if n.node_type is not NodeType.INSTANCE_REF:
            continue
        owner = names[frozenset(n.variant_set)]
        by_block[owner].setdefault((n.label, n.tokens), []).append(n.pid)
        for k, v in Binding.from_tokens(n.tokens).values.items():
            values[n.label][k].add(v)
    for owner in sorted(by_block, key=_natural):
        for j, (cid, tokens) in enumerate(sorted(by_block[owner]), 1):
            name = f"{owner}_I{j}"
            fm.features[name] = Feature(name, fm.features[owner].variant_signature, owner,
                                        Variability.MANDATORY, layer_ref=cid,
                                        nodes=tuple(by_block[owner][(cid, tokens)]))
    for cid in sorted(values.keys() | {c for c in platform.components}):
        component = platform.components.get(cid)
        if component is None:
            raise FeatureModelError(f"instance of unknown component {cid!r}")
        fm.layers[cid] = _layer_model(component, values[cid])


def _layer_model(component, observed) -> FeatureModel:
    cid = component.component_id
    layer = FeatureModel(cid)
    layer.features[cid] = Feature(cid, frozenset(), None, Variability.MANDATORY)
    for p in component.parameters:
        pname = f"{cid}_{p}"
        layer.features[pname] = Feature(pname, frozenset(), cid, Variability.MANDATORY)
        members = []
        for i, v in enumerate(sorted(observed.get(p, ())), 1):
            vname = f"{pname}_v{i}"
            layer.features[vname] = Feature(vname, frozenset(), pname, Variability.IN_GROUP,
                                            slot=p, value=v)
            members.append(vname)
        if members:
            layer.groups.append((pname, GroupKind.XOR, members))
    for nid in sorted(component.optional_nodes):
        oname = f"{cid}_o{nid}"
        layer.features[oname] = Feature(oname, frozenset(), cid, Variability.OPTIONAL, nodes=(nid,))
    return layer


def feature_for_signature(fm: FeatureModel) -> dict:
    return {f.variant_signature: f.name for f in fm.features.values()
            if f.name != fm.root and f.layer_ref is None}


def instance_feature_map(fm: FeatureModel) -> dict:
    """Platform node id of each INSTANCE_REF -> its instance feature."""
    return {pid: f.name for f in fm.features.values() if f.layer_ref is not None for pid in f.nodes}


def variant_configuration(fm: FeatureModel, variant_id) -> Configuration:
    """The configuration image of an original variant."""
    return Configuration(
        f.name for f in fm.features.values()
        if f.name == fm.root or variant_id in f.variant_signature
    )


def rename(fm: FeatureModel, mapping: dict) -> FeatureModel:
    """A copy with features renamed; names absent from ``mapping`` are kept."""
    def r(name):
        return mapping.get(name, name) if name is not None else None

    new_names = [r(n) for n in fm.features]
    if len(set(new_names)) != len(new_names):
        raise FeatureModelError("rename would merge features")
    out = FeatureModel(r(fm.root), layers=fm.layers)
    for f in fm.features.values():
        out.features[r(f.name)] = Feature(r(f.name), f.variant_signature, r(f.parent), f.variability,
                                          f.layer_ref, f.nodes, f.slot, f.value)
    out.groups = [(r(p), k, [r(m) for m in ms]) for p, k, ms in fm.groups]
    out.constraints = [CrossTreeConstraint(c.kind, r(c.lhs), r(c.rhs)) for c in fm.constraints]
    return out


# -------------------------------------------------------------- validation

def validate_configuration(fm: FeatureModel, config) -> tuple[bool, list[str]]:
    selected = config.selected if isinstance(config, Configuration) else frozenset(config)
    v = []
    if fm.root not in selected:
        v.append(f"root {fm.root} not selected")
    unknown = selected - fm.features.keys()
    if unknown:
        v.append(f"unknown features {sorted(unknown)}")
    for f in fm.features.values():
        if f.parent is None:
            continue
        if f.name in selected and f.parent not in selected:
            v.append(f"{f.name} selected without its parent {f.parent}")
        if f.variability is Variability.MANDATORY and f.parent in selected and f.name not in selected:
            v.append(f"mandatory {f.name} not selected")
    for parent, kind, members in fm.groups:
        if parent not in selected:
            continue
        n = sum(m in selected for m in members)
        if kind is GroupKind.XOR and n != 1:
            v.append(f"xor group under {parent} has {n} selected members")
        if kind is GroupKind.OR and n < 1:
            v.append(f"or group under {parent} has no selected member")
    for c in fm.constraints:
        if c.kind is ConstraintKind.REQUIRES and c.lhs in selected and c.rhs not in selected:
            v.append(f"violated {c}")
        if c.kind is ConstraintKind.EXCLUDES and c.lhs in selected and c.rhs in selected:
            v.append(f"violated {c}")
    if isinstance(config, Configuration):
        for inst, sub in sorted(config.layer_bindings.items()):
            f = fm.features.get(inst)
            if f is None or f.layer_ref is None:
                v.append(f"{inst} is not a component instance feature")
                continue
            if inst not in selected:
                v.append(f"layer binding for unselected {inst}")
            ok, sub_v = validate_configuration(fm.layers[f.layer_ref], sub)
            v.extend(f"{inst}: {s}" for s in sub_v)
    return not v, v


def enumerate_configurations(fm: FeatureModel, limit: int | None = None) -> set:
    """All valid system-layer configurations, by tree-pruned exhaustive search."""
    count = len(fm.features) - 1
    if limit is None and count > 20:
        raise CapacityError(f"{count} features exceed the enumeration bound of 20; pass a limit")
    children = defaultdict(list)
    for f in fm.features.values():
        if f.parent is not None:
            children[f.parent].append(f.name)
    for k in children:
        children[k].sort(key=_natural)

    results = []

    def expand(frontier, selected):
        if limit is not None and len(results) >= limit:
            return
        if not frontier:
            ok, _ = validate_configuration(fm, selected)
            if ok:
                results.append(Configuration(selected))
            return
        name, rest = frontier[0], frontier[1:]
        kids = children.get(name, [])
        fixed = [k for k in kids if fm.features[k].variability is Variability.MANDATORY]
        free = [k for k in kids if k not in fixed]
        for mask in range(1 << len(free)):
            chosen = fixed + [k for i, k in enumerate(free) if mask >> i & 1]
            expand(rest + chosen, selected | set(chosen))

    expand([fm.root], {fm.root})
    return set(results)


# ------------------------------------------------------------ text format

_MARK = {Variability.MANDATORY: "mandatory", Variability.OPTIONAL: "optional"}
_GROUP_MARK = {GroupKind.XOR: "alternative", GroupKind.OR: "or"}
_ATTR_RE = re.compile(r"\s+([a-z]+)=")


def _write_tree(fm, lines, indent):
    group_of = {m: kind for _, kind, ms in fm.groups for m in ms}
    children = defaultdict(list)
    for f in fm.features.values():
        if f.parent is not None:
            children[f.parent].append(f)

    def rec(f, depth):
        mark = _GROUP_MARK[group_of[f.name]] if f.name in group_of else _MARK[f.variability]
        parts = [f"{'  ' * depth}{f.name}", mark]
        if f.variant_signature:
            parts.append("sig=" + json.dumps(sorted(f.variant_signature), separators=(",", ":")))
        if f.layer_ref:
            parts.append(f"layer={json.dumps(f.layer_ref)}")
        if f.nodes:
            parts.append("nodes=" + json.dumps(list(f.nodes), separators=(",", ":")))
        if f.slot is not None:
            parts.append(f"slot={json.dumps(f.slot)}")
        if f.value is not None:
            parts.append(f"value={json.dumps(f.value, ensure_ascii=False)}")
        lines.append(indent + " ".join(parts))
        for c in sorted(children[f.name], key=lambda c: _natural(c.name)):
            rec(c, depth + 1)

    rec(fm.features[fm.root], 0)


def write_feature_model(fm: FeatureModel) -> str:
    lines = ["feature-model"]
    _write_tree(fm, lines, "")
    lines.append("constraints")
    lines.extend(f"  {c}" for c in fm.constraints)
    for cid in sorted(fm.layers):
        lines.append(f"layer {cid}")
        _write_tree(fm.layers[cid], lines, "")
        lines.append("constraints")
        lines.extend(f"  {c}" for c in fm.layers[cid].constraints)
    lines.append("end")
    return "\n".join(lines) + "\n"


def _parse_feature_line(line, lineno):
    depth = (len(line) - len(line.lstrip(" "))) // 2
    head, _, rest = line.strip().partition(" ")
    mark, _, rest = rest.partition(" ")
    attrs = {}
    rest = " " + rest
    pos = 0
    decoder = json.JSONDecoder()
    while pos < len(rest.rstrip()):
        m = _ATTR_RE.match(rest, pos)
        if m is None:
            raise FeatureModelError(f"line {lineno}: cannot parse {rest[pos:]!r}")
        try:
            value, end = decoder.raw_decode(rest, m.end())
        except ValueError:
            raise FeatureModelError(f"line {lineno}: bad value for {m.group(1)}") from None
        attrs[m.group(1)] = value
        pos = end
    if mark not in ("mandatory", "optional", "alternative", "or"):
        raise FeatureModelError(f"line {lineno}: unknown marker {mark!r}")
    return depth, head, mark, attrs


def _read_section(lines, i, root_sig=None):
    fm = None
    stack = []
    groups = defaultdict(list)
    while i < len(lines) and lines[i] != "constraints":
        depth, name, mark, attrs = _parse_feature_line(lines[i], i + 1)
        del stack[depth:]
        parent = stack[-1] if stack else None
        if mark in ("alternative", "or"):
            var = Variability.IN_GROUP
            groups[(parent, GroupKind.XOR if mark == "alternative" else GroupKind.OR)].append(name)
        else:
            var = Variability(mark)
        f = Feature(name, frozenset(attrs.get("sig", ())), parent, var, attrs.get("layer"),
                    tuple(attrs.get("nodes", ())), attrs.get("slot"), attrs.get("value"))
        if fm is None:
            fm = FeatureModel(name)
        if name in fm.features:
            raise FeatureModelError(f"line {i + 1}: duplicate feature {name}")
        fm.features[name] = f
        stack.append(name)
        i += 1
    if fm is None or i >= len(lines):
        raise FeatureModelError("truncated feature model")
    fm.groups = sorted(((p, k, ms) for (p, k), ms in groups.items()), key=lambda g: _natural(g[0]))
    i += 1
    while i < len(lines) and lines[i].startswith("  "):
        parts = lines[i].split()
        if len(parts) != 3 or parts[1] not in ("requires", "excludes"):
            raise FeatureModelError(f"line {i + 1}: bad constraint {lines[i]!r}")
        fm.constraints.append(CrossTreeConstraint(ConstraintKind(parts[1]), parts[0], parts[2]))
        i += 1
    return fm, i


def read_feature_model(text: str) -> FeatureModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "feature-model":
        raise FeatureModelError("missing 'feature-model' header")
    fm, i = _read_section(lines, 1)
    while i < len(lines) and lines[i].startswith("layer "):
        cid = lines[i].split(" ", 1)[1]
        layer, i = _read_section(lines, i + 1)
        fm.layers[cid] = layer
    if i >= len(lines) or lines[i] != "end":
        raise FeatureModelError("missing 'end'")
    return fm
