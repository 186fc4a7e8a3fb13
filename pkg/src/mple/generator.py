"""Seeded synthetic benchmark: clone-and-own variants with injected clones.

Everything random goes through ``random.Random`` instances derived from the
configured seed, so a (seed graph, config) pair always yields the same
variants and ground truth.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .clones import CloneType, DetectionConfig, detect_clones
from .errors import CapacityError, MPLError
from .graph import (
    ArtifactGraph,
    ArtifactNode,
    NodeType,
    abstracted_hash,
    copy_tree,
    exact_hash,
    invalidate,
    parse_generic_tree,
    serialize_graph,
)
from .lexer import KEYWORDS, LITERAL_WORDS, is_identifier, is_literal

GRANULARITY_ORDER = (NodeType.CLASS, NodeType.METHOD, NodeType.BLOCK)
MIN_EDIT_STATEMENTS = 4


@dataclass
class GeneratorConfig:
    variant_count: int = 1
    clones_per_variant: dict = field(default_factory=dict)
    type3_max_edits: int = 2
    variant_mutation_rate: float = 0.2
    rng_seed: int = 0
    min_tokens: int = 8
    granularities: tuple = GRANULARITY_ORDER

    def __post_init__(self):
        if self.variant_count < 1:
            raise ValueError("variant_count must be >= 1")
        self.clones_per_variant = {CloneType(k): int(v) for k, v in self.clones_per_variant.items()}
        if any(v < 0 for v in self.clones_per_variant.values()):
            raise ValueError("clone counts must be >= 0")
        if not 0 <= self.variant_mutation_rate <= 1:
            raise ValueError("variant_mutation_rate must be in [0, 1]")
        if self.type3_max_edits < 1:
            raise ValueError("type3_max_edits must be >= 1")
        grans = [g if isinstance(g, NodeType) else NodeType[g] for g in self.granularities]
        self.granularities = tuple(sorted(set(grans), key=lambda g: g.rank))

    def to_dict(self):
        return {
            "variant_count": self.variant_count,
            "clones_per_variant": {t.value: n for t, n in sorted(self.clones_per_variant.items(),
                                                                   key=lambda kv: kv[0].value)},
            "type3_max_edits": self.type3_max_edits,
            "variant_mutation_rate": self.variant_mutation_rate,
            "rng_seed": self.rng_seed,
            "min_tokens": self.min_tokens,
            "granularities": [g.name for g in self.granularities],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class CloneRecord:
    variant_id: str
    granularity: NodeType
    clone_type: CloneType
    members: tuple
    edit_count: int = 0

    def to_dict(self):
        return {
            "variant_id": self.variant_id,
            "granularity": self.granularity.name,
            "clone_type": self.clone_type.value,
            "members": list(self.members),
            "edit_count": self.edit_count,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["variant_id"], NodeType[d["granularity"]], CloneType(d["clone_type"]),
                   tuple(d["members"]), d.get("edit_count", 0))


@dataclass
class GroundTruth:
    clone_records: list = field(default_factory=list)
    genealogy: list = field(default_factory=list)

    def records_for(self, variant_id):
        return [r for r in self.clone_records if r.variant_id == variant_id]

    def to_dict(self):
        return {
            "clone_records": [r.to_dict() for r in self.clone_records],
            "genealogy": [{"variant_id": v, "parent": p, "mutations": list(m)}
                          for v, p, m in self.genealogy],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([CloneRecord.from_dict(r) for r in d.get("clone_records", [])],
                   [(g["variant_id"], g["parent"], list(g["mutations"])) for g in d.get("genealogy", [])])


# ---------------------------------------------------------------- the seed

_SYLLABLES = (
    "al be co da el fi go ha in jo ka lu mo ne or pa qui ro su ta um ve wi xa yo ze "
    "bri cla dro fen gal hul jen kor lim mar nor pix ros sel tur vox wen zim"
).split()
_TYPES = ("int", "long", "double", "boolean", "String")
_ARITH = ("+", "-", "*", "/", "%")
_CMP = ("<", ">", "<=", ">=", "==", "!=")


class _Names:
    """Fresh identifier supply; never hands out the same name twice."""

    def __init__(self, rng):
        self.rng = rng
        self.used = set(KEYWORDS) | set(LITERAL_WORDS) | {"System", "out", "println"}

    def fresh(self, capital=False):
        while True:
            parts = [self.rng.choice(_SYLLABLES) for _ in range(self.rng.randint(2, 4))]
            name = parts[0] + "".join(p.capitalize() for p in parts[1:])
            if capital:
                name = name.capitalize()
            if name not in self.used:
                self.used.add(name)
                return name


class _Writer:
    def __init__(self, rng, names):
        self.rng = rng
        self.names = names

    def literal(self):
        r = self.rng.random()
        if r < 0.6:
            return str(self.rng.randint(0, 999))
        if r < 0.8:
            return '"' + self.rng.choice(_SYLLABLES) + self.rng.choice(_SYLLABLES) + '"'
        return self.rng.choice(("true", "false", "null"))

    def expr(self, scope, depth=0):
        r = self.rng.random()
        if depth >= 2 or r < 0.35:
            return [self.rng.choice(scope)] if self.rng.random() < 0.6 else [self.literal()]
        if r < 0.7:
            return self.expr(scope, depth + 1) + [self.rng.choice(_ARITH)] + self.expr(scope, depth + 1)
        if r < 0.85:
            args = []
            for i in range(self.rng.randint(0, 2)):
                if i:
                    args.append(",")
                args += self.expr(scope, depth + 1)
            return [self.names.fresh(), "("] + args + [")"]
        return ["("] + self.expr(scope, depth + 1) + [")"]

    def statement(self, scope):
        rng = self.rng
        kind = rng.randrange(8)
        if kind == 0:
            var = self.names.fresh()
            scope.append(var)
            toks = [rng.choice(_TYPES), var, "="] + self.expr(scope)
        elif kind == 1:
            toks = [rng.choice(scope), "="] + self.expr(scope)
        elif kind == 2:
            toks = [rng.choice(scope), rng.choice(("+=", "-=", "*="))] + self.expr(scope)
        elif kind == 3:
            toks = [rng.choice(scope), ".", self.names.fresh(), "("] + self.expr(scope) + [")"]
        elif kind == 4:
            toks = ["return"] + self.expr(scope)
        elif kind == 5:
            toks = ["System", ".", "out", ".", "println", "("] + self.expr(scope) + [")"]
        elif kind == 6:
            toks = [rng.choice(scope), "[", rng.choice(scope), "]", "="] + self.expr(scope)
        else:
            toks = [rng.choice(scope), rng.choice(("++", "--"))]
        return ArtifactNode(0, NodeType.STATEMENT, "", tuple(toks + [";"]))

    def header(self, scope):
        rng = self.rng
        kind = rng.randrange(3)
        a, b = rng.choice(scope), rng.choice(scope)
        if kind == 0:
            return f"if ( {a} {rng.choice(_CMP)} {b} )"
        if kind == 1:
            return f"while ( {a} {rng.choice(_CMP)} {self.literal()} )"
        i = self.names.fresh()
        return f"for ( int {i} = 0 ; {i} < {a} ; {i} ++ )"

    def block(self, scope, depth):
        node = ArtifactNode(0, NodeType.BLOCK, self.header(scope))
        inner = list(scope)
        node.children = [self.statement(inner) for _ in range(self.rng.randint(2, 5))]
        if depth < 2 and self.rng.random() < 0.2:
            node.children.insert(self.rng.randrange(len(node.children) + 1), self.block(inner, depth + 1))
        return node

    def method(self):
        rng = self.rng
        params = [self.names.fresh() for _ in range(rng.randint(1, 3))]
        sig = [rng.choice(_TYPES + ("void",)), self.names.fresh(), "("]
        for i, p in enumerate(params):
            if i:
                sig.append(",")
            sig += [rng.choice(_TYPES), p]
        sig.append(")")
        scope = list(params)
        body = ArtifactNode(0, NodeType.BLOCK, "")
        for _ in range(rng.randint(3, 8)):
            if rng.random() < 0.25:
                body.children.append(self.block(scope, 1))
            else:
                body.children.append(self.statement(scope))
        node = ArtifactNode(0, NodeType.METHOD, " ".join(sig))
        node.children = [body]
        return node

    def klass(self):
        node = ArtifactNode(0, NodeType.CLASS, self.names.fresh(capital=True))
        node.children = [self.method() for _ in range(self.rng.randint(3, 7))]
        return node

    def fresh_like(self, node):
        if node.node_type is NodeType.CLASS:
            return self.klass()
        if node.node_type is NodeType.METHOD:
            return self.method()
        scope = [self.names.fresh() for _ in range(2)]
        return self.block(scope, 1)


def synthesize_seed(rng_seed: int = 0, target_nodes: int = 500, variant_id: str = "v1",
                    min_tokens: int = 8) -> ArtifactGraph:
    """A random clone-free program of roughly ``target_nodes`` nodes.

    Clone freedom is checked with the detector at default settings; any
    accidental clone is replaced by freshly generated code until none remain.
    """
    rng = random.Random(f"seed:{rng_seed}")
    writer = _Writer(rng, _Names(rng))
    root = ArtifactNode(0, NodeType.SYSTEM, "seed")
    packages = [ArtifactNode(0, NodeType.PACKAGE, writer.names.fresh() + "." + writer.names.fresh())
                for _ in range(max(1, target_nodes // 2500 + 1))]
    root.children = packages
    count = 1 + len(packages)
    k = 0
    while count < target_nodes:
        cls = writer.klass()
        packages[k % len(packages)].children.append(cls)
        count += cls.size()
        k += 1
    config = DetectionConfig(min_tokens=min_tokens)
    for _ in range(50):
        graph = ArtifactGraph(variant_id, copy_tree(root))
        classes = detect_clones(graph, config)
        if not classes:
            return graph
        objs = dict(zip((n.id for n in graph.nodes()), root.walk()))
        parents = {id(c): p for p in root.walk() for c in p.children}
        for clone in classes:
            for m in sorted(clone.members)[1:]:
                old = objs[m]
                parent = parents[id(old)]
                i = next(j for j, c in enumerate(parent.children) if c is old)
                parent.children[i] = writer.fresh_like(old)
        invalidate(root)
    raise MPLError("could not synthesize a clone-free seed")


# ------------------------------------------------------------- mutations

def _parent_map(root):
    return {id(c): p for p in root.walk() for c in p.children}


def _rename_map(node, names: _Names):
    mapping = {}
    for n in node.walk():
        for t in (n.label.split(" ") if n.label else []) + list(n.tokens):
            if is_identifier(t) and t not in KEYWORDS and t not in mapping:
                mapping[t] = names.fresh(capital=t[:1].isupper())
    return mapping


def _renamed_copy(node, names: _Names, rng):
    """Consistent identifier renaming plus literal replacement."""
    mapping = _rename_map(node, names)
    writer = _Writer(rng, names)
    literals = {}

    def sub(t):
        if t in mapping:
            return mapping[t]
        if is_literal(t):
            if t not in literals:
                literals[t] = writer.literal()
            return literals[t]
        return t

    def rec(n):
        label = " ".join(sub(t) for t in n.label.split(" ")) if n.label else n.label
        new = ArtifactNode(0, n.node_type, label, tuple(sub(t) for t in n.tokens))
        new.children = [rec(c) for c in n.children]
        return new

    return rec(node)


def _clone_tree(node):
    new = ArtifactNode(0, node.node_type, node.label, node.tokens, [], dict(node.attributes))
    new.children = [_clone_tree(c) for c in node.children]
    return new


def _edit_hosts(node):
    """Blocks inside ``node`` (itself included) with enough direct statements to edit."""
    return [n for n in node.walk() if n.node_type is NodeType.BLOCK
            and sum(c.node_type is NodeType.STATEMENT for c in n.children) >= MIN_EDIT_STATEMENTS]


def _apply_edits(copy, edits, rng, writer):
    hosts = _edit_hosts(copy)
    host = rng.choice(hosts)
    done = []
    for _ in range(edits):
        stmts = [i for i, c in enumerate(host.children) if c.node_type is NodeType.STATEMENT]
        op = rng.choice(("insert", "delete", "reorder"))
        if op == "delete" and len(stmts) > 2:
            host.children.pop(rng.choice(stmts))
        elif op == "reorder" and len(stmts) >= 2:
            i = rng.randrange(len(stmts) - 1)
            a, b = stmts[i], stmts[i + 1]
            host.children[a], host.children[b] = host.children[b], host.children[a]
        else:
            op = "insert"
            scope = [t for c in host.children for t in c.tokens if is_identifier(t) and t not in KEYWORDS]
            scope = scope or [writer.names.fresh()]
            host.children.insert(rng.randrange(len(host.children) + 1), writer.statement(scope))
        done.append(op)
    return done


def _make_copy(source, clone_type, rng, names, max_edits, min_tokens):
    if clone_type is CloneType.TYPE1:
        return _clone_tree(source), 0
    if clone_type is CloneType.TYPE2:
        return _renamed_copy(source, names, rng), 0
    writer = _Writer(rng, names)
    for _ in range(50):
        copy = _clone_tree(source)
        edits = rng.randint(1, max_edits)
        _apply_edits(copy, edits, rng, writer)
        if abstracted_hash(copy) != abstracted_hash(source) and copy.token_mass() >= min_tokens:
            return copy, edits
    raise CapacityError(f"could not produce a near-miss copy of {source.node_type.name} {source.label!r}")


def _eligible(node, gran, clone_type, min_tokens, parents):
    if node.node_type is not gran or node.token_mass() < min_tokens:
        return False
    if gran is NodeType.BLOCK and parents[id(node)].node_type is not NodeType.BLOCK:
        return False
    if clone_type is CloneType.TYPE3 and not _edit_hosts(node):
        return False
    return True


class _State:
    """One variant under construction: its tree plus truth held as node objects."""

    def __init__(self, variant_id, root, records=()):
        self.variant_id = variant_id
        self.root = root
        self.records = list(records)  # (granularity, type, [node objects], edits)

    def protected(self):
        inside, above = set(), set()
        parents = _parent_map(self.root)
        for _, _, members, _ in self.records:
            for m in members:
                inside.update(id(n) for n in m.walk())
                p = parents.get(id(m))
                while p is not None:
                    above.add(id(p))
                    p = parents.get(id(p))
        return inside, above

    def copy(self, variant_id):
        mapping = {}

        def rec(n):
            new = ArtifactNode(0, n.node_type, n.label, n.tokens, [], dict(n.attributes))
            mapping[id(n)] = new
            new.children = [rec(c) for c in n.children]
            return new

        root = rec(self.root)
        records = [(g, t, [mapping[id(m)] for m in ms], e) for g, t, ms, e in self.records]
        return _State(variant_id, root, records)


def _mutate_state(state, count, rng, names, min_tokens, ops=None):
    """Apply ``count`` random variant-level mutations; returns descriptions."""
    log = []
    writer = _Writer(rng, names)
    for k in range(count):
        op = ops[k] if ops else rng.choice(("delete", "duplicate", "modify"))
        inside, above = state.protected()
        parents = _parent_map(state.root)
        free = [n for n in state.root.walk() if id(n) not in inside]
        if op == "delete":
            targets = [n for n in free if id(n) not in above and n.node_type in
                       (NodeType.METHOD, NodeType.STATEMENT)]
            if not targets:
                continue
            node = rng.choice(targets)
            parents[id(node)].children.remove(node)
            log.append(f"delete {node.node_type.name} {node.label or ' '.join(node.tokens)}")
        elif op == "duplicate":
            targets = [n for n in free if id(n) not in above and n.node_type in
                       (NodeType.CLASS, NodeType.METHOD) and n.token_mass() >= min_tokens]
            if not targets:
                continue
            node = rng.choice(targets)
            dup = _renamed_copy(node, names, rng)
            siblings = parents[id(node)].children
            siblings.insert(siblings.index(node) + 1, dup)
            state.records.append((node.node_type, CloneType.TYPE2, [node, dup], 0))
            log.append(f"duplicate {node.node_type.name} {node.label} as {dup.label}")
        else:
            targets = [n for n in free if n.node_type is NodeType.STATEMENT
                       and any(is_identifier(t) or is_literal(t) for t in n.tokens)]
            if not targets:
                continue
            node = rng.choice(targets)
            spots = [i for i, t in enumerate(node.tokens)
                     if (is_identifier(t) and t not in KEYWORDS) or is_literal(t)]
            if not spots:
                continue
            i = rng.choice(spots)
            old = node.tokens[i]
            new = writer.literal() if is_literal(old) else names.fresh()
            node.tokens = node.tokens[:i] + (new,) + node.tokens[i + 1:]
            log.append(f"modify {' '.join(node.tokens)}")
        invalidate(state.root)
    return log


def _inject(state, gran, clone_type, rng, names, config):
    inside, above = state.protected()
    parents = _parent_map(state.root)
    hosts = [n for n in state.root.walk()
             if id(n) not in inside and id(n) not in above
             and _eligible(n, gran, clone_type, config.min_tokens, parents)]
    if not hosts:
        return False
    source = rng.choice(hosts)
    copy, edits = _make_copy(source, clone_type, rng, names, config.type3_max_edits, config.min_tokens)
    siblings = parents[id(source)].children
    siblings.insert(siblings.index(source) + 1, copy)
    state.records.append((gran, clone_type, [source, copy], edits))
    invalidate(state.root)
    return True


def _finish(state):
    root = copy_tree(state.root)
    objs = {id(o): n.id for o, n in zip(state.root.walk(), root.walk())}
    graph = ArtifactGraph(state.variant_id, root)
    records = [
        CloneRecord(state.variant_id, g, t, tuple(sorted(objs[id(m)] for m in ms)), e)
        for g, t, ms, e in state.records
    ]
    records.sort(key=lambda r: r.members)
    return graph, records


def _names_for(graph, rng):
    names = _Names(rng)
    for n in graph.nodes():
        names.used.update(t for t in n.tokens if is_identifier(t))
        names.used.update(t for t in n.label.split(" ") if is_identifier(t))
    return names


def generate_benchmark(seed_graph: ArtifactGraph, config: GeneratorConfig):
    """Derive variants by clone-and-own, inject clones, and record the truth."""
    methods = [n for n in seed_graph.nodes() if n.node_type is NodeType.METHOD]
    if not any(m.token_mass() >= config.min_tokens for m in methods):
        raise CapacityError(f"seed has no METHOD with at least {config.min_tokens} tokens")
    rng = random.Random(f"bench:{config.rng_seed}")
    names = _names_for(seed_graph, rng)
    states = [_State(seed_graph.variant_id, _clone_tree(seed_graph.root))]
    truth = GroundTruth()
    for i in range(1, config.variant_count):
        parent = states[rng.randrange(len(states))]
        state = parent.copy(f"{seed_graph.variant_id}-{i}")
        n_methods = sum(1 for n in state.root.walk() if n.node_type is NodeType.METHOD)
        count = round(config.variant_mutation_rate * n_methods)
        log = _mutate_state(state, count, rng, names, config.min_tokens)
        truth.genealogy.append((state.variant_id, parent.variant_id, log))
        states.append(state)

    grans = [g for g in GRANULARITY_ORDER if g in config.granularities]
    shortfall = []
    for state in states:
        jobs = []
        for t in (CloneType.TYPE1, CloneType.TYPE2, CloneType.TYPE3):
            jobs += [(grans[k % len(grans)], t) for k in range(config.clones_per_variant.get(t, 0))]
        jobs.sort(key=lambda j: j[0].rank)
        for gran, t in jobs:
            order = [gran] + [g for g in grans if g is not gran]
            if not any(_inject(state, g, t, rng, names, config) for g in order):
                shortfall.append((state.variant_id, t.value))
    if shortfall:
        raise CapacityError(
            f"seed too small: {len(shortfall)} clone(s) could not be placed, first in "
            f"variant {shortfall[0][0]} ({shortfall[0][1]})"
        )
    variants = []
    for state in states:
        graph, records = _finish(state)
        variants.append(graph)
        truth.clone_records.extend(records)
    return variants, truth


def inject_clone(graph: ArtifactGraph, source_node_id: int, clone_type, rng_state,
                 type3_max_edits: int = 2, min_tokens: int = 8):
    """Copy one node next to itself as a clone of the given type.

    Returns the new graph (renumbered) and its CloneRecord.
    """
    clone_type = CloneType(clone_type)
    rng = rng_state if isinstance(rng_state, random.Random) else random.Random(rng_state)
    state = _State(graph.variant_id, _clone_tree(graph.root))
    objs = dict(zip((n.id for n in graph.nodes()), state.root.walk()))
    source = objs.get(source_node_id)
    if source is None or source.node_type not in GRANULARITY_ORDER:
        raise MPLError(f"node {source_node_id} is not a CLASS, METHOD or BLOCK")
    parents = _parent_map(state.root)
    if id(source) not in parents:
        raise MPLError("cannot clone the root")
    if source.token_mass() < min_tokens:
        raise MPLError(f"node {source_node_id} has fewer than {min_tokens} tokens")
    if clone_type is CloneType.TYPE3 and not _edit_hosts(source):
        raise MPLError(f"node {source_node_id} has no block with {MIN_EDIT_STATEMENTS} statements to edit")
    names = _names_for(graph, rng)
    copy, edits = _make_copy(source, clone_type, rng, names, type3_max_edits, min_tokens)
    siblings = parents[id(source)].children
    siblings.insert(siblings.index(source) + 1, copy)
    state.records.append((source.node_type, clone_type, [source, copy], edits))
    new_graph, records = _finish(state)
    return new_graph, records[0]


def mutate_variant(graph: ArtifactGraph, mutations, rng_state, variant_id=None,
                   min_tokens: int = 8) -> ArtifactGraph:
    """Apply the listed operators ("delete", "duplicate", "modify") at random sites."""
    rng = rng_state if isinstance(rng_state, random.Random) else random.Random(rng_state)
    state = _State(variant_id or f"{graph.variant_id}-m", _clone_tree(graph.root))
    ops = list(mutations)
    bad = [m for m in ops if m not in ("delete", "duplicate", "modify")]
    if bad:
        raise MPLError(f"unknown mutation operators {bad}")
    _mutate_state(state, len(ops), rng, _names_for(graph, rng), min_tokens, ops)
    return _finish(state)[0]


# ------------------------------------------------------------------ bundle

def write_bundle(directory, variants, truth: GroundTruth, config: GeneratorConfig) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    index = []
    for i, v in enumerate(variants):
        name = f"variant_{i:03d}.json"
        (d / name).write_text(serialize_graph(v), encoding="utf-8")
        index.append(name)
    (d / "truth.json").write_text(json.dumps(truth.to_dict(), indent=1, sort_keys=True) + "\n",
                                  encoding="utf-8")
    (d / "config.json").write_text(
        json.dumps({"generator": config.to_dict(), "variants": index}, indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def read_bundle(directory):
    d = Path(directory)
    meta = json.loads((d / "config.json").read_text(encoding="utf-8"))
    variants = [parse_generic_tree((d / name).read_text(encoding="utf-8")) for name in meta["variants"]]
    truth = GroundTruth.from_dict(json.loads((d / "truth.json").read_text(encoding="utf-8")))
    return variants, truth, GeneratorConfig.from_dict(meta["generator"])


def check_truth(variants, truth: GroundTruth) -> list[str]:
    """Consistency problems between variants and truth (empty when sound)."""
    by_id = {v.variant_id: v for v in variants}
    problems = []
    for r in truth.clone_records:
        g = by_id.get(r.variant_id)
        if g is None or any(m not in g.node_index for m in r.members):
            problems.append(f"{r}: members missing")
            continue
        nodes = [g[m] for m in r.members]
        exact = {exact_hash(n) for n in nodes}
        abstract = {abstracted_hash(n) for n in nodes}
        if r.clone_type is CloneType.TYPE1 and (len(exact) != 1 or r.edit_count):
            problems.append(f"{r}: TYPE1 members differ")
        if r.clone_type is CloneType.TYPE2 and (len(abstract) != 1 or len(exact) == 1):
            problems.append(f"{r}: TYPE2 members not abstraction-equal only")
        if r.clone_type is CloneType.TYPE3 and r.edit_count < 1:
            problems.append(f"{r}: TYPE3 without edits")
    seen = [v for v, _, _ in truth.genealogy]
    if len(seen) != len(set(seen)):
        problems.append("duplicate genealogy entries")
    return problems
