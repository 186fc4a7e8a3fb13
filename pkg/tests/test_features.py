from itertools import chain, combinations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import block, graph, klass, method, stmt, system, systems
from mple.clones import detect_clones
from mple.components import refactor_graph
from mple.errors import CapacityError, FeatureModelError
from mple.features import (
    ROOT,
    ConstraintKind,
    Configuration,
    CrossTreeConstraint,
    Feature,
    FeatureModel,
    GroupKind,
    Variability,
    compute_blocks,
    enumerate_configurations,
    mine_constraints,
    read_feature_model,
    rename,
    synthesize_feature_model,
    validate_configuration,
    variant_configuration,
    write_feature_model,
)
from mple.graph import check_structure
from mple.platform import derive_variant, integrate_all

S = frozenset
REQ, EXC = ConstraintKind.REQUIRES, ConstraintKind.EXCLUDES


def core_plus(vid, *extra):
    return graph(vid, system(klass("Core", method("void run ( )", block(stmt("go", ";")))), *extra))


def platform_of(*variants):
    return integrate_all(list(variants))


def test_blocks_examples():
    same = platform_of(core_plus("v1"), core_plus("v2"))
    assert [b.signature for b in compute_blocks(same)] == [S({"v1", "v2"})]
    disjoint = platform_of(graph("v1", system(klass("A"))), graph("v2", system(klass("B"))))
    assert [b.signature for b in compute_blocks(disjoint)] == [S({"v1", "v2"}), S({"v1"}), S({"v2"})]
    assert len(compute_blocks(platform_of(core_plus("v1")))) == 1


def test_single_variant_model():
    fm = synthesize_feature_model(platform_of(core_plus("v1")))
    assert set(fm.features) == {ROOT, "F1"}
    assert fm.features["F1"].variability is Variability.MANDATORY
    assert fm.features["F1"].parent == ROOT
    assert not fm.groups and not fm.constraints


def test_two_variants_with_unique_classes():
    fm = synthesize_feature_model(platform_of(core_plus("v1", klass("A")), core_plus("v2", klass("B"))))
    assert fm.features["F1"].variability is Variability.MANDATORY
    assert {fm.features[f].variant_signature for f in ("F2", "F3")} == {S({"v1"}), S({"v2"})}
    # the two unique blocks partition the core signature, so they form an alternative
    assert fm.groups == [("F1", GroupKind.XOR, ["F2", "F3"])]
    assert len(enumerate_configurations(fm)) == 2


def test_partition_gives_xor_group():
    fm = synthesize_feature_model(platform_of(
        core_plus("v1", klass("A")), core_plus("v2", klass("B")), core_plus("v3", klass("B"))))
    (group,) = fm.groups
    assert group[1] is GroupKind.XOR
    assert {fm.features[m].variant_signature for m in group[2]} == {S({"v1"}), S({"v2", "v3"})}


def test_overlapping_cover_gives_or_group():
    fm = synthesize_feature_model(platform_of(
        core_plus("v1", klass("A")), core_plus("v2", klass("A"), klass("B")), core_plus("v3", klass("B"))))
    kinds = [g[1] for g in fm.groups]
    assert kinds == [GroupKind.OR]


def test_subset_rule_requires():
    # {v1} hangs under {v1,v2} (tie broken lexicographically) and needs {v1,v3} too
    blocks = [S({"v1", "v2", "v3"}), S({"v1", "v2"}), S({"v1", "v3"}), S({"v1"})]
    assert mine_constraints(blocks) == [CrossTreeConstraint(REQ, "F4", "F3")]


def test_transitive_requires_reduced():
    # naming order: abcd, acd, ab, ac, a. {a} hangs under {a,b}; {a}->{a,c} is kept and
    # {a}->{a,c,d} follows from it through the tree edge {a,c}->{a,c,d}
    cons = mine_constraints([S("abcd"), S("ab"), S("acd"), S("ac"), S("a")])
    assert [str(c) for c in cons] == ["F5 requires F4"]


def test_disjoint_pair_excludes_and_ancestors_are_skipped():
    # {v1} and {v3} share the parent {v1,v3,v4} without covering it, so no group absorbs them
    blocks = [S({"v1", "v2", "v3", "v4"}), S({"v1", "v3", "v4"}), S({"v1"}), S({"v3"})]
    cons = mine_constraints(blocks)
    assert cons == [CrossTreeConstraint(EXC, "F3", "F4")]


def test_implied_exclusion_is_pruned():
    # {v1} lies under {v1,v3}, which already excludes {v2}
    blocks = [S({"v1", "v2", "v3"}), S({"v1", "v3"}), S({"v2", "v3"}), S({"v1"}), S({"v2"})]
    cons = mine_constraints(blocks)
    f = {s: f"F{i}" for i, s in enumerate(blocks, 1)}
    assert CrossTreeConstraint(EXC, *sorted((f[S({"v1"})], f[S({"v2"})]))) not in cons
    assert CrossTreeConstraint(EXC, *sorted((f[S({"v1", "v3"})], f[S({"v2"})]))) in cons


def hand_model(*kids, constraints=()):
    fm = FeatureModel(ROOT)
    fm.features[ROOT] = Feature(ROOT, S(), None, Variability.MANDATORY)
    for name, var in kids:
        fm.features[name] = Feature(name, S(), ROOT, var)
    fm.constraints = list(constraints)
    return fm


def test_enumeration_examples():
    assert len(enumerate_configurations(hand_model(("A", Variability.MANDATORY)))) == 1
    two = hand_model(("A", Variability.OPTIONAL), ("B", Variability.OPTIONAL))
    assert len(enumerate_configurations(two)) == 4
    two.constraints = [CrossTreeConstraint(EXC, "A", "B")]
    assert len(enumerate_configurations(two)) == 3
    assert len(enumerate_configurations(two, limit=2)) == 2
    big = hand_model(*[(f"X{i}", Variability.OPTIONAL) for i in range(21)])
    with pytest.raises(CapacityError):
        enumerate_configurations(big)


def test_validation_examples():
    fm = hand_model(("A", Variability.IN_GROUP), ("B", Variability.IN_GROUP), ("C", Variability.OPTIONAL),
                    constraints=[CrossTreeConstraint(REQ, "C", "A")])
    fm.groups = [(ROOT, GroupKind.XOR, ["A", "B"])]
    ok, v = validate_configuration(fm, Configuration({ROOT, "A", "B"}))
    assert not ok and any("xor" in x for x in v)
    ok, v = validate_configuration(fm, Configuration({ROOT, "B", "C"}))
    assert not ok and any("requires" in x for x in v)
    assert validate_configuration(fm, Configuration({ROOT, "A", "C"}))[0]
    assert not validate_configuration(fm, Configuration({"A"}))[0]


def all_subsets(items):
    return chain.from_iterable(combinations(items, k) for k in range(len(items) + 1))


def oracle_valid(fm, sigs_of):
    """Brute force: tree rules, groups and every raw pairwise relation between non-ancestors."""
    names = [n for n in fm.features if n != ROOT]
    raw = []
    for a, b in combinations(names, 2):
        if a in set(fm.ancestors(b)) or b in set(fm.ancestors(a)):
            continue
        sa, sb = sigs_of[a], sigs_of[b]
        if sa <= sb:
            raw.append((REQ, a, b))
        if sb <= sa:
            raw.append((REQ, b, a))
        if not sa & sb:
            raw.append((EXC, a, b))
    out = set()
    for sub in all_subsets(names):
        sel = set(sub) | {ROOT}
        plain = FeatureModel(ROOT, fm.features, fm.groups, [])
        if not validate_configuration(plain, sel)[0]:
            continue
        if any((k is REQ and a in sel and b not in sel) or (k is EXC and a in sel and b in sel)
               for k, a, b in raw):
            continue
        out.add(Configuration(sel))
    return out


small_systems = st.lists(systems, min_size=1, max_size=3)


@given(small_systems)
def test_synthesis_properties(roots):
    variants = [graph(f"v{i}", r) for i, r in enumerate(roots)]
    p = integrate_all(variants)
    fm = synthesize_feature_model(p)
    system_features = [f for f in fm.features.values() if f.name != ROOT]
    # block bijection
    sigs = [f.variant_signature for f in system_features]
    assert len(set(sigs)) == len(sigs) == len(compute_blocks(p))
    for f in system_features:
        psig = fm.features[f.parent].variant_signature
        assert f.variant_signature < psig or f.variability is Variability.MANDATORY
        assert (f.variability is Variability.MANDATORY) == (f.variant_signature == psig)
        assert f.parent in fm.features
    for c in fm.constraints:
        assert c.lhs not in set(fm.ancestors(c.rhs)) and c.rhs not in set(fm.ancestors(c.lhs))
    for v in variants:
        config = variant_configuration(fm, v.variant_id)
        ok, why = validate_configuration(fm, config)
        assert ok, why
        derived = derive_variant(p, config, fm)
        keys = lambda g: sorted((n.node_type.name, n.label, n.tokens) for n in g.nodes() if n is not g.root)
        assert keys(derived) == keys(v)
    valid = enumerate_configurations(fm)
    assert valid == oracle_valid(fm, {f.name: f.variant_signature for f in system_features})
    for config in valid:
        check_structure(derive_variant(p, config, fm).root)


def test_text_round_trip_with_layers():
    body = block(stmt("total", "=", "price", "*", "qty", "+", "fee", ";"), stmt("emit", "(", "total", ")", ";"))
    alt = block(stmt("amount", "=", "price", "*", "qty", "+", "fee", ";"), stmt("emit", "(", "amount", ")", ";"),
                stmt("log", "(", ")", ";"))
    g1 = graph("v1", system(klass("A", method("void f ( )", body)), klass("B", method("void f ( )", alt))))
    g2 = graph("v2", system(klass("A", method("void f ( )", body)), klass("C", method("void f ( )", body))))
    refactored, comps = [], []
    for g in (g1, g2):
        new, cs = refactor_graph(g, detect_clones(g))
        refactored.append(new)
        comps.extend(cs)
    p = integrate_all(refactored, components={c.component_id: c for c in comps}.values())
    fm = synthesize_feature_model(p)
    assert fm.layers
    inst = [f for f in fm.features.values() if f.layer_ref]
    assert inst and all(f.variability is Variability.MANDATORY for f in inst)
    text = write_feature_model(fm)
    again = read_feature_model(text)
    assert write_feature_model(again) == text
    for v, g in zip(refactored, (g1, g2)):
        assert validate_configuration(fm, variant_configuration(fm, v.variant_id))[0]
        assert derive_variant(p, v.variant_id).content_equal(g)


def test_layer_binding_overrides_instance():
    body = lambda var: block(stmt(var, "=", "price", "*", "qty", "+", "fee", ";"), stmt("emit", "(", var, ")", ";"))
    g = graph("v1", system(klass("A", method("void f ( )", body("x"))), klass("B", method("void f ( )", body("y")))))
    new, comps = refactor_graph(g, detect_clones(g))
    p = integrate_all([new], components=comps)
    fm = synthesize_feature_model(p)
    (cid, layer), = fm.layers.items()
    # class name and variable name are both slots
    chosen = {cid}
    for parent, kind, members in layer.groups:
        assert kind is GroupKind.XOR
        values = {layer.features[m].value: m for m in members}
        chosen |= {parent, values.get("x", members[0])}
    inst = sorted(f.name for f in fm.features.values() if f.layer_ref)
    base = variant_configuration(fm, "v1")
    sub = Configuration(chosen)
    config = Configuration(base.selected, {inst[0]: sub, inst[1]: sub})
    assert validate_configuration(fm, config)[0]
    derived = derive_variant(p, config, fm)
    leaves = [n.tokens for n in derived.nodes() if n.tokens]
    assert all("y" not in t for t in leaves)
    bad = Configuration(base.selected, {inst[0]: Configuration({cid})})
    assert not validate_configuration(fm, bad)[0]
    with pytest.raises(FeatureModelError):
        derive_variant(p, bad, fm)


def test_rename_and_errors():
    fm = synthesize_feature_model(platform_of(core_plus("v1", klass("A")), core_plus("v2")))
    renamed = rename(fm, {"F1": "Core", "F2": "Extra"})
    assert renamed.features["Extra"].parent == "Core"
    with pytest.raises(FeatureModelError):
        rename(fm, {"F1": "F2"})
    with pytest.raises(FeatureModelError):
        read_feature_model("nonsense")
    with pytest.raises(FeatureModelError):
        read_feature_model("feature-model\nROOT mandatory\n")
    doc = Configuration({"ROOT", "F1"}, {"F1_I1": Configuration({"K"})})
    assert Configuration.from_dict(doc.to_dict()) == doc
