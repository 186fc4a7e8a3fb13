from itertools import permutations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import block, graph, klass, method, stmt, system, systems
from mple.clones import detect_clones
from mple.components import Binding, ConfigurableComponent, refactor_graph, slot_marker
from mple.errors import FeatureModelError, PlatformError
from mple.features import Configuration, synthesize_feature_model
from mple.generator import GeneratorConfig, generate_benchmark, synthesize_seed
from mple.graph import exact_hash
from mple.mining import mine_taxonomy
from mple.platform import (
    annotate_feature,
    canonical_form,
    derive_component,
    derive_variant,
    init_platform,
    integrate_all,
    integrate_variant,
    load_platform,
    save_platform,
)


def four_nodes(vid="v1"):
    return graph(vid, system(klass("A", method("void f ( )", block()))))


def pay(extra=()):
    return klass("Pay", method("void pay ( )", block(stmt("charge", "(", "x", ")", ";"), *extra)))


def test_init_platform_mirrors_variant():
    p = init_platform(four_nodes())
    assert p.node_count() == 4
    assert all(n.variant_set == {"v1"} for n in p.nodes())
    assert init_platform(graph("e", system())).node_count() == 1


def test_ordering_keys_record_positions():
    g = graph("v1", system(klass("B"), klass("A"), klass("C")))
    p = init_platform(g)
    keys = {n.label: n.ordering_keys["v1"] for n in p.root.children}
    assert keys == {"B": 0, "A": 1, "C": 2}
    assert [c.label for c in derive_variant(p, "v1").root.children] == ["B", "A", "C"]


def test_identical_variant_shares_every_node():
    p = integrate_all([four_nodes("v1"), four_nodes("v2")])
    assert p.node_count() == 4
    assert all(n.variant_set == {"v1", "v2"} for n in p.nodes())


def test_disjoint_classes_annotated_per_variant():
    a = graph("v1", system(klass("A")))
    b = graph("v2", system(klass("B")))
    p = integrate_all([a, b])
    sets = {c.label: c.variant_set for c in p.root.children}
    assert sets == {"A": {"v1"}, "B": {"v2"}}
    assert p.root.variant_set == {"v1", "v2"}


def test_duplicate_variant_rejected():
    p = init_platform(four_nodes())
    with pytest.raises(PlatformError):
        integrate_variant(p, four_nodes())
    with pytest.raises(PlatformError):
        integrate_all([])


def test_unknown_variant_rejected():
    with pytest.raises(PlatformError):
        derive_variant(init_platform(four_nodes()), "nope")


def three_generated(seed=5):
    seed_graph = synthesize_seed(seed, 200)
    variants, _ = generate_benchmark(seed_graph, GeneratorConfig(
        variant_count=4, variant_mutation_rate=0.5, rng_seed=seed))
    return variants


@pytest.mark.parametrize("seed", [5, 6])
def test_permutation_invariance_and_round_trip(seed):
    variants = three_generated(seed)
    forms = set()
    for perm in permutations(variants):
        p = integrate_all(perm)
        forms.add(canonical_form(p))
    assert len(forms) == 1
    for v in variants:
        assert derive_variant(p, v.variant_id).content_equal(v)


def test_taxonomy_order_gives_same_platform():
    variants = three_generated()
    plain = integrate_all(variants)
    ordered = integrate_all(variants, mine_taxonomy(variants))
    assert canonical_form(plain) == canonical_form(ordered)


@given(st.lists(systems, min_size=1, max_size=4), st.randoms())
def test_integration_properties(roots, rnd):
    variants = [graph(f"v{i}", r) for i, r in enumerate(roots)]
    p = integrate_all(variants)
    shuffled = list(variants)
    rnd.shuffle(shuffled)
    assert canonical_form(integrate_all(shuffled)) == canonical_form(p)
    assert p.root.variant_set == p.variants == {v.variant_id for v in variants}
    for n in p.nodes():
        assert n.variant_set and set(n.ordering_keys) == n.variant_set
        for c in n.children:
            assert c.variant_set <= n.variant_set
        assert [c.sort_key() for c in n.children] == sorted(c.sort_key() for c in n.children)
    for v in variants:
        assert derive_variant(p, v.variant_id).content_equal(v)
    total = sum(len(v) for v in variants)
    assert p.node_count() <= total
    if len(variants) == 1:
        assert p.node_count() == total


@given(st.lists(systems, min_size=2, max_size=3))
def test_integration_never_drops_variant_ids(roots):
    variants = [graph(f"v{i}", r) for i, r in enumerate(roots)]
    p = init_platform(variants[0])
    for v in variants[1:]:
        before = {id(n): set(n.variant_set) for n in p.nodes()}
        integrate_variant(p, v)
        after = {id(n): n.variant_set for n in p.nodes()}
        for key, vs in before.items():
            assert vs <= after[key]


def two_variant_platform():
    v1 = graph("v1", system(pay()))
    v2 = graph("v2", system(pay((stmt("audit", "(", ")", ";"),)), klass("Log")))
    return v1, v2, integrate_all([v1, v2])


def test_union_configuration_contains_both_variants():
    v1, v2, p = two_variant_platform()
    fm = synthesize_feature_model(p)
    union = derive_variant(p, Configuration(frozenset(fm.features)), fm, check=False)
    labels = {(n.node_type, n.label, n.tokens) for n in union.nodes()}
    for v in (v1, v2):
        assert {(n.node_type, n.label, n.tokens) for n in v.nodes() if n is not v.root} <= labels


def test_annotation_semantics():
    v1, v2, p = two_variant_platform()
    fm = synthesize_feature_model(p)
    core = Configuration(frozenset({"ROOT", *[f for f, feat in fm.features.items()
                                              if feat.variant_signature == frozenset({"v1", "v2"})]}))
    log = next(n for n in p.nodes() if n.label == "Log")
    names = set(fm.features) | {"F"}
    annotate_feature(p, {log.pid}, "F", names)
    without = derive_variant(p, core, fm, check=False)
    with_f = derive_variant(p, Configuration(core.selected | {"F"}), fm, check=False)
    assert "Log" not in {n.label for n in without.nodes()}
    assert "Log" in {n.label for n in with_f.nodes()}
    before = derive_variant(p, core, fm, check=False)
    annotate_feature(p, {p.root.pid}, "F | !F", names)
    assert derive_variant(p, core, fm, check=False).content_equal(before)
    with pytest.raises(FeatureModelError):
        annotate_feature(p, {log.pid}, "Nope", names)
    with pytest.raises(PlatformError):
        annotate_feature(p, {10_000}, "F", names)


def test_original_variant_derivation_ignores_annotations():
    v1, v2, p = two_variant_platform()
    log = next(n for n in p.nodes() if n.label == "Log")
    annotate_feature(p, {log.pid}, "F", {"F"})
    assert derive_variant(p, "v2").content_equal(v2)


def test_save_load_round_trip():
    v1, v2, p = two_variant_platform()
    annotate_feature(p, {p.root.children[0].pid}, "F1 & !F2", {"F1", "F2"})
    text = save_platform(p)
    again = load_platform(text)
    assert save_platform(again) == text
    assert canonical_form(again) == canonical_form(p)
    assert canonical_form(p) == canonical_form(p)
    other = integrate_all([v1])
    assert canonical_form(other) != canonical_form(p)
    with pytest.raises(PlatformError):
        load_platform('{"variants": []}')


def test_components_carried_and_expanded():
    body = block(stmt("total", "=", "price", "*", "qty", "+", "fee", ";"), stmt("emit", "(", "total", ")", ";"))
    root = system(klass("A", method("void f ( )", body)), klass("B", method("void f ( )", body)))
    g = graph("v1", root)
    new, comps = refactor_graph(g, detect_clones(g))
    assert comps
    p = integrate_all([new], components=comps)
    assert derive_variant(p, "v1").content_equal(g)
    comp = comps[0]
    binding = Binding({k: "z" for k in comp.parameters}, {o: True for o in comp.optional_nodes})
    assert exact_hash(derive_component(p, comp.component_id, binding)) is not None
    with pytest.raises(PlatformError):
        derive_component(p, "missing", Binding())


def test_derive_component_substitutes():
    comp = ConfigurableComponent("K1", stmt(slot_marker("P1"), "=", "1", ";"), ["P1"], frozenset())
    p = init_platform(four_nodes(), [comp])
    assert derive_component(p, "K1", Binding({"P1": "x"})).tokens == ("x", "=", "1", ";")
