import os
import sys

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from mple.graph import ArtifactGraph, ArtifactNode, NodeType, copy_tree
from mple.similarity import clear_cache

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ALPHABET = ("a", "b", "c", "x", "1", "=", ";")


@pytest.fixture(autouse=True)
def _fresh_similarity_cache():
    clear_cache()
    yield


def stmt(*tokens):
    return ArtifactNode(0, NodeType.STATEMENT, "", tuple(tokens))


def block(*children, label=""):
    return ArtifactNode(0, NodeType.BLOCK, label, (), list(children))


def method(label, *children):
    return ArtifactNode(0, NodeType.METHOD, label, (), list(children))


def klass(label, *methods):
    return ArtifactNode(0, NodeType.CLASS, label, (), list(methods))


def system(*children, label="sys"):
    return ArtifactNode(0, NodeType.SYSTEM, label, (), list(children))


def graph(vid, root):
    return ArtifactGraph(vid, copy_tree(root))


statements = st.lists(st.sampled_from(ALPHABET), min_size=1, max_size=5).map(lambda t: stmt(*t))


def blocks(max_depth=2):
    leaf = statements
    if max_depth == 0:
        kids = st.lists(leaf, min_size=0, max_size=4)
    else:
        kids = st.lists(st.one_of(leaf, blocks(max_depth - 1)), min_size=0, max_size=4)
    return st.builds(lambda cs, lab: block(*cs, label=lab), kids, st.sampled_from(["", "if ( a )", "while ( b )"]))


methods = st.builds(
    lambda name, body: method(f"void {name} ( )", body),
    st.sampled_from(["f", "g", "h"]),
    blocks(1),
)

classes = st.builds(
    lambda name, ms: klass(name, *ms),
    st.sampled_from(["A", "B", "C"]),
    st.lists(methods, min_size=1, max_size=3),
)

systems = st.builds(lambda cs: system(*cs), st.lists(classes, min_size=0, max_size=3))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
