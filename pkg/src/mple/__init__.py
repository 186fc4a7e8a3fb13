"""Extracting a multi product line from clone-and-own variants.

The pipeline: parse variants into artifact graphs, detect clones inside each
variant, refactor clone classes into configurable components, mine a merge
order, integrate everything into one annotated platform, synthesize a
feature model, and derive variants back out.
"""

from .clones import CloneClass, CloneType, DetectionConfig, detect_clones
from .components import Binding, ConfigurableComponent, expand_instance, extract_component, refactor_graph
from .conditions import eval_condition, parse_condition
from .errors import MPLError
from .evaluation import EvalConfig, evaluate_pipeline, precision_recall
from .features import Configuration, FeatureModel, synthesize_feature_model, validate_configuration
from .generator import GeneratorConfig, GroundTruth, generate_benchmark, synthesize_seed
from .graph import ArtifactGraph, ArtifactNode, NodeType, parse_generic_tree, serialize_graph
from .javaparse import parse_java_subset
from .mining import compare_variants, mine_taxonomy
from .platform import canonical_form, derive_variant, integrate_all, integrate_variant

__version__ = "0.1.0"
