"""Command-line entry point: ``mple <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .clones import CloneClass, DetectionConfig, clone_report, detect_clones
from .components import ConfigurableComponent, refactor_graph
from .errors import GraphParseError, MPLError
from .evaluation import EvalConfig, evaluate_pipeline
from .features import Configuration, read_feature_model, synthesize_feature_model, write_feature_model
from .generator import GeneratorConfig, generate_benchmark, synthesize_seed, write_bundle
from .graph import ArtifactGraph, graph_from_dict, graph_to_dict, serialize_graph
from .javaparse import parse_java_subset
from .mining import mine_taxonomy
from .platform import derive_variant, integrate_all, load_platform, save_platform


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MPLError(f"cannot read {path}: {exc.strerror}") from None


def _read_variant(path, variant_id=None):
    """A graph plus any components stored alongside it (refactoring documents)."""
    text = _read_text(path)
    if str(path).endswith(".java"):
        return parse_java_subset(text, variant_id or Path(path).stem), []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from None
    components = []
    if isinstance(data, dict) and "variant" in data:
        graph = graph_from_dict(data["variant"])
        components = [ConfigurableComponent.from_dict(c) for c in data.get("components", [])]
    else:
        graph = graph_from_dict(data)
    if variant_id:
        graph = ArtifactGraph(variant_id, graph.root)
    return graph, components


def _detection(args) -> DetectionConfig:
    try:
        return DetectionConfig(similarity_threshold=args.theta, min_tokens=args.min_tokens)
    except ValueError as exc:
        raise MPLError(str(exc)) from None


def cmd_parse(args):
    graph, _ = _read_variant(args.input, args.variant_id)
    _emit(serialize_graph(graph), args.output)


def cmd_detect(args):
    graph, _ = _read_variant(args.input)
    config = _detection(args)
    _emit(_dump(clone_report(graph, detect_clones(graph, config), config)), args.output)


def cmd_refactor(args):
    graph, _ = _read_variant(args.input)
    if args.report:
        classes = [CloneClass.from_dict(c) for c in json.loads(_read_text(args.report))["classes"]]
    else:
        classes = detect_clones(graph, _detection(args))
    new_graph, components = refactor_graph(graph, classes)
    _emit(_dump({"variant": graph_to_dict(new_graph),
                 "components": [c.to_dict() for c in components]}), args.output)


def cmd_taxonomy(args):
    variants = [_read_variant(p)[0] for p in args.inputs]
    _emit(_dump(mine_taxonomy(variants).to_dict()), args.output)


def cmd_integrate(args):
    variants, components = [], {}
    for p in args.inputs:
        g, comps = _read_variant(p)
        variants.append(g)
        components.update((c.component_id, c) for c in comps)
    taxonomy = mine_taxonomy(variants) if args.order == "taxonomy" else None
    platform = integrate_all(variants, taxonomy, [components[k] for k in sorted(components)])
    _emit(save_platform(platform), args.output)


def cmd_synthesize(args):
    platform = load_platform(_read_text(args.platform))
    _emit(write_feature_model(synthesize_feature_model(platform)), args.output)


def cmd_derive(args):
    platform = load_platform(_read_text(args.platform))
    if args.variant:
        graph = derive_variant(platform, args.variant)
    else:
        fm = read_feature_model(_read_text(args.fm)) if args.fm else None
        config = Configuration.from_dict(json.loads(_read_text(args.config)))
        graph = derive_variant(platform, config, fm)
    _emit(serialize_graph(graph), args.output)


def cmd_generate(args):
    if args.seed_graph:
        seed = _read_variant(args.seed_graph)[0]
    else:
        seed = synthesize_seed(args.seed, args.nodes, min_tokens=args.min_tokens)
    try:
        config = GeneratorConfig(
            variant_count=args.variants,
            clones_per_variant={"TYPE1": args.type1, "TYPE2": args.type2, "TYPE3": args.type3},
            type3_max_edits=args.max_edits,
            variant_mutation_rate=args.rate,
            rng_seed=args.seed,
            min_tokens=args.min_tokens,
        )
    except ValueError as exc:
        raise MPLError(str(exc)) from None
    variants, truth = generate_benchmark(seed, config)
    write_bundle(args.output, variants, truth, config)
    print(f"wrote {len(variants)} variants and {len(truth.clone_records)} clone records to {args.output}",
          file=sys.stderr)


def cmd_evaluate(args):
    try:
        config = EvalConfig(_detection(args), args.overlap, args.seed, args.order)
    except ValueError as exc:
        raise MPLError(str(exc)) from None
    if len(args.inputs) == 1 and Path(args.inputs[0]).is_dir():
        source = Path(args.inputs[0])
    else:
        source = [Path(p) for p in args.inputs]
    report = evaluate_pipeline(source, config)
    _emit(_dump(report.to_dict()), args.output)
    print(report.summary(), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mple", description="Clone-and-own variants to a product line.")
    sub = parser.add_subparsers(dest="command", required=True)

    def detection_flags(p):
        p.add_argument("--theta", type=float, default=0.75, help="similarity threshold (default 0.75)")
        p.add_argument("--min-tokens", type=int, default=8, help="smallest clone candidate (default 8)")

    def out_flag(p):
        p.add_argument("-o", "--output", help="write here instead of stdout")

    p = sub.add_parser("parse", help="read Java-subset source or a graph document")
    p.add_argument("input")
    p.add_argument("--variant-id")
    out_flag(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("detect", help="report clone classes of one variant")
    p.add_argument("input")
    detection_flags(p)
    out_flag(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("refactor", help="extract configurable components")
    p.add_argument("input")
    p.add_argument("--report", help="clone report to use instead of detecting")
    detection_flags(p)
    out_flag(p)
    p.set_defaults(func=cmd_refactor)

    p = sub.add_parser("taxonomy", help="similarity matrix and merge order")
    p.add_argument("inputs", nargs="+")
    out_flag(p)
    p.set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("integrate", help="merge variants into a platform")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--order", choices=("given", "taxonomy"), default="given")
    out_flag(p)
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("synthesize", help="feature model of a platform")
    p.add_argument("platform")
    out_flag(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("derive", help="derive a variant from a platform")
    p.add_argument("platform")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--variant")
    which.add_argument("--config", help="configuration document")
    p.add_argument("--fm", help="feature model to validate against (default: synthesized)")
    out_flag(p)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("generate", help="synthetic benchmark bundle")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--seed-graph", help="start from this program instead of a synthesized one")
    p.add_argument("--nodes", type=int, default=500)
    p.add_argument("--variants", type=int, default=1)
    p.add_argument("--type1", type=int, default=0)
    p.add_argument("--type2", type=int, default=0)
    p.add_argument("--type3", type=int, default=0)
    p.add_argument("--max-edits", type=int, default=2)
    p.add_argument("--rate", type=float, default=0.2, help="variant mutation rate")
    p.add_argument("--min-tokens", type=int, default=8)
    p.add_argument("-o", "--output", required=True, help="bundle directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="run and score the whole pipeline")
    p.add_argument("inputs", nargs="+", help="a bundle directory or variant files")
    detection_flags(p)
    p.add_argument("--overlap", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--order", choices=("given", "taxonomy"), default="given")
    out_flag(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        args.func(args)
    except MPLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: malformed document: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
