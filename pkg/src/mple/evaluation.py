"""Scoring detection against ground truth and running the whole pipeline."""

from __future__ import annotations

import itertools
import random
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .clones import CloneType, DetectionConfig, detect_clones
from .components import expand_all, refactor_graph
from .errors import MPLError, StageError
from .features import synthesize_feature_model, validate_configuration, variant_configuration
from .generator import GroundTruth, read_bundle
from .graph import ArtifactGraph, exact_hash, parse_generic_tree
from .javaparse import parse_java_subset
from .mining import mine_taxonomy
from .platform import canonical_form, derive_variant, integrate_all

try:
    import resource
except ImportError:  # not on every platform
    resource = None


# ----------------------------------------------------------------- metrics

@dataclass
class Counts:
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0

    @property
    def precision(self):
        d = self.true_positives + self.false_positives
        return 1.0 if d == 0 else self.true_positives / d

    @property
    def recall(self):
        d = self.true_positives + self.false_negatives
        return 1.0 if d == 0 else self.true_positives / d

    def __iadd__(self, other):
        self.true_positives += other.true_positives
        self.false_positives += other.false_positives
        self.false_negatives += other.false_negatives
        return self

    def to_dict(self):
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
        }


@dataclass
class Metrics:
    """Counts per (clone_type, granularity) plus aggregates."""

    cells: dict = field(default_factory=lambda: defaultdict(Counts))
    overlap_threshold: float = 0.7

    def total(self, clone_type=None, granularity=None) -> Counts:
        out = Counts()
        for (t, g), c in self.cells.items():
            if clone_type is not None and t is not CloneType(clone_type):
                continue
            if granularity is not None and g is not granularity:
                continue
            out += c
        return out

    @property
    def precision(self):
        return self.total().precision

    @property
    def recall(self):
        return self.total().recall

    def to_dict(self):
        cells = sorted(self.cells.items(), key=lambda kv: (kv[0][0].value, kv[0][1].rank))
        return {
            "overlap_threshold": self.overlap_threshold,
            "cells": [{"clone_type": t.value, "granularity": g.name, **c.to_dict()} for (t, g), c in cells],
            "by_type": {t.value: self.total(t).to_dict() for t in CloneType},
            "overall": self.total().to_dict(),
        }


def _overlap(a, b):
    return len(a & b) / len(a | b)


def match_clone_report(reported, truth: GroundTruth, overlap_threshold: float = 0.7):
    """Greedy one-to-one matching of reported classes to truth records.

    ``reported`` maps variant id to clone classes (a bare list is accepted
    when the truth covers a single variant). Pairs must share variant and
    granularity; they are accepted in order of decreasing member overlap
    (Jaccard), ties broken by the smallest member ids. Returns a list of
    ``(variant_id, clone_class, record, overlap)``.
    """
    if not 0 < overlap_threshold <= 1:
        raise ValueError("overlap_threshold must be in (0, 1]")
    reported = _by_variant(reported, truth)
    candidates = []
    for vid in sorted(reported):
        records = truth.records_for(vid)
        for ci, c in enumerate(reported[vid]):
            for ri, r in enumerate(records):
                if c.granularity is not r.granularity:
                    continue
                ov = _overlap(set(c.members), set(r.members))
                if ov >= overlap_threshold:
                    candidates.append((-ov, min(c.members), min(r.members), vid, ci, ri))
    candidates.sort()
    used_c, used_r, out = set(), set(), []
    for neg, _, _, vid, ci, ri in candidates:
        if (vid, ci) in used_c or (vid, ri) in used_r:
            continue
        used_c.add((vid, ci))
        used_r.add((vid, ri))
        out.append((vid, reported[vid][ci], truth.records_for(vid)[ri], -neg))
    return out


def _by_variant(reported, truth):
    if isinstance(reported, dict):
        return {k: list(v) for k, v in reported.items()}
    vids = {r.variant_id for r in truth.clone_records}
    if len(vids) > 1:
        raise ValueError("a bare list of classes needs a single-variant truth")
    return {(vids.pop() if vids else ""): list(reported)}


def precision_recall(reported, truth: GroundTruth, overlap_threshold: float = 0.7) -> Metrics:
    reported = _by_variant(reported, truth)
    matching = match_clone_report(reported, truth, overlap_threshold)
    metrics = Metrics(overlap_threshold=overlap_threshold)
    matched_c = {(vid, id(c)) for vid, c, _, _ in matching}
    matched_r = {id(r) for _, _, r, _ in matching}
    for _, _, r, _ in matching:
        metrics.cells[(r.clone_type, r.granularity)].true_positives += 1
    for vid, classes in reported.items():
        for c in classes:
            if (vid, id(c)) not in matched_c:
                metrics.cells[(c.clone_type, c.granularity)].false_positives += 1
    for r in truth.clone_records:
        if id(r) not in matched_r:
            metrics.cells[(r.clone_type, r.granularity)].false_negatives += 1
    return metrics


# ----------------------------------------------------------------- pipeline

@dataclass
class EvalConfig:
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    overlap_threshold: float = 0.7
    seed: int = 0
    order: str = "given"
    sampled_permutations: int = 6

    def __post_init__(self):
        if self.order not in ("given", "taxonomy"):
            raise ValueError("order must be 'given' or 'taxonomy'")

    def to_dict(self):
        return {
            "detection": self.detection.to_dict(),
            "overlap_threshold": self.overlap_threshold,
            "seed": self.seed,
            "order": self.order,
        }


@dataclass
class EvalReport:
    metrics: Metrics | None
    roundtrip: dict
    invariance: dict
    platform_artifact_count: int
    sum_variant_artifact_count: int
    runtime: dict = field(default_factory=dict)
    peak_memory: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def roundtrip_ok(self):
        return all(ok for ok, _ in self.roundtrip.values())

    @property
    def artifact_ratio(self):
        return self.platform_artifact_count / self.sum_variant_artifact_count

    def to_dict(self, timings=True):
        doc = {
            "metrics": self.metrics.to_dict() if self.metrics is not None else None,
            "roundtrip": {v: {"ok": ok, "first_diff": diff} for v, (ok, diff) in sorted(self.roundtrip.items())},
            "invariance": self.invariance,
            "platform_artifact_count": self.platform_artifact_count,
            "sum_variant_artifact_count": self.sum_variant_artifact_count,
            **self.extra,
        }
        if timings:
            doc["wall_clock"] = {
                "runtime_seconds": dict(self.runtime),
                "peak_memory_bytes": self.peak_memory,
            }
        return doc

    def summary(self) -> str:
        lines = [
            f"variants round-tripped: {sum(ok for ok, _ in self.roundtrip.values())}/{len(self.roundtrip)}",
            f"order invariance: {self.invariance['all_equal']} "
            f"({self.invariance['permutations_tested']} permutations)",
            f"artifacts: platform {self.platform_artifact_count} vs variants {self.sum_variant_artifact_count}",
        ]
        if self.metrics is not None:
            for t in CloneType:
                c = self.metrics.total(t)
                lines.append(f"{t.value}: precision {c.precision:.3f} recall {c.recall:.3f} "
                             f"(tp {c.true_positives}, fp {c.false_positives}, fn {c.false_negatives})")
        lines.append("runtime: " + ", ".join(f"{k} {v:.2f}s" for k, v in self.runtime.items()))
        if self.peak_memory is not None:
            lines.append(f"peak memory: {self.peak_memory / 2**20:.1f} MiB")
        return "\n".join(lines)


def first_difference(a, b, path="0"):
    """Path (child indices from the root) of the first differing node, or None."""
    if exact_hash(a) == exact_hash(b):
        return None
    if a.key() != b.key() or len(a.children) != len(b.children):
        return path
    for i, (x, y) in enumerate(zip(a.children, b.children)):
        d = first_difference(x, y, f"{path}/{i}")
        if d is not None:
            return d
    return path


def peak_memory_bytes():
    if resource is None:
        return None
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def _load(item, index):
    if isinstance(item, ArtifactGraph):
        return item
    if isinstance(item, Path):
        text = item.read_text(encoding="utf-8")
        if item.suffix == ".java":
            return parse_java_subset(text, item.stem)
        return parse_generic_tree(text)
    if isinstance(item, str):
        if item.lstrip().startswith("{"):
            return parse_generic_tree(item)
        return parse_java_subset(item, f"v{index + 1}")
    raise MPLError(f"cannot read input {index} of type {type(item).__name__}")


class _Stages:
    def __init__(self):
        self.runtime = {}

    def run(self, name, fn, *args):
        start = time.perf_counter()
        try:
            return fn(*args)
        except StageError:
            raise
        except (MPLError, ValueError, KeyError, OSError) as exc:
            raise StageError(name, exc) from exc
        finally:
            self.runtime[name] = self.runtime.get(name, 0.0) + time.perf_counter() - start


def evaluate_pipeline(inputs, config: EvalConfig | None = None, truth: GroundTruth | None = None) -> EvalReport:
    """detect, refactor, taxonomy, integrate, synthesize, derive; then score.

    ``inputs`` is a list of graphs, documents or file paths, or a bundle
    directory (whose truth is then used for scoring).
    """
    config = config or EvalConfig()
    stages = _Stages()

    def parse():
        nonlocal truth
        if isinstance(inputs, (str, Path)) and Path(inputs).is_dir():
            variants, bundle_truth, _ = read_bundle(inputs)
            truth = truth or bundle_truth
            return variants
        variants = [_load(x, i) for i, x in enumerate(inputs)]
        if not variants:
            raise MPLError("no variants given")
        ids = [v.variant_id for v in variants]
        if len(set(ids)) != len(ids):
            raise MPLError(f"duplicate variant ids in {ids}")
        return variants

    variants = stages.run("parse", parse)

    def detect():
        return {v.variant_id: detect_clones(v, config.detection) for v in variants}

    reported = stages.run("detect", detect)

    def refactor():
        out, components, instances = [], {}, 0
        for v in variants:
            r, comps = refactor_graph(v, reported[v.variant_id])
            if not expand_all(r, comps).content_equal(v):
                raise MPLError(f"expanding the refactored {v.variant_id} does not reproduce it")
            instances += sum(1 for n in r.nodes() if n.node_type.name == "INSTANCE_REF")
            out.append(r)
            components.update((c.component_id, c) for c in comps)
        return out, [components[k] for k in sorted(components)], instances

    refactored, components, instance_count = stages.run("refactor", refactor)
    taxonomy = stages.run("taxonomy", mine_taxonomy, refactored)

    def integrate(order):
        return integrate_all(order, taxonomy if config.order == "taxonomy" else None, components)

    platform = stages.run("integrate", integrate, refactored)
    fm = stages.run("synthesize", synthesize_feature_model, platform)

    def derive():
        result = {}
        for v in variants:
            d = derive_variant(platform, v.variant_id)
            diff = first_difference(v.root, d.root)
            ok, _ = validate_configuration(fm, variant_configuration(fm, v.variant_id))
            result[v.variant_id] = (diff is None and ok, diff)
        return result

    roundtrip = stages.run("derive", derive)

    def invariance():
        base = canonical_form(platform)
        if len(refactored) <= 4:
            perms = list(itertools.permutations(refactored))
        else:
            rng = random.Random(config.seed)
            perms = [rng.sample(refactored, len(refactored)) for _ in range(config.sampled_permutations)]
        equal = all(canonical_form(integrate_all(p, None, components)) == base for p in perms)
        return {"permutations_tested": len(perms), "all_equal": equal}

    inv = stages.run("invariance", invariance)

    metrics = None
    if truth is not None:
        metrics = stages.run("score", precision_recall, reported, truth, config.overlap_threshold)

    return EvalReport(
        metrics,
        roundtrip,
        inv,
        platform.node_count() + sum(c.template.size() for c in components),
        sum(len(v) for v in variants),
        stages.runtime,
        peak_memory_bytes(),
        {
            "config": config.to_dict(),
            "clone_classes": sum(len(c) for c in reported.values()),
            "components": len(components),
            "component_instances": instance_count,
            "features": len(fm.features) - 1,
            "constraints": len(fm.constraints),
            "merge_order": list(taxonomy.merge_order),
        },
    )
