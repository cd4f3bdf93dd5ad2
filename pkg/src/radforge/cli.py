"""radforge command line: tree-build, compile, reflect, export, score,
curate-serve.

Exit codes: 1 config, 2 schema, 3 agent transport, 4 gate/quality,
5 internal.
"""
from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from .config import PipelineConfig, build_gateway, load_config
from .errors import EXIT_INTERNAL, RadforgeError
from .exporting import build_export_records, export_manifest, validate_export_file, write_export
from .pipeline import (
    build_tree,
    check_curated,
    compile_samples,
    load_corpora,
    reflect_samples,
    register_echo_reports,
    sampled_reports,
)
from .reasoning import read_samples, write_samples
from .reflection import read_reflections, write_reflections
from .scoring import score_files, write_score_report
from .tree import load_tree, save_tree

logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


def _guarded(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except RadforgeError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)
        except Exception as e:  # noqa: BLE001 - map anything unexpected to the internal code
            click.echo(f"internal error: {e}", err=True)
            sys.exit(EXIT_INTERNAL)

    return wrapper


def _out_dir(config: PipelineConfig) -> Path:
    out = config.resolve(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _write_jsonl(rows, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _prepared(config: PipelineConfig, seed: int | None):
    """Common front half of tree-build/compile: corpora, sample, gateway."""
    if seed is not None:
        config.tree_seed = seed
        config.sample_seed = seed
    corpus_iu, corpus_mimic = load_corpora(config)
    reports = sampled_reports(config, corpus_iu, corpus_mimic)
    gateway = build_gateway(config)
    register_echo_reports(gateway, corpus_iu + corpus_mimic)
    return reports, gateway


@click.group()
def main():
    """Build perception trees, compile reasoning/reflection training data,
    and score generated chest X-ray reports."""


@main.command("tree-build")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the tree and sample seeds.")
@_guarded
def cmd_tree_build(config_path, seed):
    """Construct the perception tree from the sampled corpus."""
    config = load_config(config_path)
    reports, gateway = _prepared(config, seed)
    tree, audit = build_tree(config, reports, gateway)
    out = _out_dir(config)
    save_tree(tree, out / "tree.json")
    _write_jsonl(audit, out / "classify_audit.jsonl")
    by_layer = {}
    for node in tree.nodes.values():
        by_layer[node.layer] = by_layer.get(node.layer, 0) + 1
    click.echo(
        f"tree: {len(tree.nodes)} nodes (per layer: "
        + ", ".join(f"L{layer}={count}" for layer, count in sorted(by_layer.items()))
        + f"), {tree.sentence_count()} sentences ({len(tree.unclassified)} unclassified)"
    )
    click.echo(f"wrote {out / 'tree.json'} and {out / 'classify_audit.jsonl'}")


@main.command("compile")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--tree", "tree_path", type=click.Path(), default=None, help="Tree file (default: <output>/tree.json).")
@click.option("--seed", type=int, default=None)
@click.option("--threshold", type=float, default=None, help="Override the verification gate threshold.")
@_guarded
def cmd_compile(config_path, tree_path, seed, threshold):
    """Compile gated reasoning samples for the construction sample."""
    config = load_config(config_path)
    out = _out_dir(config)
    tree = load_tree(Path(tree_path) if tree_path else out / "tree.json")
    check_curated(config, tree)
    reports, gateway = _prepared(config, seed)
    passed, rejected, manifest = compile_samples(config, tree, reports, gateway, threshold)
    write_samples(passed, out / "samples.jsonl")
    write_samples(rejected, out / "rejects.jsonl")
    _write_json(manifest, out / "compile_manifest.json")
    click.echo(
        f"compiled {manifest['attempted']} reports: {manifest['passed']} passed, "
        f"{manifest['failed']} failed, {manifest['aborted']} aborted"
    )


@main.command("reflect")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--samples", "samples_path", type=click.Path(), default=None, help="Input samples (default: <output>/samples.jsonl).")
@click.option("--seed", type=int, default=None)
@_guarded
def cmd_reflect(config_path, samples_path, seed):
    """Augment verified reasoning samples with reflections."""
    config = load_config(config_path)
    out = _out_dir(config)
    samples = read_samples(Path(samples_path) if samples_path else out / "samples.jsonl")
    corpus_iu, corpus_mimic = load_corpora(config)
    gateway = build_gateway(config)
    register_echo_reports(gateway, corpus_iu + corpus_mimic)
    reflections, manifest = reflect_samples(config, samples, gateway, seed)
    write_reflections(reflections, out / "reflections.jsonl")
    _write_json(manifest, out / "reflect_manifest.json")
    click.echo(
        f"reflected {manifest['in']} samples: {manifest['out']} out, {manifest['skipped']} skipped"
    )


@main.command("export")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--samples", "samples_path", type=click.Path(), default=None)
@click.option("--reflections", "reflections_path", type=click.Path(), default=None)
@click.option(
    "--composition",
    type=click.Choice(["reasoning_only", "reasoning_plus_reflection"]),
    default=None,
    help="Override the configured dataset composition.",
)
@_guarded
def cmd_export(config_path, samples_path, reflections_path, composition):
    """Emit fine-tuning-ready conversation JSONL."""
    config = load_config(config_path)
    out = _out_dir(config)
    mode = composition or config.composition
    samples = read_samples(Path(samples_path) if samples_path else out / "samples.jsonl")
    reflections = []
    if mode == "reasoning_plus_reflection":
        reflections = read_reflections(
            Path(reflections_path) if reflections_path else out / "reflections.jsonl"
        )
    records = build_export_records(samples, reflections, mode)
    export_path = out / "train.jsonl"
    write_export(records, export_path)
    count = validate_export_file(export_path)
    _write_json(
        export_manifest(mode, len(samples), len(reflections), count),
        out / "export_manifest.json",
    )
    click.echo(f"exported {count} records to {export_path} ({mode})")


@main.command("score")
@click.option("--predictions", required=True, type=click.Path())
@click.option("--references", required=True, type=click.Path())
@click.option("--labeler", type=click.Choice(["keyword", "service", "none"]), default="keyword")
@click.option("--service-url", default=None, help="Labeler endpoint when --labeler service.")
@click.option("--uncertain-as", type=click.Choice(["negative", "positive"]), default="negative")
@click.option("--out", "out_dir", type=click.Path(), default="scores", help="Report output directory.")
@_guarded
def cmd_score(predictions, references, labeler, service_url, uncertain_as, out_dir):
    """Score generated reports against references (NLG + CE)."""
    report = score_files(predictions, references, labeler, service_url, uncertain_as)
    paths = write_score_report(report, out_dir)
    nlg = report["nlg"]
    click.echo(
        "nlg: "
        + ", ".join(f"{key}={nlg[key]:.4f}" for key in ("bleu_1", "bleu_4", "meteor", "rouge_l"))
    )
    if report["ce"]:
        ce = report["ce"]
        click.echo(
            f"ce ({report['labeler']}): precision={ce['precision']:.4f} "
            f"recall={ce['recall']:.4f} f_score={ce['f_score']:.4f}"
        )
    click.echo("wrote " + ", ".join(str(p) for p in paths.values()))


@main.command("curate-serve")
@click.option("--tree", "tree_path", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8787)
@click.option("--frontend", "frontend_dir", type=click.Path(), default=None, help="Static UI directory (default: ./frontend/dist when present).")
@_guarded
def cmd_curate_serve(tree_path, host, port, frontend_dir):
    """Serve the curation API (and UI, when built) over a tree file."""
    import uvicorn

    from .service import TreeStore, create_app

    store = TreeStore(tree_path)
    if frontend_dir is None and Path("frontend/dist").is_dir():
        frontend_dir = "frontend/dist"
    app = create_app(store, frontend_dir)
    click.echo(f"serving tree {tree_path} on http://{host}:{port} (UI at /ui)" )
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
