"""Command-line entry point: ``discoforge <command> ...``."""

from __future__ import annotations

import argparse
import logging
import re
import sys
import warnings
from pathlib import Path

from . import __version__
from ._io import atomic_write
from .augmentation import (
    BATCH_FIELDS,
    AugmentationPlan,
    TranslationBatch,
    append_to_training,
    emit_translation_batch,
    label_histogram,
    load_mappings,
    merge_translations,
    plan_augmentation,
)
from .builders import (
    PromptTemplate,
    build_encoder_input,
    build_structured_prompt,
    build_verbose_prompt,
    emit_records,
)
from .config import load_config
from .corpus import CorpusId, LabelInventory, infer_genre, load_genre_overrides, parse_conllu, parse_rels
from .errors import ConfigError, DiscoforgeError
from .evaluation import (
    EvalReport,
    PredictionFile,
    ablation_table,
    confusion_to_matrix,
    matrix_tsv,
    read_predictions,
    repair_labels,
    score_corpus,
)
from .features import feature_table, featurize_corpus, load_stoplist
from .pipeline import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, run
from .pruning import block_influence, default_protected, load_manifest, select_prune_layers

log = logging.getLogger("discoforge")


class UsageError(Exception):
    pass


def corpus_from_path(path, explicit: str | None = None) -> CorpusId:
    if explicit:
        return CorpusId.parse(explicit)
    m = re.match(r"([a-z]{3}\.[a-z]+\.[a-z0-9]+)", Path(path).name)
    if not m:
        raise UsageError(f"cannot infer corpus id from {path}; pass --corpus")
    return CorpusId.parse(m.group(1))


def _source_arg(text: str) -> tuple[CorpusId, Path, Path | None]:
    # ID=RELS or ID=RELS,CONLLU
    cid, eq, paths = text.partition("=")
    if not eq:
        raise argparse.ArgumentTypeError(f"expected CORPUS=RELS[,CONLLU], got {text!r}")
    rels, _, conllu = paths.partition(",")
    return CorpusId.parse(cid), Path(rels), Path(conllu) if conllu else None


def _load_sources(specs):
    return {cid: parse_rels(rels, cid) for cid, rels, _ in specs}


def cmd_validate(args) -> int:
    if args.config:
        return run(load_config(args.config, args.set), "validate")
    if not args.rels:
        raise UsageError("validate needs --rels or --config")
    inventory = LabelInventory.load(args.labels)
    errors = []
    rels = []
    try:
        rels = parse_rels(args.rels, None, inventory)
    except DiscoforgeError as exc:
        errors.append(f"{args.rels}: {exc}")
    if args.conllu:
        try:
            docs = parse_conllu(args.conllu)
            missing = sorted({r.doc_id for r in rels} - {d.doc_id for d in docs})
            for doc in missing:
                print(f"warning: {args.rels}: document {doc} not found in {args.conllu}")
        except DiscoforgeError as exc:
            errors.append(f"{args.conllu}: {exc}")
    for r in rels:
        if r.unknown_label:
            print(f"warning: {args.rels}: instance {r.instance_id}: label {r.label!r} not in inventory")
    for e in errors:
        print(f"error: {e}")
    if errors:
        return EXIT_VALIDATION
    print(f"ok: {len(rels)} instances")
    return EXIT_OK


def _featurize_single(args):
    corpus = corpus_from_path(args.rels, args.corpus)
    overrides = load_genre_overrides(args.genre_overrides)
    rels = parse_rels(args.rels, corpus, LabelInventory.load(args.labels))
    docs = parse_conllu(args.conllu, corpus, overrides) if args.conllu else None
    if docs is None:
        log.warning("%s: no CoNLL-U file, using .rels sentence columns for context", corpus)
    return featurize_corpus(rels, docs, corpus, overrides, load_stoplist(args.stoplist))


def cmd_featurize(args) -> int:
    if args.config:
        return run(load_config(args.config, args.set), "featurize")
    if not (args.rels and args.out):
        raise UsageError("featurize needs --rels and --out (or --config)")
    rows = _featurize_single(args)
    atomic_write(args.out, feature_table((f.instance, f.features) for f in rows))
    print(f"wrote {len(rows)} feature rows to {args.out}")
    return EXIT_OK


def cmd_build(args) -> int:
    if args.config:
        return run(load_config(args.config, args.set), "build")
    if not (args.rels and args.out and args.style):
        raise UsageError("build needs --style, --rels and --out (or --config)")
    inventory = LabelInventory.load(args.labels)
    rows = [f for f in _featurize_single(args) if not f.instance.unknown_label]
    if args.style == "verbose":
        tpl = PromptTemplate.load(args.template)
        records = [build_verbose_prompt(f.instance, f.features, f.context, tpl, inventory) for f in rows]
    elif args.style == "structured":
        records = [build_structured_prompt(f.instance, f.features, f.context, inventory) for f in rows]
    else:
        records = [build_encoder_input(f.instance, f.features, f.context) for f in rows]
    emit_records(records, args.format, args.out)
    print(f"wrote {len(records)} {args.style} records to {args.out}")
    return EXIT_OK


def cmd_augment(args) -> int:
    if args.config:
        return run(load_config(args.config, args.set), "augment")
    if args.action == "plan":
        if not (args.target and args.target_rels and args.source and args.out):
            raise UsageError("augment plan needs --target, --target-rels, --source and --out")
        target = CorpusId.parse(args.target)
        mappings = {m.target: m for m in load_mappings(args.mapping)}
        if target not in mappings:
            raise UsageError(f"no mapping for {target} in {args.mapping or 'the default mapping'}")
        overrides = load_genre_overrides(args.genre_overrides)
        target_rels = parse_rels(args.target_rels, target)
        sources = {
            cid: [(i, infer_genre(i.doc_id, cid, overrides)) for i in insts]
            for cid, insts in _load_sources(args.source).items()
        }
        plan = plan_augmentation(mappings[target], sources, label_histogram(target_rels), len(target_rels), args.seed)
        atomic_write(args.out, plan.to_json())
        print(f"planned {len(plan.selected)} instances for {target} (quota {sum(plan.quota.values())})")
        return EXIT_OK
    if args.action == "emit":
        if not (args.plan and args.source and args.out):
            raise UsageError("augment emit needs --plan, --source and --out")
        plan = AugmentationPlan.from_json(Path(args.plan).read_text(encoding="utf-8"))
        sources = _load_sources(args.source)
        contexts = None
        fields = args.fields.split(",") if args.fields else ["unit1", "unit2", "sent1", "sent2"]
        if any(f.startswith("context_") for f in fields):
            contexts = {}
            overrides = load_genre_overrides(args.genre_overrides)
            for cid, rels_path, conllu in args.source:
                docs = parse_conllu(conllu, cid, overrides) if conllu else None
                for f in featurize_corpus(sources[cid], docs, cid, overrides):
                    contexts[(cid, f.instance.instance_id)] = f.context
        bad = [f for f in fields if f not in BATCH_FIELDS]
        if bad:
            raise UsageError(f"unknown batch field(s) {bad}")
        batch = emit_translation_batch(plan, sources, fields, contexts)
        atomic_write(args.out, batch.to_tsv())
        print(f"wrote {len(batch.rows)} rows to {args.out}")
        return EXIT_OK
    if args.action == "merge":
        if not (args.plan and args.batch and args.source and args.out):
            raise UsageError("augment merge needs --plan, --batch, --source and --out")
        plan = AugmentationPlan.from_json(Path(args.plan).read_text(encoding="utf-8"))
        batch = TranslationBatch.from_tsv(Path(args.batch).read_text(encoding="utf-8"))
        augmented, data = merge_translations(plan, batch, _load_sources(args.source))
        atomic_write(args.out, data)
        print(f"wrote {len(augmented)} augmented instances to {args.out}")
        if args.train:
            combined = args.combined_out or Path(args.out).with_suffix(".train+aug.rels")
            append_to_training(args.train, augmented, combined)
            print(f"wrote training file with augmentation to {combined}")
        return EXIT_OK
    raise UsageError("augment needs an action (plan, emit, merge) or --config")


def cmd_prune_select(args) -> int:
    dumps = load_manifest(args.manifest)
    scores = [block_influence(d) for d in dumps]
    if args.protect is None:
        protected = default_protected(max(d.layer_index for d in dumps) + 1)
    else:
        protected = {int(x) for x in args.protect.split(",") if x.strip()}
    print("rank\tlayer\tinfluence\tprotected")
    ranked = sorted(scores, key=lambda s: (s.influence, s.layer_index))
    for rank, s in enumerate(ranked, start=1):
        print(f"{rank}\t{s.layer_index}\t{s.influence:.6f}\t{'yes' if s.layer_index in protected else 'no'}")
    chosen = select_prune_layers(scores, args.k, protected)
    print("selected: " + ",".join(str(i) for i in chosen))
    return EXIT_OK


def cmd_score(args) -> int:
    if args.config:
        return run(load_config(args.config, args.set), "score")
    if not (args.gold and args.pred):
        raise UsageError("score needs --gold and --pred (or --config)")
    corpus = corpus_from_path(args.gold, args.corpus)
    inventory = LabelInventory.load(args.labels)
    gold = parse_rels(args.gold, corpus, inventory)
    pred = read_predictions(args.pred)
    labels, repairs = repair_labels(pred.labels, inventory, args.seed)
    score = score_corpus(gold, PredictionFile(tuple(zip((i for i, _ in pred.rows), labels))))
    report = EvalReport.from_scores({str(corpus): score}, args.seed, repairs)
    print(f"{corpus}\t{score.correct}/{score.total}\t{score.display}\trepaired={repairs}")
    out = Path(args.out) if args.out else Path(args.pred).with_suffix(".report.json")
    atomic_write(out, report.to_json())
    counts, norm = confusion_to_matrix(report.confusion, inventory)
    atomic_write(out.with_suffix(".confusion.tsv"), matrix_tsv(counts, inventory))
    atomic_write(out.with_suffix(".confusion.normalized.tsv"), matrix_tsv(norm, inventory, "{:.6f}"))
    return EXIT_OK


def _load_reports(path) -> EvalReport:
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise UsageError(f"no report files in {path}")
        return EvalReport.merge([EvalReport.from_json(f.read_text(encoding="utf-8")) for f in files])
    return EvalReport.from_json(path.read_text(encoding="utf-8"))


def cmd_report(args) -> int:
    baseline = _load_reports(args.baseline)
    ablations = {}
    for item in args.ablated:
        name, eq, path = item.partition("=")
        if not eq:
            name, path = Path(item).stem, item
        ablations[name] = _load_reports(path)
    table = ablation_table(baseline, ablations)
    if args.out:
        atomic_write(args.out, table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_all(args) -> int:
    if not args.config:
        raise UsageError("all needs --config")
    return run(load_config(args.config, args.set), "all")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="discoforge", description=__doc__)
    p.add_argument("--version", action="version", version=f"discoforge {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", type=Path, help="YAML run config; runs this stage for every configured corpus")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config value")
        return sp

    def corpus_inputs(sp):
        sp.add_argument("--rels", type=Path)
        sp.add_argument("--conllu", type=Path)
        sp.add_argument("--corpus", help="corpus id; inferred from the file name when omitted")
        sp.add_argument("--labels", type=Path, help="label inventory file (default: packaged 17 labels)")
        sp.add_argument("--stoplist", type=Path)
        sp.add_argument("--genre-overrides", type=Path)

    sp = with_config(sub.add_parser("validate", help="check .rels/.conllu structure"))
    sp.add_argument("--rels", type=Path)
    sp.add_argument("--conllu", type=Path)
    sp.add_argument("--labels", type=Path)
    sp.set_defaults(func=cmd_validate)

    sp = with_config(sub.add_parser("featurize", help="write one feature row per instance"))
    corpus_inputs(sp)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_featurize)

    sp = with_config(sub.add_parser("build", help="render prompts or encoder inputs"))
    corpus_inputs(sp)
    sp.add_argument("--style", choices=("verbose", "structured", "encoder"))
    sp.add_argument("--template", type=Path)
    sp.add_argument("--format", choices=("jsonl", "tsv"), default="jsonl")
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_build)

    sp = with_config(sub.add_parser("augment", help="plan, emit and merge translate-train data"))
    sp.add_argument("action", nargs="?", choices=("plan", "emit", "merge"))
    sp.add_argument("--mapping", type=Path)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--target")
    sp.add_argument("--target-rels", type=Path)
    sp.add_argument("--source", type=_source_arg, action="append", metavar="CORPUS=RELS[,CONLLU]")
    sp.add_argument("--genre-overrides", type=Path)
    sp.add_argument("--plan", type=Path)
    sp.add_argument("--batch", type=Path)
    sp.add_argument("--fields", help=f"comma-separated subset of {','.join(BATCH_FIELDS)}")
    sp.add_argument("--train", type=Path, help="target training .rels to extend (written to a new file)")
    sp.add_argument("--combined-out", type=Path)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("prune-select", help="rank layers by block influence and pick the ones to drop")
    sp.add_argument("--manifest", type=Path, required=True)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--protect", help="comma-separated layer indices (default: first and last)")
    sp.set_defaults(func=cmd_prune_select)

    sp = with_config(sub.add_parser("score", help="score predictions against gold .rels"))
    sp.add_argument("--gold", type=Path)
    sp.add_argument("--pred", type=Path)
    sp.add_argument("--corpus")
    sp.add_argument("--labels", type=Path)
    sp.add_argument("--seed", type=int, default=0, help="seed for repairing invalid labels")
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("report", help="ablation table from score reports")
    sp.add_argument("--baseline", type=Path, required=True)
    sp.add_argument("--ablated", action="append", required=True, metavar="[NAME=]PATH")
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_report)

    sp = with_config(sub.add_parser("all", help="run every stage from a config"))
    sp.set_defaults(func=cmd_all)
    return p


def _short_warning(message, category, filename, lineno, line=None):
    return f"{category.__name__}: {message}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    warnings.formatwarning = _short_warning
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DiscoforgeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
