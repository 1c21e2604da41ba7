"""Config-driven stage runner with a reproducible run manifest."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import __version__
from ._io import atomic_write, sha256_file
from .augmentation import (
    BATCH_FIELDS,
    TranslationBatch,
    append_to_training,
    emit_translation_batch,
    label_histogram,
    load_mappings,
    merge_translations,
    plan_augmentation,
)
from .builders import PromptTemplate, build_encoder_input, build_structured_prompt, build_verbose_prompt, emit_records
from .config import STAGES, CorpusEntry, RunConfig
from .corpus import (
    CorpusId,
    DocumentModel,
    LabelInventory,
    RelationInstance,
    infer_genre,
    load_genre_overrides,
    parse_conllu,
    parse_rels,
)
from .errors import DiscoforgeError
from .evaluation import (
    EvalReport,
    PredictionFile,
    confusion_to_matrix,
    matrix_tsv,
    read_predictions,
    repair_labels,
    score_corpus,
)
from .features import Featurized, feature_table, featurize_corpus, load_stoplist

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class StageError(Exception):
    def __init__(self, stage: str, corpus, cause: Exception):
        self.stage = stage
        self.corpus = corpus
        self.cause = cause
        where = f" [{corpus}]" if corpus else ""
        super().__init__(f"{stage}{where}: {cause}")


@dataclass
class StageRecord:
    inputs: set = field(default_factory=set)
    outputs: set = field(default_factory=set)


class Workspace:
    """Caches parsed inputs across stages of one run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.inventory = LabelInventory.load(cfg.labels)
        self.overrides = load_genre_overrides(cfg.genre_overrides)
        self._rels: dict[CorpusId, list[RelationInstance]] = {}
        self._docs: dict[CorpusId, list[DocumentModel] | None] = {}
        self._feat: dict[CorpusId, list[Featurized]] = {}

    def rels(self, entry: CorpusEntry) -> list[RelationInstance]:
        if entry.corpus not in self._rels:
            self._rels[entry.corpus] = parse_rels(entry.rels, entry.corpus, self.inventory)
        return self._rels[entry.corpus]

    def docs(self, entry: CorpusEntry) -> list[DocumentModel] | None:
        if entry.corpus not in self._docs:
            if entry.conllu is None:
                log.warning("%s: no CoNLL-U file, context and document features come from .rels sentences", entry.corpus)
                self._docs[entry.corpus] = None
            else:
                self._docs[entry.corpus] = parse_conllu(entry.conllu, entry.corpus, self.overrides)
        return self._docs[entry.corpus]

    def stoplist(self, corpus: CorpusId):
        return load_stoplist(self.cfg.stoplists.get(corpus.language))

    def featurized(self, entry: CorpusEntry) -> list[Featurized]:
        if entry.corpus not in self._feat:
            self._feat[entry.corpus] = featurize_corpus(
                self.rels(entry), self.docs(entry), entry.corpus, self.overrides, self.stoplist(entry.corpus)
            )
        return self._feat[entry.corpus]


def _fan_out(cfg: RunConfig, stage: str, fn: Callable, entries):
    """Run ``fn`` per corpus on a bounded pool; results keep input order."""

    def wrapped(entry):
        try:
            return fn(entry)
        except (DiscoforgeError, OSError, ValueError, KeyError) as exc:
            raise StageError(stage, entry.corpus, exc) from exc

    entries = list(entries)
    workers = min(cfg.effective_workers, max(1, len(entries)))
    if workers == 1:
        return [wrapped(e) for e in entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(wrapped, entries))


def stage_validate(ws: Workspace, rec: StageRecord) -> list[str]:
    cfg = ws.cfg
    problems = cfg.validate_paths()
    if problems:
        return problems

    def check(entry: CorpusEntry):
        found = []
        rec.inputs.add(entry.rels)
        try:
            rels = ws.rels(entry)
        except DiscoforgeError as exc:
            return [f"{entry.corpus}: {entry.rels}: {exc}"]
        if entry.conllu is not None:
            rec.inputs.add(entry.conllu)
            try:
                docs = ws.docs(entry)
            except DiscoforgeError as exc:
                return [f"{entry.corpus}: {entry.conllu}: {exc}"]
            known = {d.doc_id for d in docs}
            absent = sorted({r.doc_id for r in rels} - known)
            if absent:
                log.warning("%s: %d document(s) missing from CoNLL-U, will be synthesized", entry.corpus, len(absent))
        unknown = sum(1 for r in rels if r.unknown_label)
        if unknown:
            log.warning("%s: %d instance(s) carry labels outside the inventory", entry.corpus, unknown)
        return found

    for found in _fan_out(cfg, "validate", check, cfg.corpora):
        problems += found
    return problems


def stage_featurize(ws: Workspace, rec: StageRecord) -> None:
    out_dir = ws.cfg.output / "features"

    def run(entry):
        rows = ws.featurized(entry)
        path = atomic_write(out_dir / f"{entry.corpus}.tsv", feature_table((f.instance, f.features) for f in rows))
        return entry, path

    for entry, path in _fan_out(ws.cfg, "featurize", run, ws.cfg.corpora):
        rec.inputs.update(p for p in (entry.rels, entry.conllu) if p)
        rec.outputs.add(path)


def stage_build(ws: Workspace, rec: StageRecord) -> None:
    cfg = ws.cfg
    opts = cfg.build_options
    template = PromptTemplate.load(cfg.template)
    out_dir = cfg.output / "build"

    def run(entry):
        rows = [f for f in ws.featurized(entry) if not f.instance.unknown_label]
        skipped = len(ws.featurized(entry)) - len(rows)
        if skipped:
            log.warning("%s: %d instance(s) with unknown labels left out of the build", entry.corpus, skipped)
        paths = []
        for style in cfg.styles:
            if style == "verbose":
                recs = [build_verbose_prompt(f.instance, f.features, f.context, template, ws.inventory, opts) for f in rows]
            elif style == "structured":
                recs = [build_structured_prompt(f.instance, f.features, f.context, ws.inventory, opts) for f in rows]
            else:
                recs = [build_encoder_input(f.instance, f.features, f.context, opts) for f in rows]
            path = out_dir / f"{entry.corpus}.{style}.{cfg.record_format}"
            paths.append(emit_records(recs, cfg.record_format, path))
        return entry, paths

    for entry, paths in _fan_out(cfg, "build", run, cfg.corpora):
        rec.inputs.update(p for p in (entry.rels, entry.conllu, cfg.template, cfg.labels) if p)
        rec.outputs.update(paths)


def stage_augment(ws: Workspace, rec: StageRecord) -> None:
    cfg = ws.cfg
    if not cfg.augment:
        log.info("augment: no targets configured")
        return
    mappings = {m.target: m for m in load_mappings(cfg.mapping)}
    out_dir = cfg.output / "augment"
    for item in cfg.augment:
        try:
            mapping = mappings.get(item.target)
            if mapping is None:
                raise KeyError(f"no augmentation mapping for target {item.target}")
            target = cfg.corpus(item.target)
            if target is None:
                raise KeyError(f"target {item.target} is not among the configured corpora")
            target_rels = ws.rels(target)
            rec.inputs.add(target.rels)
            sources, with_genre = {}, {}
            for sid in mapping.sources:
                entry = cfg.corpus(sid)
                if entry is None:
                    raise KeyError(f"source {sid} for {item.target} is not among the configured corpora")
                rec.inputs.add(entry.rels)
                sources[sid] = ws.rels(entry)
                with_genre[sid] = [(i, infer_genre(i.doc_id, sid, ws.overrides)) for i in sources[sid]]
            plan = plan_augmentation(
                mapping, with_genre, label_histogram(target_rels), len(target_rels), cfg.seeds.sampling
            )
            stem = str(item.target)
            rec.outputs.add(atomic_write(out_dir / f"{stem}.plan.json", plan.to_json()))
            contexts = None
            if any(f.startswith("context_") for f in cfg.augment_fields):
                contexts = {}
                for sid in mapping.sources:
                    entry = cfg.corpus(sid)
                    for f in ws.featurized(entry):
                        contexts[(sid, f.instance.instance_id)] = f.context
            fields = [f for f in BATCH_FIELDS if f in cfg.augment_fields]
            batch = emit_translation_batch(plan, sources, fields, contexts)
            rec.outputs.add(atomic_write(out_dir / f"{stem}.batch.tsv", batch.to_tsv()))
            if item.translations is not None:
                rec.inputs.add(item.translations)
                done = TranslationBatch.from_tsv(item.translations.read_text(encoding="utf-8"))
                augmented, data = merge_translations(plan, done, sources)
                rec.outputs.add(atomic_write(out_dir / f"{stem}.aug.rels", data))
                combined = out_dir / f"{stem}.train+aug.rels"
                rec.outputs.add(append_to_training(target.rels, augmented, combined))
        except (DiscoforgeError, OSError, ValueError, KeyError) as exc:
            raise StageError("augment", item.target, exc) from exc


def stage_score(ws: Workspace, rec: StageRecord) -> EvalReport | None:
    cfg = ws.cfg
    entries = [e for e in cfg.corpora if e.predictions is not None]
    if not entries:
        log.info("score: no prediction files configured")
        return None

    def run(entry):
        gold = ws.rels(entry)
        pred = read_predictions(entry.predictions)
        labels, repairs = repair_labels(pred.labels, ws.inventory, cfg.seeds.repair)
        ids = [i for i, _ in pred.rows]
        return entry, score_corpus(gold, PredictionFile(tuple(zip(ids, labels)))), repairs

    results = _fan_out(cfg, "score", run, entries)
    scores = {}
    total_repairs = 0
    for entry, score, repairs in results:
        rec.inputs.update((entry.rels, entry.predictions))
        scores[str(entry.corpus)] = score
        total_repairs += repairs
    report = EvalReport.from_scores(scores, cfg.seeds.repair, total_repairs)
    out_dir = cfg.output / "score"
    rec.outputs.add(atomic_write(out_dir / "report.json", report.to_json()))
    counts, norm = confusion_to_matrix(report.confusion, ws.inventory)
    rec.outputs.add(atomic_write(out_dir / "confusion.tsv", matrix_tsv(counts, ws.inventory)))
    rec.outputs.add(atomic_write(out_dir / "confusion.normalized.tsv", matrix_tsv(norm, ws.inventory, "{:.6f}")))
    for key, score in scores.items():
        log.info("%s\t%d/%d\t%s", key, score.correct, score.total, score.display)
    return report


_STAGE_FUNCS = {
    "featurize": stage_featurize,
    "build": stage_build,
    "augment": stage_augment,
    "score": stage_score,
}


def _rel(path: Path, base: Path) -> str:
    return Path(os.path.relpath(Path(path).resolve(), base.resolve())).as_posix()


def _manifest_path(cfg: RunConfig) -> Path:
    return cfg.output / "manifest.json"


def write_manifest(cfg: RunConfig, records: dict[str, StageRecord]) -> Path:
    base = cfg.source.parent if cfg.source else Path.cwd()
    path = _manifest_path(cfg)
    manifest = {"stages": {}}
    if path.exists():
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except ValueError:
            manifest = {"stages": {}}
    config_ref = _rel(cfg.source, base) if cfg.source else None
    manifest.update(
        {
            "tool": "discoforge",
            "version": __version__,
            "config": config_ref,
            "config_digest": cfg.digest,
            "seeds": {"sampling": cfg.seeds.sampling, "repair": cfg.seeds.repair},
        }
    )
    for stage, rec in records.items():
        manifest.setdefault("stages", {})[stage] = {
            "command": f"discoforge {stage} --config {config_ref}",
            "inputs": {_rel(p, base): sha256_file(p) for p in sorted(rec.inputs, key=str)},
            # outputs are keyed relative to the output directory, which also holds the manifest
            "outputs": {_rel(p, cfg.output): sha256_file(p) for p in sorted(rec.outputs, key=str)},
        }
    return atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run(cfg: RunConfig, stage: str = "all") -> int:
    """Execute ``stage`` (or every stage in order for "all"); returns the process exit status."""
    if stage != "all" and stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    stages = list(STAGES) if stage == "all" else [stage]
    try:
        ws = Workspace(cfg)
    except (DiscoforgeError, OSError, ValueError) as exc:
        log.error("setup: %s", exc)
        return EXIT_VALIDATION
    records: dict[str, StageRecord] = {}
    if "validate" not in stages:
        problems = cfg.validate_paths()
        for p in problems:
            log.error("validate: %s", p)
        if problems:
            return EXIT_VALIDATION
    else:
        rec = StageRecord()
        problems = stage_validate(ws, rec)
        for p in problems:
            log.error("validate: %s", p)
        if problems:
            return EXIT_VALIDATION
        records["validate"] = rec
    try:
        for name in stages:
            if name == "validate":
                continue
            rec = StageRecord()
            _STAGE_FUNCS[name](ws, rec)
            records[name] = rec
    except StageError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    write_manifest(cfg, records)
    return EXIT_OK
