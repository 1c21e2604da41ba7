"""Translate-train augmentation: source selection, translation batches, merging."""

from __future__ import annotations

import json
import logging
import math
import random
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ._io import atomic_write
from .corpus import CorpusId, RelationInstance, TokenSpanSet, parse_rels_text, serialize_rels
from .errors import EmptySupply, IncompleteBatch, MissingInstance, SupplyShortfallWarning, UnknownPredicate
from .features import ContextWindow

log = logging.getLogger(__name__)

RELATIVE_PRONOUNS = frozenset({"which", "who", "that", "whose", "whom"})

BATCH_FIELDS = ("unit1", "unit2", "sent1", "sent2", "context_pre", "context_post")
BATCH_COLUMNS = ("corpus", "instance_id", "field", "source_text", "translated_text")


@dataclass(frozen=True)
class AugmentationMapping:
    target: CorpusId
    sources: tuple[CorpusId, ...]
    genres: frozenset[str] | None  # None admits every genre
    ratio: float = 0.75
    filters: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0 < self.ratio <= 1:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")
        if not self.sources:
            raise ValueError(f"mapping for {self.target} lists no source corpus")
        check_predicates(self.filters)

    def admits(self, genre: str) -> bool:
        return self.genres is None or genre.casefold() in self.genres


def _expand_sources(text: str) -> list[CorpusId]:
    # accepts "a.b.c,d.e.f" and the grouped form "eng.rst.(oll, sts)"
    out = []
    for m in re.finditer(r"([a-z]{3})\.([a-z]+)\.\(([^)]*)\)|([^,\s()]+)", text):
        if m.group(3) is not None:
            for name in m.group(3).split(","):
                out.append(CorpusId(m.group(1), m.group(2), name.strip()))
        else:
            out.append(CorpusId.parse(m.group(4)))
    return out


def _split_columns(line: str) -> list[str]:
    cols = line.split("\t")
    return cols if len(cols) >= 3 else line.split()


def load_mappings(path=None) -> list[AugmentationMapping]:
    """Read the target/source mapping table (tab-separated, '#' comments)."""
    if path is None:
        text = resources.files("discoforge.resources").joinpath("augmentation_mapping.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    out = []
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = _split_columns(line)
        target = CorpusId.parse(cols[0])
        sources = tuple(_expand_sources(cols[1]))
        genre_text = cols[2].strip().casefold()
        genres = None if genre_text == "all" else frozenset(g.strip() for g in genre_text.split(",") if g.strip())
        ratio = float(cols[3]) if len(cols) > 3 and cols[3].strip() else 0.75
        filters = ()
        if len(cols) > 4 and cols[4].strip() not in ("", "-", "_"):
            filters = tuple(f.strip() for f in cols[4].split(",") if f.strip())
        out.append(AugmentationMapping(target, sources, genres, ratio, filters))
    return out


def _relative_clause_unit(inst: RelationInstance, pronouns: frozenset[str]) -> bool:
    for text in (inst.unit1_text, inst.unit2_text):
        words = text.split()
        if words and words[0].casefold() in pronouns:
            return True
    return False


PREDICATES = {"relative_clause_unit": _relative_clause_unit}


def check_predicates(names: Iterable[str]) -> None:
    for name in names:
        if name not in PREDICATES:
            raise UnknownPredicate(f"unknown structural predicate {name!r}; known: {sorted(PREDICATES)}")


def structural_filter(
    inst: RelationInstance, predicates: Sequence[str], pronouns: Iterable[str] = RELATIVE_PRONOUNS
) -> bool:
    """True when no exclusion predicate fires on the instance."""
    check_predicates(predicates)
    pron = frozenset(p.casefold() for p in pronouns)
    return not any(PREDICATES[name](inst, pron) for name in predicates)


def total_quota(ratio: float, target_train_size: int) -> int:
    # round half up; Python's round() would send 0.5 to the even neighbour
    return int(math.floor(ratio * target_train_size + 0.5))


def apportion(histogram: Mapping[str, int], total: int) -> dict[str, int]:
    """Largest-remainder split of ``total`` proportional to ``histogram``.

    Ties on the remainder go to the more frequent label, then to the
    alphabetically first one.
    """
    counts = {k: v for k, v in histogram.items() if v > 0}
    if not counts:
        raise ValueError("label histogram is empty")
    denom = sum(counts.values())
    base = {k: total * v // denom for k, v in counts.items()}
    left = total - sum(base.values())
    order = sorted(counts, key=lambda k: (-(total * counts[k] % denom), -counts[k], k))
    for k in order[:left]:
        base[k] += 1
    return dict(sorted(base.items()))


@dataclass(frozen=True)
class AugmentationPlan:
    mapping: AugmentationMapping
    target_train_size: int
    quota: Mapping[str, int]
    selected: tuple[tuple[CorpusId, int], ...]
    seed: int
    shortfall: Mapping[str, int] = field(default_factory=dict)
    selected_labels: Mapping[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        m = self.mapping
        payload = {
            "mapping": {
                "target": str(m.target),
                "sources": [str(s) for s in m.sources],
                "genres": None if m.genres is None else sorted(m.genres),
                "ratio": m.ratio,
                "filters": list(m.filters),
            },
            "target_train_size": self.target_train_size,
            "seed": self.seed,
            "quota": dict(self.quota),
            "shortfall": dict(self.shortfall),
            "selected_labels": dict(self.selected_labels),
            "selected": [[str(c), i] for c, i in self.selected],
        }
        return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AugmentationPlan":
        d = json.loads(text)
        m = d["mapping"]
        mapping = AugmentationMapping(
            CorpusId.parse(m["target"]),
            tuple(CorpusId.parse(s) for s in m["sources"]),
            None if m["genres"] is None else frozenset(m["genres"]),
            m["ratio"],
            tuple(m["filters"]),
        )
        return cls(
            mapping,
            d["target_train_size"],
            d["quota"],
            tuple((CorpusId.parse(c), i) for c, i in d["selected"]),
            d["seed"],
            d.get("shortfall", {}),
            d.get("selected_labels", {}),
        )


def plan_augmentation(
    mapping: AugmentationMapping,
    source_instances: Mapping[CorpusId, Sequence[tuple[RelationInstance, str]]],
    target_label_histogram: Mapping[str, int],
    target_train_size: int,
    seed: int,
    pronouns: Iterable[str] = RELATIVE_PRONOUNS,
) -> AugmentationPlan:
    """Choose source instances to translate for one target corpus.

    ``source_instances`` maps each source corpus to (instance, genre) pairs.
    Per-label quotas follow the target label distribution; within a label,
    instances are drawn uniformly (seeded) from the pooled admissible
    sources. Labels short of supply take what exists and the gap is logged.
    """
    n_total = total_quota(mapping.ratio, target_train_size)
    quota = apportion(target_label_histogram, n_total)

    pools: dict[str, list[tuple[str, int, CorpusId]]] = {label: [] for label in quota}
    for corpus in mapping.sources:
        if corpus not in source_instances:
            raise MissingInstance(f"no data loaded for source corpus {corpus}")
        for inst, genre in source_instances[corpus]:
            if inst.label not in pools or not mapping.admits(genre):
                continue
            if structural_filter(inst, mapping.filters, pronouns):
                pools[inst.label].append((str(corpus), inst.instance_id, corpus))

    if not any(pools[label] for label, q in quota.items() if q > 0):
        raise EmptySupply(f"no source instance for {mapping.target} passes the genre and structural filters")

    rng = random.Random(seed)
    chosen = []
    shortfall = {}
    taken = {}
    for label in sorted(quota):
        pool = sorted(pools[label])
        want = quota[label]
        take = min(want, len(pool))
        if take < want:
            shortfall[label] = want - take
            msg = f"{mapping.target}: label {label!r} needs {want}, only {len(pool)} source instances available"
            warnings.warn(SupplyShortfallWarning(msg))
        chosen += rng.sample(pool, take)
        taken[label] = take
    chosen.sort()
    return AugmentationPlan(
        mapping=mapping,
        target_train_size=target_train_size,
        quota=quota,
        selected=tuple((corpus, i) for _, i, corpus in chosen),
        seed=seed,
        shortfall=shortfall,
        selected_labels=taken,
    )


@dataclass(frozen=True)
class TranslationRow:
    corpus: CorpusId
    instance_id: int
    field: str
    source_text: str
    translated_text: str | None = None


@dataclass(frozen=True)
class TranslationBatch:
    rows: tuple[TranslationRow, ...]

    def __post_init__(self):
        keys = [(r.corpus, r.instance_id, r.field) for r in self.rows]
        dup = [k for k, n in Counter(keys).items() if n > 1]
        if dup:
            raise ValueError(f"duplicate batch rows: {dup[:5]}")
        bad = {r.field for r in self.rows} - set(BATCH_FIELDS)
        if bad:
            raise ValueError(f"unknown batch field(s): {sorted(bad)}")

    def lookup(self) -> dict[tuple[CorpusId, int, str], TranslationRow]:
        return {(r.corpus, r.instance_id, r.field): r for r in self.rows}

    def to_tsv(self) -> str:
        def clean(text):
            return re.sub(r"[\t\r\n]", " ", text)

        lines = ["\t".join(BATCH_COLUMNS)]
        for r in self.rows:
            cells = [str(r.corpus), str(r.instance_id), r.field, clean(r.source_text), clean(r.translated_text or "")]
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "TranslationBatch":
        lines = [l for l in text.split("\n") if l.strip()]
        if not lines:
            return cls(())
        header = lines[0].rstrip("\r").split("\t")
        col = {name: i for i, name in enumerate(header)}
        missing = [c for c in BATCH_COLUMNS if c not in col]
        if missing:
            raise ValueError(f"translation batch lacks column(s) {missing}")
        rows = []
        for line in lines[1:]:
            cells = line.rstrip("\r").split("\t")
            cells += [""] * (len(header) - len(cells))
            translated = cells[col["translated_text"]]
            rows.append(
                TranslationRow(
                    CorpusId.parse(cells[col["corpus"]]),
                    int(cells[col["instance_id"]]),
                    cells[col["field"]],
                    cells[col["source_text"]],
                    translated if translated.strip() else None,
                )
            )
        return cls(tuple(rows))


def _index_sources(sources: Mapping[CorpusId, Sequence[RelationInstance]]):
    return {(c, inst.instance_id): inst for c, insts in sources.items() for inst in insts}


def emit_translation_batch(
    plan: AugmentationPlan,
    sources: Mapping[CorpusId, Sequence[RelationInstance]],
    fields: Sequence[str] = ("unit1", "unit2", "sent1", "sent2"),
    contexts: Mapping[tuple[CorpusId, int], ContextWindow] | None = None,
) -> TranslationBatch:
    """List every text that needs translating for the planned instances.

    Context fields are only emitted when ``contexts`` is given and the text
    is non-empty.
    """
    fields = [f for f in BATCH_FIELDS if f in fields or (contexts is not None and f.startswith("context_"))]
    index = _index_sources(sources)
    rows = []
    for corpus, iid in sorted(plan.selected, key=lambda k: (str(k[0]), k[1])):
        inst = index.get((corpus, iid))
        if inst is None:
            raise MissingInstance(f"selected instance {corpus}#{iid} not present in loaded source data")
        ctx = contexts.get((corpus, iid)) if contexts is not None else None
        texts = {
            "unit1": inst.unit1_text,
            "unit2": inst.unit2_text,
            "sent1": inst.sent1_text,
            "sent2": inst.sent2_text,
            "context_pre": ctx.pre if ctx else "",
            "context_post": ctx.post if ctx else "",
        }
        for name in fields:
            if texts[name]:
                rows.append(TranslationRow(corpus, iid, name, texts[name]))
    return TranslationBatch(tuple(rows))


def _norm(text: str) -> str:
    return " ".join(text.split())


def merge_translations(
    plan: AugmentationPlan,
    batch: TranslationBatch,
    sources: Mapping[CorpusId, Sequence[RelationInstance]],
) -> tuple[list[RelationInstance], bytes]:
    """Turn a completed batch into new training instances for the plan's target.

    Labels and directions come from the source instance. Each augmented
    instance gets its own ``aug_`` document with contiguous synthetic spans,
    unit 1 first, over the translated token counts.
    """
    found = batch.lookup()
    missing = [
        (str(c), i, f)
        for c, i in plan.selected
        for f in ("unit1", "unit2")
        if not (found.get((c, i, f)) and found[(c, i, f)].translated_text)
    ]
    if missing:
        raise IncompleteBatch(missing)

    index = _index_sources(sources)
    out = []
    for corpus, iid in plan.selected:
        src = index.get((corpus, iid))
        if src is None:
            raise MissingInstance(f"selected instance {corpus}#{iid} not present in loaded source data")

        def tr(name):
            row = found.get((corpus, iid, name))
            return row.translated_text if row and row.translated_text else None

        t1, t2 = _norm(tr("unit1")), _norm(tr("unit2"))
        n1, n2 = len(t1.split()), len(t2.split())
        # a unit that was its whole sentence stays one after translation
        s1 = t1 if _norm(src.sent1_text) == _norm(src.unit1_text) else _norm(tr("sent1") or t1)
        s2 = t2 if _norm(src.sent2_text) == _norm(src.unit2_text) else _norm(tr("sent2") or t2)
        out.append(
            RelationInstance(
                doc_id=f"aug_{src.doc_id}_{corpus.corpus}{iid}",
                unit1_text=t1,
                unit2_text=t2,
                unit1_spans=TokenSpanSet(((1, n1),)),
                unit2_spans=TokenSpanSet(((n1 + 1, n1 + n2),)),
                direction=src.direction,
                label=src.label,
                sent1_text=s1,
                sent2_text=s2,
                orig_label=src.orig_label,
                instance_id=len(out),
            )
        )
    return out, serialize_rels(out)


def append_to_training(train_path, augmented: Sequence[RelationInstance], out_path) -> Path:
    """Write the original training rows followed by the augmented ones to a new file."""
    train_path, out_path = Path(train_path), Path(out_path)
    if out_path.resolve() == train_path.resolve():
        raise ValueError("refusing to overwrite the original training file")
    original = train_path.read_text(encoding="utf-8")
    header = original.split("\n", 1)[0].rstrip("\r").split("\t")
    base = parse_rels_text(original)
    merged = list(base) + [replace(a, instance_id=len(base) + k) for k, a in enumerate(augmented)]
    return atomic_write(out_path, serialize_rels(merged, header))


def label_histogram(instances: Iterable[RelationInstance]) -> dict[str, int]:
    return dict(sorted(Counter(i.label for i in instances).items()))
