"""Instance-level features: LCF identity, DiscoDisco features, direction markers, context."""

from __future__ import annotations

import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import (
    CorpusId,
    Direction,
    DocumentModel,
    RelationInstance,
    TokenSpanSet,
    infer_genre,
    synthesize_documents,
    with_genre,
)
from .errors import DocMismatch, SentenceNotFoundWarning

DISCONTINUITY_MARK = "<*>"

# frameworks whose .rels rows list only related argument pairs, not a segmentation
_PAIR_ONLY_FRAMEWORKS = {"pdtb", "iso"}


@dataclass(frozen=True)
class FeatureVector:
    lcf: CorpusId
    genre: str
    children_u1: int | None
    children_u2: int | None
    discontinuous_u1: bool
    discontinuous_u2: bool
    is_sentence_u1: bool
    is_sentence_u2: bool
    length_ratio: float
    same_speaker: bool | None  # None: no speaker annotation
    doc_length: int
    position: float
    distance: int
    lexical_overlap: int


@dataclass(frozen=True)
class ContextWindow:
    pre: str
    focal: str
    post: str


@dataclass(frozen=True)
class UnitInventory:
    """All argument spans seen in one document, plus head-of-relation counts."""

    units: tuple[TokenSpanSet, ...]
    head_counts: Mapping[TokenSpanSet, int]

    @property
    def is_flat(self) -> bool:
        return not any(a.end >= b.start for a, b in zip(self.units, self.units[1:]))

    def between(self, u1: TokenSpanSet, u2: TokenSpanSet) -> int:
        first, second = sorted((u1, u2), key=lambda u: (u.start, u.end))
        return sum(1 for u in self.units if u.start > first.end and u.end < second.start)


def build_unit_index(instances: Iterable[RelationInstance]) -> dict[str, UnitInventory]:
    spans: dict[str, set] = defaultdict(set)
    heads: dict[str, Counter] = defaultdict(Counter)
    for inst in instances:
        spans[inst.doc_id].update((inst.unit1_spans, inst.unit2_spans))
        # in "1>2" the first unit points at the second, which is the head
        head = inst.unit2_spans if inst.direction is Direction.FORWARD else inst.unit1_spans
        heads[inst.doc_id][head] += 1
    return {
        doc: UnitInventory(tuple(sorted(units, key=lambda u: (u.start, u.end))), dict(heads[doc]))
        for doc, units in spans.items()
    }


def load_stoplist(path) -> frozenset[str]:
    if path is None:
        return frozenset()
    words = Path(path).read_text(encoding="utf-8").split("\n")
    return frozenset(w.strip().casefold() for w in words if w.strip())


def _norm(text: str) -> str:
    return " ".join(text.split())


def _is_sentence(unit_text: str, unit_spans: TokenSpanSet, sent_text: str, sent_spans: TokenSpanSet | None) -> bool:
    if sent_spans is not None:
        return unit_spans == sent_spans
    return bool(sent_text) and _norm(unit_text) == _norm(sent_text)


def _types(text: str, stoplist: frozenset[str]) -> set[str]:
    # punctuation-only tokens are not words; the discontinuity mark falls out here too
    return {w for w in text.casefold().split() if any(c.isalnum() for c in w) and w not in stoplist}


def _speaker_at(doc: DocumentModel, token: int) -> str | None:
    i = doc.sentence_index_of(token)
    return None if i is None else doc.sentences[i].speaker


def _sentence_boundaries_between(doc: DocumentModel, u1: TokenSpanSet, u2: TokenSpanSet) -> int:
    first, second = sorted((u1, u2), key=lambda u: (u.start, u.end))
    return sum(1 for s in doc.sentences if s.end is not None and first.end <= s.end < second.start)


def compute_features(
    instance: RelationInstance,
    doc: DocumentModel,
    corpus: CorpusId,
    unit_index: Mapping[str, UnitInventory] | UnitInventory | None = None,
    stoplist: frozenset[str] = frozenset(),
) -> FeatureVector:
    if instance.doc_id != doc.doc_id:
        raise DocMismatch(f"instance belongs to {instance.doc_id!r}, document is {doc.doc_id!r}")
    u1, u2 = instance.unit1_spans, instance.unit2_spans

    inventory = unit_index
    if isinstance(unit_index, Mapping):
        inventory = unit_index.get(doc.doc_id)

    if inventory is not None:
        children_u1 = inventory.head_counts.get(u1, 0)
        children_u2 = inventory.head_counts.get(u2, 0)
    else:
        children_u1 = children_u2 = None

    if inventory is not None and inventory.is_flat and corpus.framework not in _PAIR_ONLY_FRAMEWORKS:
        distance = inventory.between(u1, u2)
    else:
        distance = _sentence_boundaries_between(doc, u1, u2)

    if doc.has_speakers:
        s1, s2 = _speaker_at(doc, u1.start), _speaker_at(doc, u2.start)
        same_speaker = None if s1 is None or s2 is None else s1 == s2
    else:
        same_speaker = None

    doc_length = doc.token_count
    position = (u1.start - 1) / doc_length if doc_length else 0.0
    position = min(1.0, max(0.0, position))

    stop = frozenset(w.casefold() for w in stoplist)
    overlap = len(_types(instance.unit1_text, stop) & _types(instance.unit2_text, stop))

    return FeatureVector(
        lcf=corpus,
        genre=doc.genre,
        children_u1=children_u1,
        children_u2=children_u2,
        discontinuous_u1=u1.discontinuous(),
        discontinuous_u2=u2.discontinuous(),
        is_sentence_u1=_is_sentence(instance.unit1_text, u1, instance.sent1_text, instance.sent1_spans),
        is_sentence_u2=_is_sentence(instance.unit2_text, u2, instance.sent2_text, instance.sent2_spans),
        length_ratio=u1.token_count / u2.token_count,
        same_speaker=same_speaker,
        doc_length=doc_length,
        position=position,
        distance=distance,
        lexical_overlap=overlap,
    )


def mark_direction(arg1_text: str, direction: Direction) -> str:
    """Wrap the first argument in the pseudo-directional markers.

    Forward relations get ``} ... >``; backward ones the mirrored ``{ ... <``.
    """
    if not arg1_text.strip():
        raise ValueError("argument text must be non-empty")
    if direction is Direction.FORWARD:
        return f"}} {arg1_text} >"
    return f"{{ {arg1_text} <"


def strip_direction(marked: str) -> tuple[str, Direction]:
    if marked.startswith("} ") and marked.endswith(" >"):
        return marked[2:-2], Direction.FORWARD
    if marked.startswith("{ ") and marked.endswith(" <"):
        return marked[2:-2], Direction.BACKWARD
    raise ValueError(f"no direction markers in {marked!r}")


def _find_by_text(doc: DocumentModel, text: str, start: int = 0) -> int | None:
    target = _norm(text)
    if not target:
        return None
    for i in range(start, len(doc.sentences)):
        if _norm(doc.sentences[i].text) == target:
            return i
    return None


def _locate(doc: DocumentModel, instance: RelationInstance) -> tuple[int, int] | None:
    first = doc.sentence_index_of(min(instance.unit1_spans.start, instance.unit2_spans.start))
    last = doc.sentence_index_of(max(instance.unit1_spans.end, instance.unit2_spans.end))
    if first is not None and last is not None:
        return first, last
    a = _find_by_text(doc, instance.sent1_text)
    if a is None:
        return None
    b = _find_by_text(doc, instance.sent2_text, a)
    if b is None:
        b = _find_by_text(doc, instance.sent2_text)
    if b is None:
        return None
    return min(a, b), max(a, b)


def extract_context(instance: RelationInstance, doc: DocumentModel) -> ContextWindow:
    """Preceding sentence, the sentences spanning both arguments, and the following sentence."""
    located = _locate(doc, instance)
    if located is None:
        warnings.warn(
            SentenceNotFoundWarning(f"{instance.doc_id}#{instance.instance_id}: argument sentences not found")
        )
        parts = [instance.sent1_text]
        if _norm(instance.sent2_text) != _norm(instance.sent1_text):
            parts.append(instance.sent2_text)
        return ContextWindow("", " ".join(p for p in parts if p), "")
    lo, hi = located
    sents = doc.sentences
    pre = sents[lo - 1].text if lo > 0 else ""
    post = sents[hi + 1].text if hi + 1 < len(sents) else ""
    focal = " ".join(s.text for s in sents[lo : hi + 1])
    return ContextWindow(pre, focal, post)


FEATURE_COLUMNS = (
    "instance_id",
    "doc",
    "lcf",
    "genre",
    "children_u1",
    "children_u2",
    "discontinuous_u1",
    "discontinuous_u2",
    "is_sentence_u1",
    "is_sentence_u2",
    "length_ratio",
    "same_speaker",
    "doc_length",
    "position",
    "distance",
    "lexical_overlap",
    "dir",
    "label",
)


def _cell(value) -> str:
    if value is None:
        return "_"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def feature_row(instance: RelationInstance, fv: FeatureVector) -> list[str]:
    same = "unknown" if fv.same_speaker is None else _cell(fv.same_speaker)
    values = [
        instance.instance_id,
        instance.doc_id,
        str(fv.lcf),
        fv.genre,
        fv.children_u1,
        fv.children_u2,
        fv.discontinuous_u1,
        fv.discontinuous_u2,
        fv.is_sentence_u1,
        fv.is_sentence_u2,
        fv.length_ratio,
        same,
        fv.doc_length,
        fv.position,
        fv.distance,
        fv.lexical_overlap,
        instance.direction.value,
        instance.label,
    ]
    return [_cell(v) for v in values]


def feature_table(rows: Iterable[tuple[RelationInstance, FeatureVector]]) -> str:
    lines = ["\t".join(FEATURE_COLUMNS)]
    lines += ["\t".join(feature_row(inst, fv)) for inst, fv in rows]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Featurized:
    instance: RelationInstance
    features: FeatureVector
    context: ContextWindow


def featurize_corpus(
    instances: Sequence[RelationInstance],
    documents: Sequence[DocumentModel] | None,
    corpus: CorpusId,
    overrides: Mapping | None = None,
    stoplist: frozenset[str] = frozenset(),
) -> list[Featurized]:
    """Featurize every instance of one corpus.

    Documents missing from ``documents`` (or all of them, when it is None)
    are synthesized from the ``.rels`` sentence columns.
    """
    docs = {d.doc_id: d for d in documents or ()}
    missing = [i for i in instances if i.doc_id not in docs]
    if missing:
        docs.update(synthesize_documents(missing))
    docs = {
        k: (d if d.genre != "unknown" else with_genre(d, infer_genre(k, corpus, overrides))) for k, d in docs.items()
    }
    index = build_unit_index(instances)
    out = []
    for inst in instances:
        doc = docs[inst.doc_id]
        fv = compute_features(inst, doc, corpus, index, stoplist)
        out.append(Featurized(inst, fv, extract_context(inst, doc)))
    return out
