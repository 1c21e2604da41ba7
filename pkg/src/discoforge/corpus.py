"""Typed readers and writers for DISRPT ``.rels`` and CoNLL-U files."""

from __future__ import annotations

import enum
import io
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    BadDirection,
    BadSpan,
    MalformedLine,
    MissingColumn,
    SanitizedTextWarning,
    UnknownLabelWarning,
)

FRAMEWORKS = ("rst", "pdtb", "sdrt", "dep", "erst", "iso")

REQUIRED_COLUMNS = ("doc", "unit1_toks", "unit2_toks", "unit1_txt", "unit2_txt", "dir", "label")

# column order of the shared-task distribution
DEFAULT_HEADER = (
    "doc",
    "unit1_toks",
    "unit2_toks",
    "unit1_txt",
    "unit2_txt",
    "s1_toks",
    "s2_toks",
    "unit1_sent",
    "unit2_sent",
    "dir",
    "orig_label",
    "label",
)

_KNOWN_COLUMNS = set(DEFAULT_HEADER)
_ID_RE = re.compile(r"^([a-z]{3})\.([a-z]+)\.([a-z0-9_]+)$")


@dataclass(frozen=True, order=True)
class CorpusId:
    language: str
    framework: str
    corpus: str

    def __post_init__(self):
        if not re.fullmatch(r"[a-z]{3}", self.language):
            raise ValueError(f"language must be a lowercase ISO-639-3 code, got {self.language!r}")
        if self.framework not in FRAMEWORKS:
            raise ValueError(f"unknown framework {self.framework!r}; expected one of {FRAMEWORKS}")
        if not re.fullmatch(r"[a-z0-9_]+", self.corpus):
            raise ValueError(f"corpus name must be lowercase alphanumeric, got {self.corpus!r}")

    @classmethod
    def parse(cls, text: str) -> "CorpusId":
        m = _ID_RE.match(text.strip().lower())
        if not m:
            raise ValueError(f"not a corpus id of the form language.framework.corpus: {text!r}")
        return cls(*m.groups())

    def __str__(self):
        return f"{self.language}.{self.framework}.{self.corpus}"


@dataclass(frozen=True)
class TokenSpanSet:
    """Inclusive, 1-based token ranges; sorted, disjoint and non-adjacent."""

    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prev_end = 0
        for start, end in self.ranges:
            if start < 1 or end < start:
                raise BadSpan(f"invalid range {start}-{end}")
            if start <= prev_end:
                raise BadSpan(f"ranges not sorted and disjoint: {self.ranges}")
            prev_end = end

    @classmethod
    def parse(cls, text: str) -> "TokenSpanSet":
        """Parse DISRPT span syntax such as ``"5-7,9"``.

        Overlapping and adjacent pieces are merged, so ``"3-4,5"`` and
        ``"3-5"`` give the same set.
        """
        pieces = []
        for part in text.strip().split(","):
            part = part.strip()
            if not part:
                raise BadSpan(f"empty range in {text!r}")
            try:
                if "-" in part:
                    a, b = part.split("-", 1)
                    start, end = int(a), int(b)
                else:
                    start = end = int(part)
            except ValueError:
                raise BadSpan(f"unparseable span {text!r}") from None
            if start < 1 or end < start:
                raise BadSpan(f"invalid range {part!r} in {text!r}")
            pieces.append((start, end))
        return cls.from_ranges(pieces)

    @classmethod
    def from_ranges(cls, pieces: Iterable[tuple[int, int]]) -> "TokenSpanSet":
        merged: list[list[int]] = []
        for start, end in sorted(pieces):
            if merged and start <= merged[-1][1] + 1:
                merged[-1][1] = max(merged[-1][1], end)
            else:
                merged.append([start, end])
        if not merged:
            raise BadSpan("span set must not be empty")
        return cls(tuple((a, b) for a, b in merged))

    def render(self) -> str:
        return ",".join(str(a) if a == b else f"{a}-{b}" for a, b in self.ranges)

    def discontinuous(self) -> bool:
        return len(self.ranges) > 1

    @property
    def start(self) -> int:
        return self.ranges[0][0]

    @property
    def end(self) -> int:
        return self.ranges[-1][1]

    @property
    def token_count(self) -> int:
        return sum(b - a + 1 for a, b in self.ranges)

    def __contains__(self, index: int) -> bool:
        return any(a <= index <= b for a, b in self.ranges)

    def overlaps(self, other: "TokenSpanSet") -> bool:
        return any(a <= d and c <= b for a, b in self.ranges for c, d in other.ranges)

    def __str__(self):
        return self.render()


class Direction(enum.Enum):
    FORWARD = "1>2"
    BACKWARD = "1<2"

    @property
    def symbol(self) -> str:
        return ">" if self is Direction.FORWARD else "<"


@dataclass(frozen=True)
class RelationInstance:
    doc_id: str
    unit1_text: str
    unit2_text: str
    unit1_spans: TokenSpanSet
    unit2_spans: TokenSpanSet
    direction: Direction
    label: str
    sent1_text: str = ""
    sent2_text: str = ""
    sent1_spans: TokenSpanSet | None = None
    sent2_spans: TokenSpanSet | None = None
    orig_label: str | None = None
    instance_id: int = 0
    unknown_label: bool = False
    # columns outside the known DISRPT set, kept verbatim for round-tripping
    extra: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    speaker: str | None = None
    # document-level index of the first token; None when the offset is unknown
    start: int | None = 1

    @property
    def end(self) -> int | None:
        return None if self.start is None else self.start + len(self.tokens) - 1

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class DocumentModel:
    doc_id: str
    sentences: tuple[Sentence, ...]
    genre: str = "unknown"
    synthetic: bool = False

    @property
    def token_count(self) -> int:
        return sum(len(s.tokens) for s in self.sentences)

    @property
    def has_speakers(self) -> bool:
        return any(s.speaker is not None for s in self.sentences)

    def sentence_index_of(self, token: int) -> int | None:
        for i, sent in enumerate(self.sentences):
            if sent.start is not None and sent.start <= token <= sent.end:
                return i
        return None


@dataclass(frozen=True)
class LabelInventory:
    labels: tuple[str, ...]
    glosses: Mapping[str, str] = field(default_factory=dict)
    _index: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        folded = tuple(l.strip().casefold() for l in self.labels)
        if not folded:
            raise ValueError("label inventory is empty")
        if len(set(folded)) != len(folded):
            raise ValueError("label inventory contains duplicates after case-folding")
        object.__setattr__(self, "labels", folded)
        object.__setattr__(self, "_index", frozenset(folded))

    @classmethod
    def load(cls, path=None) -> "LabelInventory":
        """Read one label per line, optionally followed by a tab and a gloss.

        Without a path the packaged 17-label unified inventory is used.
        """
        if path is None:
            text = resources.files("discoforge.resources").joinpath("labels.tsv").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        labels, glosses = [], {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, _, gloss = line.partition("\t")
            name = name.strip().casefold()
            labels.append(name)
            if gloss.strip():
                glosses[name] = gloss.strip()
        return cls(tuple(labels), glosses)

    def canonical(self, raw: str) -> str | None:
        """Return the inventory spelling of ``raw`` or None if it is not a label."""
        key = raw.strip().casefold()
        return key if key in self._index else None

    def __contains__(self, raw) -> bool:
        return isinstance(raw, str) and self.canonical(raw) is not None

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)


def _opt_spans(value: str | None) -> TokenSpanSet | None:
    if value is None or value.strip() in ("", "_"):
        return None
    return TokenSpanSet.parse(value)


def _read_rows(text: str):
    # plain TSV, no quoting: quote characters are literal text
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line.rstrip("\r").split("\t") for line in lines]


def parse_rels_text(text: str, inventory: LabelInventory | None = None, path=None) -> list[RelationInstance]:
    rows = _read_rows(text)
    if not rows:
        raise MissingColumn("doc", path)
    header = rows[0]
    col = {name: i for i, name in enumerate(header)}
    for name in REQUIRED_COLUMNS:
        if name not in col:
            raise MissingColumn(name, path)

    def get(row, name):
        i = col.get(name)
        if i is None or i >= len(row):
            return None
        return row[i]

    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if row == [""]:
            continue
        try:
            direction = Direction(get(row, "dir"))
        except ValueError:
            raise BadDirection(lineno, get(row, "dir")) from None
        raw_label = get(row, "label") or ""
        label = raw_label.strip().casefold()
        unknown = inventory is not None and label not in inventory
        if unknown:
            warnings.warn(UnknownLabelWarning(f"line {lineno}: label {raw_label!r} not in inventory"))
        try:
            inst = RelationInstance(
                doc_id=get(row, "doc"),
                unit1_text=get(row, "unit1_txt"),
                unit2_text=get(row, "unit2_txt"),
                unit1_spans=TokenSpanSet.parse(get(row, "unit1_toks")),
                unit2_spans=TokenSpanSet.parse(get(row, "unit2_toks")),
                direction=direction,
                label=label,
                sent1_text=get(row, "unit1_sent") or "",
                sent2_text=get(row, "unit2_sent") or "",
                sent1_spans=_opt_spans(get(row, "s1_toks")),
                sent2_spans=_opt_spans(get(row, "s2_toks")),
                orig_label=None if get(row, "orig_label") in (None, "_") else get(row, "orig_label"),
                instance_id=len(out),
                unknown_label=unknown,
                extra={name: (row[i] if i < len(row) else "") for name, i in col.items() if name not in _KNOWN_COLUMNS},
            )
        except BadSpan as exc:
            raise BadSpan(f"line {lineno}: {exc}") from None
        out.append(inst)
    return out


def parse_rels(path, corpus: CorpusId | None = None, inventory: LabelInventory | None = None) -> list[RelationInstance]:
    """Read a ``.rels`` file, binding columns by header name.

    ``corpus`` is accepted for symmetry with the other readers; the file
    itself does not record it.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_rels_text(text, inventory, path=path)


def _clean(value: str, where: str) -> str:
    if "\t" in value or "\n" in value or "\r" in value:
        warnings.warn(SanitizedTextWarning(f"{where}: tab/newline replaced by a space"))
        return re.sub(r"[\t\r\n]", " ", value)
    return value


def serialize_rels(instances: Sequence[RelationInstance], header: Sequence[str] | None = None) -> bytes:
    """Render instances in ``.rels`` layout. Embedded tabs/newlines become spaces (with a warning)."""
    if header is None:
        extras = list(instances[0].extra) if instances else []
        header = list(DEFAULT_HEADER) + [e for e in extras if e not in _KNOWN_COLUMNS]
    buf = io.StringIO()
    buf.write("\t".join(header) + "\n")
    for inst in instances:
        values = {
            "doc": inst.doc_id,
            "unit1_toks": inst.unit1_spans.render(),
            "unit2_toks": inst.unit2_spans.render(),
            "unit1_txt": inst.unit1_text,
            "unit2_txt": inst.unit2_text,
            "s1_toks": inst.sent1_spans.render() if inst.sent1_spans else "_",
            "s2_toks": inst.sent2_spans.render() if inst.sent2_spans else "_",
            "unit1_sent": inst.sent1_text,
            "unit2_sent": inst.sent2_text,
            "dir": inst.direction.value,
            "orig_label": inst.orig_label if inst.orig_label is not None else "_",
            "label": inst.label,
        }
        values.update(inst.extra)
        cells = [_clean(values.get(name, "_"), f"{inst.doc_id}#{inst.instance_id}:{name}") for name in header]
        buf.write("\t".join(cells) + "\n")
    return buf.getvalue().encode("utf-8")


def parse_conllu_text(text: str, path=None) -> list[DocumentModel]:
    docs: list[DocumentModel] = []
    doc_id = None
    sentences: list[Sentence] = []
    tokens: list[str] = []
    speaker = None
    next_start = 1

    def close_sentence():
        nonlocal tokens, speaker, next_start
        if tokens:
            sentences.append(Sentence(tuple(tokens), speaker, next_start))
            next_start += len(tokens)
        tokens, speaker = [], None

    def close_doc():
        nonlocal sentences, next_start
        close_sentence()
        if sentences:
            docs.append(DocumentModel(doc_id if doc_id is not None else _default_doc_id(path), tuple(sentences)))
        sentences, next_start = [], 1

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            close_sentence()
        elif line.startswith("#"):
            key, eq, value = line[1:].partition("=")
            key = key.strip()
            if eq and key in ("newdoc id", "newdoc_id"):
                close_doc()
                doc_id = value.strip()
            elif eq and key == "speaker":
                speaker = value.strip()
        else:
            fields = line.split("\t")
            if len(fields) < 2:
                raise MalformedLine(lineno, path)
            tok_id = fields[0]
            if "-" in tok_id or "." in tok_id:
                continue
            tokens.append(fields[1])
    close_doc()
    return docs


def _default_doc_id(path) -> str:
    return Path(path).stem if path else "doc"


def parse_conllu(path, corpus: CorpusId | None = None, overrides: Mapping | None = None) -> list[DocumentModel]:
    """Read documents from a CoNLL-U file; genre is filled in when ``corpus`` is given."""
    docs = parse_conllu_text(Path(path).read_text(encoding="utf-8"), path=path)
    if corpus is not None:
        docs = [with_genre(d, infer_genre(d.doc_id, corpus, overrides)) for d in docs]
    return docs


def with_genre(doc: DocumentModel, genre: str) -> DocumentModel:
    return DocumentModel(doc.doc_id, doc.sentences, genre, doc.synthetic)


def load_genre_overrides(path=None) -> dict[CorpusId, str]:
    if path is None:
        text = resources.files("discoforge.resources").joinpath("genre_overrides.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        corpus, genre = line.split("\t")[:2]
        out[CorpusId.parse(corpus)] = genre.strip()
    return out


def infer_genre(doc_id: str, corpus: CorpusId, overrides: Mapping | None = None) -> str:
    """Genre from a GUM-style ``PREFIX_genre_title`` id, else the corpus default, else "unknown"."""
    if doc_id.startswith("aug_"):
        doc_id = doc_id[4:]
    parts = doc_id.split("_")
    if len(parts) >= 3 and parts[1].isalpha():
        return parts[1].lower()
    if overrides:
        genre = overrides.get(corpus) or overrides.get(str(corpus))
        if genre:
            return genre
    return "unknown"


def synthesize_documents(instances: Iterable[RelationInstance]) -> dict[str, DocumentModel]:
    """Build stand-in documents from the sentence columns of ``.rels`` rows.

    Used when no CoNLL-U companion is available. Sentences with known token
    spans keep their document offsets; others are appended in first-seen order
    without an offset and can only be located by text.
    """
    by_doc: dict[str, dict] = {}
    for inst in instances:
        seen = by_doc.setdefault(inst.doc_id, {})
        for text, spans in ((inst.sent1_text, inst.sent1_spans), (inst.sent2_text, inst.sent2_spans)):
            if not text:
                continue
            key = (spans.start, spans.end) if spans is not None else ("text", text)
            seen.setdefault(key, (text, spans))
    docs = {}
    for doc_id, seen in by_doc.items():
        located = sorted(
            ((spans.start, text) for text, spans in seen.values() if spans is not None),
        )
        floating = [text for text, spans in seen.values() if spans is None]
        sentences = []
        last_end = 0
        for start, text in located:
            toks = tuple(text.split())
            if start <= last_end:
                start = last_end + 1
            sentences.append(Sentence(toks, None, start))
            last_end = start + len(toks) - 1
        placed = {s.text for s in sentences}
        for text in floating:
            if text in placed:
                continue
            placed.add(text)
            sentences.append(Sentence(tuple(text.split()), None, None))
        docs[doc_id] = DocumentModel(doc_id, tuple(sentences), synthetic=True)
    return docs
