"""Render featurized instances as decoder prompts and encoder input sequences."""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from ._io import atomic_write
from .corpus import CorpusId, LabelInventory, RelationInstance
from .errors import FeatureWarning, TemplateError
from .features import ContextWindow, FeatureVector, mark_direction

PLACEHOLDERS = frozenset(
    {"LANGUAGE", "FRAMEWORK", "CORPUS", "GENRE", "CONTEXT", "ARG1", "ARG2", "DIRECTION", "FEATURES", "LABEL_LIST"}
)
_PLACEHOLDER_RE = re.compile(r"\{([A-Z0-9_]+)\}")

DECODER_FEATURES = ("same_speaker", "position", "distance")
ENCODER_FEATURES = ("is_sentence", "discontinuous", "same_speaker", "genre")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def __post_init__(self):
        found = _PLACEHOLDER_RE.findall(self.body)
        unknown = sorted(set(found) - PLACEHOLDERS)
        if unknown:
            raise TemplateError(f"template {self.name!r}: unknown placeholder(s) {unknown}")
        for required in ("ARG1", "ARG2", "LABEL_LIST"):
            n = found.count(required)
            if n != 1:
                raise TemplateError(f"template {self.name!r}: {{{required}}} must occur exactly once, found {n}")

    @classmethod
    def load(cls, path=None) -> "PromptTemplate":
        if path is None:
            body = resources.files("discoforge.resources").joinpath("verbose_prompt.txt").read_text("utf-8")
            return cls("verbose_prompt", body)
        path = Path(path)
        return cls(path.stem, path.read_text(encoding="utf-8"))

    def render(self, values: dict[str, str]) -> str:
        # single pass, so placeholder-like text inside arguments is left alone
        return _PLACEHOLDER_RE.sub(lambda m: values.get(m.group(1), ""), self.body)


@dataclass(frozen=True)
class BuildOptions:
    """Which input groups go into the rendered inputs; the defaults are the submitted setup."""

    decoder_features: tuple[str, ...] = DECODER_FEATURES
    encoder_features: tuple[str, ...] = ENCODER_FEATURES
    include_lcf: bool = True
    include_direction: bool = True
    include_context: bool = True
    label_glosses: bool = False


@dataclass(frozen=True)
class PromptRecord:
    instance_id: int
    corpus: CorpusId
    prompt: str
    target: str
    style: str


@dataclass(frozen=True)
class EncoderRecord:
    instance_id: int
    input: str
    target: str
    corpus: CorpusId | None = None


def _yes_no(value: bool) -> str:
    return "yes" if value else "no"


def _pair(a, b, fmt=str) -> str:
    return f"{fmt(a)} / {fmt(b)}"


# feature name -> (prompt line label, value renderer); a renderer returning None drops the line
_VERBOSE_FEATURES = {
    "same_speaker": ("Same speaker", lambda fv: None if fv.same_speaker is None else _yes_no(fv.same_speaker)),
    "position": ("Position in document", lambda fv: f"{fv.position:.2f}"),
    "distance": ("Units between the arguments", lambda fv: str(fv.distance)),
    "genre": ("Genre", lambda fv: fv.genre),
    "discontinuous": ("Discontinuous (arg1 / arg2)", lambda fv: _pair(fv.discontinuous_u1, fv.discontinuous_u2, _yes_no)),
    "is_sentence": ("Full sentence (arg1 / arg2)", lambda fv: _pair(fv.is_sentence_u1, fv.is_sentence_u2, _yes_no)),
    "length_ratio": ("Length ratio (arg1 / arg2)", lambda fv: f"{fv.length_ratio:.2f}"),
    "doc_length": ("Document length in tokens", lambda fv: str(fv.doc_length)),
    "lexical_overlap": ("Shared content words", lambda fv: str(fv.lexical_overlap)),
    "children": (
        "Child relations (arg1 / arg2)",
        lambda fv: None if fv.children_u1 is None else _pair(fv.children_u1, fv.children_u2),
    ),
}

_STRUCTURED_FEATURES = {
    "same_speaker": lambda fv: None if fv.same_speaker is None else str(int(fv.same_speaker)),
    "position": lambda fv: f"{fv.position:.2f}",
    "distance": lambda fv: str(fv.distance),
    "genre": lambda fv: fv.genre,
    "discontinuous": lambda fv: f"{int(fv.discontinuous_u1)},{int(fv.discontinuous_u2)}",
    "is_sentence": lambda fv: f"{int(fv.is_sentence_u1)},{int(fv.is_sentence_u2)}",
    "length_ratio": lambda fv: f"{fv.length_ratio:.2f}",
    "doc_length": lambda fv: str(fv.doc_length),
    "lexical_overlap": lambda fv: str(fv.lexical_overlap),
    "children": lambda fv: None if fv.children_u1 is None else f"{fv.children_u1},{fv.children_u2}",
}


def _check_features(names, table):
    unknown = [n for n in names if n not in table]
    if unknown:
        raise ValueError(f"unknown feature name(s): {unknown}")


def _label_list(inv: LabelInventory, glosses: bool) -> str:
    if glosses and inv.glosses:
        return "; ".join(f"{l} ({inv.glosses[l]})" if l in inv.glosses else l for l in inv.labels)
    return ", ".join(inv.labels)


def _target(inst: RelationInstance, inv: LabelInventory) -> str:
    label = inv.canonical(inst.label)
    if label is None:
        raise ValueError(f"{inst.doc_id}#{inst.instance_id}: label {inst.label!r} not in inventory")
    return label


def render_context(ctx: ContextWindow) -> str:
    parts = [("Preceding", ctx.pre), ("Focal", ctx.focal), ("Following", ctx.post)]
    return "\n".join(f"{name}: {text}" for name, text in parts if text)


def build_verbose_prompt(
    inst: RelationInstance,
    fv: FeatureVector,
    ctx: ContextWindow,
    tpl: PromptTemplate,
    inv: LabelInventory,
    options: BuildOptions = BuildOptions(),
) -> PromptRecord:
    _check_features(options.decoder_features, _VERBOSE_FEATURES)
    lines = []
    for name in options.decoder_features:
        label, render = _VERBOSE_FEATURES[name]
        value = render(fv)
        if value is not None:
            lines.append(f"- {label}: {value}")
    context = render_context(ctx) if options.include_context else ""
    lcf = fv.lcf
    values = {
        "LANGUAGE": lcf.language if options.include_lcf else "not given",
        "FRAMEWORK": lcf.framework if options.include_lcf else "not given",
        "CORPUS": lcf.corpus if options.include_lcf else "not given",
        "GENRE": fv.genre,
        "CONTEXT": context or "none",
        "ARG1": inst.unit1_text,
        "ARG2": inst.unit2_text,
        "DIRECTION": inst.direction.value if options.include_direction else "not given",
        "FEATURES": "\n".join(lines) or "none",
        "LABEL_LIST": _label_list(inv, options.label_glosses),
    }
    return PromptRecord(inst.instance_id, lcf, tpl.render(values), _target(inst, inv), "verbose")


def build_structured_prompt(
    inst: RelationInstance,
    fv: FeatureVector,
    ctx: ContextWindow,
    inv: LabelInventory,
    options: BuildOptions = BuildOptions(),
) -> PromptRecord:
    """Compact delimiter-separated prompt ending in ``$$ arg1 $$ > ## arg2 ##``."""
    _check_features(options.decoder_features, _STRUCTURED_FEATURES)
    parts = []
    if options.include_lcf:
        parts.append(f"{fv.lcf.language} {fv.lcf.framework} {fv.lcf.corpus}")
    feats = []
    for name in options.decoder_features:
        value = _STRUCTURED_FEATURES[name](fv)
        if value is not None:
            feats.append(f"{name}={value}")
    if feats:
        parts.append(" ".join(feats))
    if options.include_context:
        for tag, text in (("pre", ctx.pre), ("ctx", ctx.focal), ("post", ctx.post)):
            if text:
                parts.append(f"{tag}: {text}")
    sep = f" {inst.direction.symbol} " if options.include_direction else " "
    parts.append(f"$$ {inst.unit1_text} $${sep}## {inst.unit2_text} ##")
    parts.append("labels: " + _label_list(inv, options.label_glosses))
    return PromptRecord(inst.instance_id, fv.lcf, " || ".join(parts), _target(inst, inv), "structured")


def _token_value(text: str) -> str:
    return re.sub(r"\s+", "_", text.strip()) or "unknown"


def build_encoder_input(
    inst: RelationInstance,
    fv: FeatureVector,
    ctx: ContextWindow | None = None,
    options: BuildOptions = BuildOptions(),
) -> EncoderRecord:
    """Special-token input for the encoder; context is not used."""
    tokens = []
    if options.include_lcf:
        tokens += [f"LANG_{fv.lcf.language}", f"FW_{fv.lcf.framework}", f"CORP_{fv.lcf.corpus}", "[SEP]"]
    feats = []
    for name in options.encoder_features:
        if name == "is_sentence":
            feats.append(f"IS_SENTENCE_{int(fv.is_sentence_u1 and fv.is_sentence_u2)}")
        elif name == "discontinuous":
            feats.append(f"DISCONTINUOUS_{int(fv.discontinuous_u1 or fv.discontinuous_u2)}")
        elif name == "same_speaker":
            if fv.same_speaker is None:
                warnings.warn(FeatureWarning("same_speaker unknown, encoded as SAME_SPEAKER_0"), stacklevel=2)
            feats.append(f"SAME_SPEAKER_{int(bool(fv.same_speaker))}")
        elif name == "genre":
            feats.append(f"GENRE_{_token_value(fv.genre)}")
        else:
            raise ValueError(f"unknown encoder feature {name!r}")
    if feats:
        tokens += feats + ["[SEP]"]
    arg1 = mark_direction(inst.unit1_text, inst.direction) if options.include_direction else inst.unit1_text
    text = " ".join(tokens + [arg1, "Arg2:", inst.unit2_text])
    return EncoderRecord(inst.instance_id, text, inst.label, fv.lcf)


def _record_fields(rec) -> dict:
    if isinstance(rec, PromptRecord):
        return {"id": rec.instance_id, "prompt": rec.prompt, "target": rec.target, "corpus": str(rec.corpus)}
    if isinstance(rec, EncoderRecord):
        corpus = str(rec.corpus) if rec.corpus is not None else None
        return {"id": rec.instance_id, "input": rec.input, "target": rec.target, "corpus": corpus}
    raise TypeError(f"not a record: {type(rec).__name__}")


def _tsv_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


_UNESCAPE = {"\\\\": "\\", "\\t": "\t", "\\n": "\n", "\\r": "\r"}


def _tsv_unescape(text: str) -> str:
    return re.sub(r"\\[\\tnr]", lambda m: _UNESCAPE[m.group(0)], text)


def format_records(records: Sequence, fmt: str = "jsonl") -> str:
    kinds = {type(r) for r in records}
    if len(kinds) > 1:
        raise TypeError("records must all be of one type")
    rows = [_record_fields(r) for r in records]
    if fmt == "jsonl":
        return "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows)
    if fmt == "tsv":
        if not rows:
            return ""
        header = list(rows[0])
        lines = ["\t".join(header)]
        lines += ["\t".join(_tsv_escape("" if row[k] is None else str(row[k])) for k in header) for row in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown record format {fmt!r}")


def emit_records(records: Sequence, fmt: str, path) -> Path:
    """Write records as JSON lines or TSV, one record per line."""
    return atomic_write(path, format_records(records, fmt))


def read_records(path, fmt: str = "jsonl") -> list[dict]:
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "jsonl":
        return [json.loads(line) for line in text.splitlines() if line]
    lines = text.split("\n")
    if not lines or not lines[0]:
        return []
    header = lines[0].split("\t")
    out = []
    for line in lines[1:]:
        if not line:
            continue
        row = dict(zip(header, (_tsv_unescape(c) for c in line.split("\t"))))
        row["id"] = int(row["id"])
        out.append(row)
    return out
