"""Declarative run configuration (YAML)."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .builders import DECODER_FEATURES, ENCODER_FEATURES, BuildOptions
from .corpus import CorpusId
from .errors import ConfigError

STAGES = ("validate", "featurize", "build", "augment", "score")
STYLES = ("verbose", "structured", "encoder")


@dataclass(frozen=True)
class CorpusEntry:
    corpus: CorpusId
    rels: Path
    conllu: Path | None = None
    predictions: Path | None = None


@dataclass(frozen=True)
class AugmentTarget:
    target: CorpusId
    translations: Path | None = None


@dataclass(frozen=True)
class Seeds:
    sampling: int = 0
    repair: int = 0


@dataclass(frozen=True)
class RunConfig:
    corpora: tuple[CorpusEntry, ...]
    output: Path
    labels: Path | None = None
    template: Path | None = None
    genre_overrides: Path | None = None
    mapping: Path | None = None
    stoplists: dict = field(default_factory=dict)
    decoder_features: tuple[str, ...] = DECODER_FEATURES
    encoder_features: tuple[str, ...] = ENCODER_FEATURES
    include_lcf: bool = True
    include_direction: bool = True
    include_context: bool = True
    label_glosses: bool = False
    styles: tuple[str, ...] = STYLES
    record_format: str = "jsonl"
    augment: tuple[AugmentTarget, ...] = ()
    augment_fields: tuple[str, ...] = ("unit1", "unit2", "sent1", "sent2")
    seeds: Seeds = Seeds()
    workers: int = 1
    source: Path | None = None  # the file this config was read from
    digest: str = ""

    @property
    def build_options(self) -> BuildOptions:
        return BuildOptions(
            decoder_features=self.decoder_features,
            encoder_features=self.encoder_features,
            include_lcf=self.include_lcf,
            include_direction=self.include_direction,
            include_context=self.include_context,
            label_glosses=self.label_glosses,
        )

    @property
    def effective_workers(self) -> int:
        cap = os.environ.get("DISCOFORGE_WORKERS")
        n = self.workers
        if cap:
            try:
                n = min(n, int(cap))
            except ValueError:
                raise ConfigError(f"DISCOFORGE_WORKERS must be an integer, got {cap!r}") from None
        return max(1, n)

    def corpus(self, cid: CorpusId) -> CorpusEntry | None:
        for entry in self.corpora:
            if entry.corpus == cid:
                return entry
        return None

    def validate_paths(self) -> list[str]:
        problems = []
        for entry in self.corpora:
            for p in (entry.rels, entry.conllu, entry.predictions):
                if p is not None and not p.exists():
                    problems.append(f"{entry.corpus}: missing file {p}")
        for name in ("labels", "template", "genre_overrides", "mapping"):
            p = getattr(self, name)
            if p is not None and not p.exists():
                problems.append(f"{name}: missing file {p}")
        for lang, p in self.stoplists.items():
            if not Path(p).exists():
                problems.append(f"stoplist {lang}: missing file {p}")
        for t in self.augment:
            if t.translations is not None and not t.translations.exists():
                problems.append(f"augment {t.target}: missing file {t.translations}")
        return problems


def _path(base: Path, value) -> Path | None:
    if value in (None, ""):
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _apply_override(data: dict, key: str, value: str) -> None:
    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = yaml.safe_load(value)


def load_config(path, overrides: list[str] | None = None) -> RunConfig:
    """Load a YAML run config; ``overrides`` are ``dotted.key=value`` strings applied on top."""
    path = Path(path)
    try:
        raw = path.read_bytes()
        data = yaml.safe_load(raw) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for item in overrides or []:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        _apply_override(data, key.strip(), value)
    digest = hashlib.sha256(raw + json.dumps(overrides or [], sort_keys=True).encode()).hexdigest()
    return parse_config(data, path.parent, source=path, digest=digest)


def parse_config(data: dict, base: Path, source: Path | None = None, digest: str = "") -> RunConfig:
    try:
        corpora = tuple(
            CorpusEntry(
                CorpusId.parse(c["id"]),
                _path(base, c["rels"]),
                _path(base, c.get("conllu")),
                _path(base, c.get("predictions")),
            )
            for c in data.get("corpora", [])
        )
        if not corpora:
            raise ConfigError("config lists no corpora")
        features = data.get("features", {}) or {}
        build = data.get("build", {}) or {}
        aug = data.get("augmentation", {}) or {}
        seeds = data.get("seeds", {}) or {}
        styles = tuple(build.get("styles", STYLES))
        bad = [s for s in styles if s not in STYLES]
        if bad:
            raise ConfigError(f"unknown build style(s) {bad}")
        targets = []
        for t in aug.get("targets", []) or []:
            if isinstance(t, str):
                t = {"target": t}
            targets.append(AugmentTarget(CorpusId.parse(t["target"]), _path(base, t.get("translations"))))
        return RunConfig(
            corpora=corpora,
            output=_path(base, data.get("output", "out")),
            labels=_path(base, data.get("labels")),
            template=_path(base, data.get("template")),
            genre_overrides=_path(base, data.get("genre_overrides")),
            mapping=_path(base, aug.get("mapping")),
            stoplists={k: _path(base, v) for k, v in (data.get("stoplists", {}) or {}).items()},
            decoder_features=tuple(features.get("decoder", DECODER_FEATURES)),
            encoder_features=tuple(features.get("encoder", ENCODER_FEATURES)),
            include_lcf=bool(build.get("include_lcf", True)),
            include_direction=bool(build.get("include_direction", True)),
            include_context=bool(build.get("include_context", True)),
            label_glosses=bool(build.get("label_glosses", False)),
            styles=styles,
            record_format=build.get("format", "jsonl"),
            augment=tuple(targets),
            augment_fields=tuple(aug.get("fields", ("unit1", "unit2", "sent1", "sent2"))),
            seeds=Seeds(int(seeds.get("sampling", 0)), int(seeds.get("repair", 0))),
            workers=int(data.get("workers", 1)),
            source=source,
            digest=digest,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc!r}") from exc
