"""Layer redundancy scoring from activation dumps (block influence) and prune selection.

The influence of a layer is one minus the mean cosine similarity between
each token's hidden state entering the layer and leaving it. A layer that
barely changes its input scores near 0 and is the first candidate for
removal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateDump, NotEnoughCandidates

log = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("layer_index", "rows", "cols", "in_file", "out_file")


@dataclass(frozen=True)
class ActivationDump:
    layer_index: int
    hidden_in: np.ndarray
    hidden_out: np.ndarray

    def __post_init__(self):
        if self.layer_index < 0:
            raise ValueError("layer_index must be >= 0")
        a = np.asarray(self.hidden_in, dtype=np.float64)
        b = np.asarray(self.hidden_out, dtype=np.float64)
        if a.ndim != 2 or a.shape != b.shape:
            raise ValueError(f"layer {self.layer_index}: input/output shapes differ or are not 2-D: {a.shape} vs {b.shape}")
        if a.shape[0] < 1:
            raise ValueError(f"layer {self.layer_index}: dump has no rows")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError(f"layer {self.layer_index}: dump contains non-finite values")
        object.__setattr__(self, "hidden_in", a)
        object.__setattr__(self, "hidden_out", b)


@dataclass(frozen=True)
class LayerScore:
    layer_index: int
    influence: float


def block_influence(dump: ActivationDump) -> LayerScore:
    a, b = dump.hidden_in, dump.hidden_out
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    ab = np.einsum("ij,ij->i", a, b)
    usable = (aa > 0) & (bb > 0)
    skipped = int((~usable).sum())
    if not usable.any():
        raise DegenerateDump(f"layer {dump.layer_index}: every row has zero norm")
    if skipped:
        log.info("layer %d: skipped %d zero-norm rows", dump.layer_index, skipped)
    cos = ab[usable] / np.sqrt(aa[usable] * bb[usable])
    # rounding can leave an unchanged (or sign-flipped) row a hair off +-1
    cos = np.where((a == b).all(axis=1)[usable], 1.0, cos)
    cos = np.where((a == -b).all(axis=1)[usable], -1.0, cos)
    cos = np.clip(cos, -1.0, 1.0)
    influence = 1.0 - float(cos.mean())
    return LayerScore(dump.layer_index, min(2.0, max(0.0, influence)))


def select_prune_layers(scores: Sequence[LayerScore], k: int = 1, protected: Iterable[int] = ()) -> list[int]:
    """The ``k`` least influential unprotected layers, lowest influence first.

    Equal influences are ordered by layer index.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    protected = set(protected)
    candidates = sorted(
        (s for s in scores if s.layer_index not in protected), key=lambda s: (s.influence, s.layer_index)
    )
    if len(scores) <= k or len(candidates) < k:
        raise NotEnoughCandidates(f"need {k} layer(s) to prune, have {len(candidates)} unprotected of {len(scores)}")
    return [s.layer_index for s in candidates[:k]]


def default_protected(n_layers: int) -> set[int]:
    return {0, n_layers - 1} if n_layers > 0 else set()


def load_manifest(path) -> list[ActivationDump]:
    """Load dumps listed in a tab-separated manifest.

    Each row names a layer, the matrix shape and two files of raw
    little-endian float32 values; relative paths resolve against the
    manifest's directory.
    """
    path = Path(path)
    lines = [l for l in path.read_text(encoding="utf-8").splitlines() if l.strip() and not l.startswith("#")]
    header = lines[0].split("\t")
    col = {name: i for i, name in enumerate(header)}
    missing = [c for c in MANIFEST_COLUMNS if c not in col]
    if missing:
        raise ValueError(f"{path}: manifest lacks column(s) {missing}")
    dumps = []
    for line in lines[1:]:
        cells = line.split("\t")
        rows, cols = int(cells[col["rows"]]), int(cells[col["cols"]])

        def read(name):
            f = path.parent / cells[col[name]]
            data = np.fromfile(f, dtype="<f4")
            if data.size != rows * cols:
                raise ValueError(f"{f}: expected {rows}x{cols} float32 values, found {data.size}")
            return data.reshape(rows, cols)

        dumps.append(ActivationDump(int(cells[col["layer_index"]]), read("in_file"), read("out_file")))
    return dumps


def write_dump(directory, layer_index: int, hidden_in: np.ndarray, hidden_out: np.ndarray) -> tuple[str, str]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = (f"layer{layer_index:03d}.in.f32", f"layer{layer_index:03d}.out.f32")
    for name, m in zip(names, (hidden_in, hidden_out)):
        np.asarray(m, dtype="<f4").tofile(directory / name)
    return names


def write_manifest(directory, dumps: Sequence[tuple[int, np.ndarray, np.ndarray]]) -> Path:
    directory = Path(directory)
    lines = ["\t".join(MANIFEST_COLUMNS)]
    for layer, hin, hout in dumps:
        fin, fout = write_dump(directory, layer, hin, hout)
        lines.append("\t".join([str(layer), str(hin.shape[0]), str(hin.shape[1]), fin, fout]))
    out = directory / "manifest.tsv"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
