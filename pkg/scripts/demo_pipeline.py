"""End-to-end run on the bundled fixture corpora in a scratch directory.

Runs every stage from the fixture config, fakes a translation pass over the
emitted batch, merges it back and prints where everything landed.

    python scripts/demo_pipeline.py [--keep DIR]
"""

import argparse
import logging
import shutil
import tempfile
from pathlib import Path

from discoforge.augmentation import TranslationBatch, TranslationRow
from discoforge.config import load_config
from discoforge.pipeline import run

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"


def fake_translate(batch_path: Path, out_path: Path) -> None:
    batch = TranslationBatch.from_tsv(batch_path.read_text(encoding="utf-8"))
    done = tuple(TranslationRow(r.corpus, r.instance_id, r.field, r.source_text, f"[de] {r.source_text}") for r in batch.rows)
    out_path.write_text(TranslationBatch(done).to_tsv(), encoding="utf-8")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--keep", type=Path, help="work in this directory instead of a temporary one")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)

    work = args.keep or Path(tempfile.mkdtemp(prefix="discoforge-demo-"))
    shutil.copytree(DATA, work, dirs_exist_ok=True)
    cfg = load_config(work / "config.yaml")
    status = run(cfg, "all")
    if status:
        raise SystemExit(status)

    fake_translate(cfg.output / "augment" / "deu.rst.pcc.batch.tsv", work / "translated.tsv")
    cfg = load_config(work / "config.yaml", ["augmentation.targets=[{target: deu.rst.pcc, translations: translated.tsv}]"])
    status = run(cfg, "augment")
    if status:
        raise SystemExit(status)

    print(f"\noutputs under {cfg.output}:")
    for p in sorted(cfg.output.rglob("*")):
        if p.is_file():
            print("  ", p.relative_to(cfg.output))


if __name__ == "__main__":
    main()
