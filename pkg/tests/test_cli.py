import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from conftest import DATA
from discoforge.cli import corpus_from_path, main
from discoforge.evaluation import EvalReport
from discoforge.pruning import write_manifest

pytestmark = [
    pytest.mark.filterwarnings("ignore::discoforge.errors.FeatureWarning"),
    pytest.mark.filterwarnings("ignore::discoforge.errors.SupplyShortfallWarning"),
]

GUM_RELS = str(DATA / "eng.erst.gum_train.rels")
GUM_CONLLU = str(DATA / "eng.erst.gum_train.conllu")
PCC_RELS = str(DATA / "deu.rst.pcc_train.rels")


def test_corpus_from_path():
    assert str(corpus_from_path("x/eng.erst.gum_train.rels")) == "eng.erst.gum"
    assert str(corpus_from_path("whatever.rels", "deu.rst.pcc")) == "deu.rst.pcc"


def test_validate_ok(capsys):
    assert main(["validate", "--rels", GUM_RELS, "--conllu", GUM_CONLLU]) == 0
    assert "ok: 6 instances" in capsys.readouterr().out


def test_validate_reports_errors(tmp_path, capsys):
    bad = tmp_path / "eng.erst.gum_dev.rels"
    bad.write_text(open(GUM_RELS).read().replace("\t1<2\t", "\tback\t", 1))
    assert main(["validate", "--rels", str(bad)]) == 1
    out = capsys.readouterr().out
    assert out.startswith("error: ") and "direction" in out


def test_featurize_and_build(tmp_path):
    feats = tmp_path / "f.tsv"
    assert main(["featurize", "--rels", GUM_RELS, "--conllu", GUM_CONLLU, "--out", str(feats)]) == 0
    assert len(feats.read_text().splitlines()) == 7
    for style in ("verbose", "structured", "encoder"):
        out = tmp_path / f"{style}.jsonl"
        assert main(["build", "--style", style, "--rels", GUM_RELS, "--conllu", GUM_CONLLU, "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 6
    tsv = tmp_path / "enc.tsv"
    assert main(["build", "--style", "encoder", "--rels", PCC_RELS, "--format", "tsv", "--out", str(tsv)]) == 0
    assert tsv.read_text().startswith("id\tinput\ttarget\tcorpus\n")


def test_build_needs_corpus_id(tmp_path):
    odd = tmp_path / "train.rels"
    shutil.copy(GUM_RELS, odd)
    assert main(["build", "--style", "encoder", "--rels", str(odd), "--out", str(tmp_path / "o")]) == 1
    assert main(["build", "--style", "encoder", "--rels", str(odd), "--corpus", "eng.erst.gum", "--out", str(tmp_path / "o")]) == 0


def test_augment_plan_emit_merge(tmp_path):
    plan, batch, aug = tmp_path / "plan.json", tmp_path / "batch.tsv", tmp_path / "aug.rels"
    src = f"eng.erst.gum={GUM_RELS},{GUM_CONLLU}"
    common = ["--mapping", str(DATA / "mapping.tsv"), "--seed", "13"]
    assert main(["augment", "plan", *common, "--target", "deu.rst.pcc", "--target-rels", PCC_RELS, "--source", src, "--out", str(plan)]) == 0
    assert json.loads(plan.read_text())["selected"] == [["eng.erst.gum", 5]]
    fields = "unit1,unit2,sent1,sent2,context_pre,context_post"
    assert main(["augment", "emit", "--plan", str(plan), "--source", src, "--fields", fields, "--out", str(batch)]) == 0
    rows = batch.read_text().splitlines()
    assert len(rows) == 1 + 5  # no following sentence after the last one
    done = "\n".join([rows[0]] + [r + "X " + r.split("\t")[3] for r in rows[1:]]) + "\n"
    batch.write_text(done)
    assert main(["augment", "merge", "--plan", str(plan), "--batch", str(batch), "--source", src, "--out", str(aug), "--train", PCC_RELS]) == 0
    assert "X Why is that ?" in aug.read_text()
    assert (tmp_path / "aug.train+aug.rels").exists()


def test_augment_without_action():
    assert main(["augment", "--seed", "1"]) == 1


def test_prune_select(tmp_path, capsys):
    rng = np.random.default_rng(0)
    dumps = []
    for i in range(5):
        h = rng.normal(size=(4, 8))
        out = h + (0.01 if i == 2 else 1.0) * rng.normal(size=(4, 8))
        dumps.append((i, h, out))
    dumps[0] = (0, dumps[0][1], dumps[0][1])  # layer 0 unchanged but protected
    manifest = write_manifest(tmp_path, dumps)
    assert main(["prune-select", "--manifest", str(manifest), "--k", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "rank\tlayer\tinfluence\tprotected"
    assert out[1].startswith("1\t0\t0.000000\tyes")
    assert out[-1] == "selected: 2"
    assert main(["prune-select", "--manifest", str(manifest), "--protect", ""]) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "selected: 0"


def test_score_and_report(tmp_path, capsys):
    rep = tmp_path / "gum.json"
    assert main(["score", "--gold", GUM_RELS, "--pred", str(DATA / "eng.erst.gum_train.pred"), "--seed", "3", "--out", str(rep)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("eng.erst.gum\t") and "repaired=1" in line
    report = EvalReport.from_json(rep.read_text())
    assert report.repair_seed == 3
    assert (tmp_path / "gum.confusion.tsv").exists()

    base, abl = tmp_path / "base.json", tmp_path / "abl"
    base.write_text(EvalReport.from_accuracies({"ces.rst.crdt": 52.70, "pol.iso.pdc": 74.02}).to_json())
    abl.mkdir()
    (abl / "a.json").write_text(EvalReport.from_accuracies({"ces.rst.crdt": 46.62}).to_json())
    (abl / "b.json").write_text(EvalReport.from_accuracies({"pol.iso.pdc": 62.99}).to_json())
    table = tmp_path / "t.tsv"
    assert main(["report", "--baseline", str(base), "--ablated", f"direction={abl}", "--out", str(table)]) == 0
    lines = table.read_text().splitlines()
    assert lines[1] == "ces.rst.crdt\t52.70\t46.62\t6.08"


def test_score_length_mismatch_is_runtime_error(tmp_path):
    pred = tmp_path / "p.txt"
    pred.write_text("causal\n")
    assert main(["score", "--gold", GUM_RELS, "--pred", str(pred)]) == 2


def test_config_driven(tmp_path):
    shutil.copytree(DATA, tmp_path / "d")
    cfg = str(tmp_path / "d" / "config.yaml")
    assert main(["all", "--config", cfg]) == 0
    assert (tmp_path / "d" / "out" / "manifest.json").exists()
    assert main(["featurize", "--config", cfg, "--set", "output=elsewhere"]) == 0
    assert (tmp_path / "d" / "elsewhere" / "features" / "eng.erst.gum.tsv").exists()
    assert main(["validate", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "discoforge.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("discoforge ")
