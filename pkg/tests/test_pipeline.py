import json
import shutil

import pytest

from conftest import DATA
from discoforge.augmentation import TranslationBatch, TranslationRow
from discoforge.config import load_config
from discoforge.corpus import parse_rels
from discoforge.errors import ConfigError
from discoforge.pipeline import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, run

# the fixture corpora are tiny: speaker-less documents and thin augmentation supply are expected
pytestmark = [
    pytest.mark.filterwarnings("ignore::discoforge.errors.FeatureWarning"),
    pytest.mark.filterwarnings("ignore::discoforge.errors.SupplyShortfallWarning"),
]


@pytest.fixture
def workdir(tmp_path):
    dst = tmp_path / "data"
    shutil.copytree(DATA, dst)
    return dst


def config(workdir, *overrides):
    return load_config(workdir / "config.yaml", list(overrides))


def test_config_fields(workdir):
    cfg = config(workdir)
    assert [str(c.corpus) for c in cfg.corpora] == ["eng.erst.gum", "deu.rst.pcc"]
    assert cfg.corpora[1].conllu is None
    assert cfg.output == workdir / "out"
    assert cfg.seeds.sampling == 13 and cfg.seeds.repair == 7
    assert cfg.styles == ("verbose", "structured", "encoder")


def test_overrides_change_digest(workdir):
    a, b = config(workdir), config(workdir, "seeds.sampling=99")
    assert b.seeds.sampling == 99
    assert a.digest != b.digest


def test_worker_cap(workdir, monkeypatch):
    cfg = config(workdir, "workers=8")
    monkeypatch.setenv("DISCOFORGE_WORKERS", "3")
    assert cfg.effective_workers == 3
    monkeypatch.setenv("DISCOFORGE_WORKERS", "many")
    with pytest.raises(ConfigError):
        cfg.effective_workers


@pytest.mark.parametrize(
    "override",
    ["corpora=[]", "build.styles=[fancy]", "corpora=[{rels: x.rels}]", "workers=lots"],
)
def test_bad_config(workdir, override):
    with pytest.raises(ConfigError):
        config(workdir, override)


def test_all_twice_same_manifest(workdir):
    cfg = config(workdir)
    assert run(cfg, "all") == EXIT_OK
    first = (cfg.output / "manifest.json").read_text()
    assert run(cfg, "all") == EXIT_OK
    assert (cfg.output / "manifest.json").read_text() == first
    manifest = json.loads(first)
    assert manifest["config"] == "config.yaml"
    assert manifest["seeds"] == {"repair": 7, "sampling": 13}
    assert set(manifest["stages"]) == {"validate", "featurize", "build", "augment", "score"}
    outputs = manifest["stages"]["build"]["outputs"]
    assert "build/eng.erst.gum.encoder.jsonl" in outputs


def test_single_stage_rerun_matches_digest(workdir):
    cfg = config(workdir)
    run(cfg, "all")
    recorded = json.loads((cfg.output / "manifest.json").read_text())["stages"]["featurize"]["outputs"]
    shutil.rmtree(cfg.output / "features")
    assert run(cfg, "featurize") == EXIT_OK
    again = json.loads((cfg.output / "manifest.json").read_text())["stages"]["featurize"]["outputs"]
    assert again == recorded


def test_workers_do_not_change_outputs(workdir, tmp_path):
    one = config(workdir, "workers=1", f"output={tmp_path / 'one'}")
    many = config(workdir, "workers=4", f"output={tmp_path / 'many'}")
    run(one, "build")
    run(many, "build")
    for f in (tmp_path / "one" / "build").iterdir():
        assert f.read_bytes() == (tmp_path / "many" / "build" / f.name).read_bytes()


def test_score_stage_report(workdir):
    cfg = config(workdir)
    assert run(cfg, "score") == EXIT_OK
    report = json.loads((cfg.output / "score" / "report.json").read_text())
    assert report["repair_seed"] == 7 and report["repairs"] == 1
    assert report["per_corpus"]["deu.rst.pcc"]["correct"] == 3
    assert (cfg.output / "score" / "confusion.normalized.tsv").exists()


def test_missing_input_is_validation_error(workdir):
    (workdir / "deu.rst.pcc_train.rels").unlink()
    assert run(config(workdir), "all") == EXIT_VALIDATION
    assert run(config(workdir), "build") == EXIT_VALIDATION


def test_structural_error_is_validation_error(workdir):
    path = workdir / "deu.rst.pcc_train.rels"
    path.write_text(path.read_text().replace("\t1>2\t", "\t2>1\t", 1))
    assert run(config(workdir), "validate") == EXIT_VALIDATION


def test_runtime_error_exit(workdir):
    (workdir / "deu.rst.pcc_train.pred").write_text("causal\n")
    assert run(config(workdir), "score") == EXIT_RUNTIME


def test_augment_with_translations(workdir):
    cfg = config(workdir)
    assert run(cfg, "augment") == EXIT_OK
    batch = TranslationBatch.from_tsv((cfg.output / "augment" / "deu.rst.pcc.batch.tsv").read_text())
    done = TranslationBatch(tuple(TranslationRow(r.corpus, r.instance_id, r.field, r.source_text, "DE " + r.source_text) for r in batch.rows))
    (workdir / "done.tsv").write_text(done.to_tsv())
    cfg = config(workdir, "augmentation.targets=[{target: deu.rst.pcc, translations: done.tsv}]")
    assert run(cfg, "augment") == EXIT_OK
    combined = parse_rels(cfg.output / "augment" / "deu.rst.pcc.train+aug.rels")
    assert len(combined) == 5
    assert combined[-1].doc_id.startswith("aug_") and combined[-1].unit1_text.startswith("DE ")
    assert (workdir / "deu.rst.pcc_train.rels").read_bytes() == (DATA / "deu.rst.pcc_train.rels").read_bytes()


def test_augment_unmapped_target_fails(workdir):
    cfg = config(workdir, "augmentation.targets=[eng.erst.gum]")
    assert run(cfg, "augment") == EXIT_RUNTIME
