import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA, GUM, PCC, make_instance
from discoforge.augmentation import (
    AugmentationMapping,
    AugmentationPlan,
    TranslationBatch,
    TranslationRow,
    append_to_training,
    apportion,
    emit_translation_batch,
    label_histogram,
    load_mappings,
    merge_translations,
    plan_augmentation,
    structural_filter,
    total_quota,
)
from discoforge.corpus import CorpusId, infer_genre, parse_rels, parse_rels_text
from discoforge.errors import EmptySupply, IncompleteBatch, MissingInstance, SupplyShortfallWarning, UnknownPredicate
from discoforge.features import ContextWindow

RST = CorpusId.parse("eng.rst.rstdt")


def synthetic_source(counts, corpus=GUM, genre="news"):
    out, iid = [], 0
    for label, n in sorted(counts.items()):
        for _ in range(n):
            out.append((make_instance(unit1=f"u{iid} a", unit2=f"u{iid} b", label=label, iid=iid), genre))
            iid += 1
    return {corpus: out}


def mapping(genres=frozenset({"news"}), filters=(), ratio=0.75):
    return AugmentationMapping(PCC, (GUM,), genres, ratio, filters)


def test_total_quota_rounding():
    assert total_quota(0.75, 1000) == 750
    assert total_quota(0.75, 2) == 2  # 1.5 rounds up
    assert total_quota(0.75, 6) == 5  # 4.5 rounds up


def test_apportion_examples():
    assert apportion({"a": 2, "b": 1}, 6) == {"a": 4, "b": 2}
    assert apportion({"a": 500, "b": 300, "c": 200}, 750) == {"a": 375, "b": 225, "c": 150}
    # 1/3 each of 10: remainder goes alphabetically
    assert apportion({"x": 1, "y": 1, "z": 1}, 10) == {"x": 4, "y": 3, "z": 3}


@given(st.dictionaries(st.sampled_from("abcdefg"), st.integers(1, 500), min_size=1), st.integers(0, 2000))
def test_apportion_sums_and_stays_close(hist, total):
    q = apportion(hist, total)
    assert sum(q.values()) == total
    denom = sum(hist.values())
    for k, v in hist.items():
        assert abs(q[k] - total * v / denom) < 1


def test_plan_750_of_1000():
    hist = {"a": 500, "b": 300, "c": 200}
    sources = synthetic_source({"a": 900, "b": 900, "c": 900})
    plan = plan_augmentation(mapping(), sources, hist, 1000, seed=5)
    assert len(plan.selected) == 750
    assert dict(plan.quota) == {"a": 375, "b": 225, "c": 150}
    assert plan.shortfall == {}
    again = plan_augmentation(mapping(), sources, hist, 1000, seed=5)
    assert again == plan
    other = plan_augmentation(mapping(), sources, hist, 1000, seed=6)
    assert other.selected != plan.selected


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.sampled_from("abcd"), st.integers(1, 40), min_size=1), st.integers(0, 10_000))
def test_plan_respects_supply_and_filters(hist, seed):
    sources = synthetic_source({k: 20 for k in "abcd"})
    # a second genre that must never be picked
    extra = [(make_instance(label="a", iid=1000 + i), "fiction") for i in range(30)]
    sources[GUM] = sources[GUM] + extra
    size = sum(hist.values())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SupplyShortfallWarning)
        plan = plan_augmentation(mapping(), sources, hist, size, seed)
    assert len(plan.selected) <= total_quota(0.75, size)
    assert all(i < 1000 for _, i in plan.selected)
    assert len(set(plan.selected)) == len(plan.selected)
    for label, q in plan.quota.items():
        assert plan.selected_labels[label] == min(q, 20)


def test_shortfall_warned():
    sources = synthetic_source({"a": 1, "b": 10})
    with pytest.warns(SupplyShortfallWarning):
        plan = plan_augmentation(mapping(), sources, {"a": 4, "b": 4}, 8, 0)
    assert plan.shortfall == {"a": 2}
    assert len(plan.selected) == 4


def test_empty_supply():
    sources = synthetic_source({"a": 5}, genre="fiction")
    with pytest.raises(EmptySupply):
        plan_augmentation(mapping(), sources, {"a": 4}, 4, 0)


def test_missing_source_corpus():
    with pytest.raises(MissingInstance):
        plan_augmentation(mapping(), {}, {"a": 4}, 4, 0)


def test_structural_filter():
    rel = make_instance(unit1="which was built in 1990")
    assert not structural_filter(rel, ["relative_clause_unit"])
    assert structural_filter(rel, [])
    assert structural_filter(make_instance(unit1="The plant opened in 1990"), ["relative_clause_unit"])
    assert not structural_filter(make_instance(unit2="Who knows"), ["relative_clause_unit"])
    with pytest.raises(UnknownPredicate):
        structural_filter(rel, ["no_such_thing"])


def test_filter_applied_in_plan():
    rel = [(make_instance(unit2="which were", label="a", iid=0), "news"), (make_instance(label="a", iid=1), "news")]
    with pytest.warns(SupplyShortfallWarning):
        plan = plan_augmentation(mapping(filters=("relative_clause_unit",)), {GUM: rel}, {"a": 4}, 4, 0)
    assert plan.selected == ((GUM, 1),)


def test_default_mapping_rows():
    rows = {str(m.target): m for m in load_mappings()}
    assert len(rows) == 7
    nld = rows["nld.rst.nldt"]
    assert nld.sources == (CorpusId.parse("eng.rst.oll"), CorpusId.parse("eng.rst.sts"))
    assert rows["fas.rst.prstc"].genres is None and rows["fas.rst.prstc"].admits("anything")
    assert rows["deu.rst.pcc"].filters == ("relative_clause_unit",)
    assert all(m.ratio == 0.75 for m in rows.values())


def test_mapping_validation(tmp_path):
    with pytest.raises(ValueError):
        mapping(ratio=0)
    bad = tmp_path / "m.tsv"
    bad.write_text("deu.rst.pcc\teng.erst.gum\tnews\t0.75\tparse_tree\n")
    with pytest.raises(UnknownPredicate):
        load_mappings(bad)


def test_plan_json_roundtrip():
    plan = plan_augmentation(mapping(), synthetic_source({"a": 5, "b": 5}), {"a": 3, "b": 1}, 4, 3)
    assert AugmentationPlan.from_json(plan.to_json()) == plan


def _two_instance_plan():
    sources = {GUM: [make_instance(unit1="A one", unit2="B two", sent1="A one B two", sent2="A one B two", iid=i, label=l) for i, l in ((0, "causal"), (1, "contrast"))]}
    plan = AugmentationPlan(mapping(), 3, {"causal": 1, "contrast": 1}, ((GUM, 0), (GUM, 1)), 0)
    return plan, sources


def test_emit_batch_counts():
    plan, sources = _two_instance_plan()
    assert len(emit_translation_batch(plan, sources, ("unit1", "unit2")).rows) == 4
    ctx = {(GUM, i): ContextWindow("pre", "focal", "post") for i in (0, 1)}
    full = emit_translation_batch(plan, sources, ("unit1", "unit2", "sent1", "sent2"), ctx)
    assert len(full.rows) == 12
    empty = AugmentationPlan(mapping(), 0, {}, (), 0)
    assert emit_translation_batch(empty, sources).to_tsv() == "corpus\tinstance_id\tfield\tsource_text\ttranslated_text\n"


def test_emit_missing_instance():
    plan, sources = _two_instance_plan()
    with pytest.raises(MissingInstance):
        emit_translation_batch(plan, {GUM: sources[GUM][:1]})


def test_batch_tsv_roundtrip_and_uniqueness():
    rows = (TranslationRow(GUM, 0, "unit1", "a", "x"), TranslationRow(GUM, 0, "unit2", "b"))
    batch = TranslationBatch(rows)
    assert TranslationBatch.from_tsv(batch.to_tsv()) == batch
    with pytest.raises(ValueError):
        TranslationBatch(rows + rows[:1])


def _translate(batch):
    return TranslationBatch(tuple(TranslationRow(r.corpus, r.instance_id, r.field, r.source_text, r.source_text.upper()) for r in batch.rows))


def test_merge_preserves_labels_and_quota():
    plan, sources = _two_instance_plan()
    done = _translate(emit_translation_batch(plan, sources))
    augmented, data = merge_translations(plan, done, sources)
    back = parse_rels_text(data.decode("utf-8"))
    assert label_histogram(back) == {"causal": 1, "contrast": 1}
    first = back[0]
    assert first.doc_id == "aug_doc1_gum0"
    assert (first.unit1_text, first.unit2_text) == ("A ONE", "B TWO")
    assert first.unit1_spans.render() == "1-2" and first.unit2_spans.render() == "3-4"
    assert first.sent1_text == "A ONE B TWO"
    assert infer_genre("aug_GUM_news_x_gum3", PCC) == "news"


def test_merge_incomplete_batch():
    plan, sources = _two_instance_plan()
    rows = tuple(r for r in _translate(emit_translation_batch(plan, sources)).rows if not (r.instance_id == 1 and r.field == "unit2"))
    with pytest.raises(IncompleteBatch) as err:
        merge_translations(plan, TranslationBatch(rows), sources)
    assert err.value.missing == [("eng.erst.gum", 1, "unit2")]


def test_append_to_training(tmp_path):
    train = DATA / "deu.rst.pcc_train.rels"
    plan, sources = _two_instance_plan()
    augmented, _ = merge_translations(plan, _translate(emit_translation_batch(plan, sources)), sources)
    out = append_to_training(train, augmented, tmp_path / "combined.rels")
    text = out.read_text(encoding="utf-8")
    assert text.startswith(train.read_text(encoding="utf-8"))
    assert len(parse_rels(out)) == 6
    with pytest.raises(ValueError):
        append_to_training(train, augmented, train)


def test_fixture_plan_uses_only_admissible_sources():
    rels = parse_rels(DATA / "eng.erst.gum_train.rels")
    mapping_ = load_mappings(DATA / "mapping.tsv")[0]
    sources = {GUM: [(r, infer_genre(r.doc_id, GUM)) for r in rels]}
    target = parse_rels(DATA / "deu.rst.pcc_train.rels")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SupplyShortfallWarning)
        plan = plan_augmentation(mapping_, sources, label_histogram(target), len(target), 13)
    # the only causal source instance; relative-clause unit 1 is filtered
    assert plan.selected == ((GUM, 5),)
