import sys
from pathlib import Path

import pytest

from discoforge.corpus import CorpusId, Direction, DocumentModel, RelationInstance, Sentence, TokenSpanSet

DATA = Path(__file__).parent / "data"
GUM = CorpusId.parse("eng.erst.gum")
PCC = CorpusId.parse("deu.rst.pcc")


def make_instance(
    unit1="first unit",
    unit2="second unit",
    u1="1-2",
    u2="3-4",
    direction=Direction.FORWARD,
    label="elaboration",
    doc="doc1",
    sent1="",
    sent2="",
    s1=None,
    s2=None,
    iid=0,
):
    return RelationInstance(
        doc_id=doc,
        unit1_text=unit1,
        unit2_text=unit2,
        unit1_spans=TokenSpanSet.parse(u1),
        unit2_spans=TokenSpanSet.parse(u2),
        direction=direction,
        label=label,
        sent1_text=sent1,
        sent2_text=sent2,
        sent1_spans=TokenSpanSet.parse(s1) if s1 else None,
        sent2_spans=TokenSpanSet.parse(s2) if s2 else None,
        instance_id=iid,
    )


def make_doc(sentences, doc_id="doc1", speakers=None, genre="unknown"):
    """Document from whitespace-tokenized sentence strings with running offsets."""
    out, start = [], 1
    for i, text in enumerate(sentences):
        toks = tuple(text.split())
        out.append(Sentence(toks, speakers[i] if speakers else None, start))
        start += len(toks)
    return DocumentModel(doc_id, tuple(out), genre)


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)
