import pytest

from famadapt.tasks.conllu import (ConllUParseError, Sentence, load_treebank_dir, read_conllu,
                                   write_conllu)

FIXTURE = """# sent_id = 1
# text = Kala ui.
1-2\tKalaui\t_\t_\t_\t_\t_\t_\t_\t_
1\tKala\tkala\tNOUN\t_\t_\t2\tnsubj\t_\t_
2\tui\tuida\tVERB\t_\t_\t0\troot\t_\t_
2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_
3\t.\t.\tPUNCT\t_\t_\t2\tpunct\t_\t_

1\tJah\tjah\tINTJ\t_\t_\t0\troot\t_\t_
"""


def test_read_skips_ranges_and_empty_nodes(tmp_path):
    p = tmp_path / "x.conllu"
    p.write_text(FIXTURE, encoding="utf-8")
    sents = read_conllu(p, "fi")
    assert len(sents) == 2
    assert sents[0].words == ["Kala", "ui", "."]
    assert sents[0].upos == ["NOUN", "VERB", "PUNCT"]
    assert sents[0].heads == [2, 0, 2]
    assert sents[0].comments[0] == "# sent_id = 1"
    assert sents[1].language == "fi" and len(sents[1]) == 1


def test_empty_file(tmp_path):
    p = tmp_path / "e.conllu"
    p.write_text("")
    assert read_conllu(p) == []


@pytest.mark.parametrize("bad,line_no,msg", [
    ("1\tA\ta\tNOUN\t_\t_\t0\troot\t_\n", 1, "expected 10 columns"),
    ("# c\n1\tA\ta\tNOUN\t_\t_\tx\troot\t_\t_\n", 2, "non-integer head"),
])
def test_errors_carry_line_numbers(tmp_path, bad, line_no, msg):
    p = tmp_path / "b.conllu"
    p.write_text(bad)
    with pytest.raises(ConllUParseError, match=msg) as info:
        read_conllu(p)
    assert info.value.line_no == line_no
    assert f"b.conllu:{line_no}:" in str(info.value)


def test_write_read_roundtrip(tmp_path):
    sents = [Sentence(["a", "b"], ["DET", "NOUN"], [2, 0]), Sentence(["c"], ["X"], [0])]
    write_conllu(tmp_path / "xx.train.conllu", sents)
    tb = load_treebank_dir(tmp_path, "xx")
    assert [s.words for s in tb["train"]] == [["a", "b"], ["c"]]
    assert tb["train"][0].heads == [2, 0]
    assert tb["dev"] == [] and tb["test"] == []


def test_sentence_validation():
    with pytest.raises(ValueError):
        Sentence(["a"], ["X", "Y"], [0])
    with pytest.raises(ValueError):
        Sentence(["a"], ["X"], [2])
