import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from famadapt.subword import (SubwordModel, diagnostics, mean_sequence_length, train_subword,
                              write_diagnostics)
from famadapt.synthetic import two_languages


def test_known_merges_on_tiny_corpus():
    # words: abab x1000, ab x1000; alphabet a, b, ▁a -> 8 base tokens
    # merge 1: (▁a, b) seen 2000 times; merge 2 ties (a,b) vs (▁ab,a), smallest pair wins
    model = train_subword(["abab ab"] * 1000, 10)
    assert model.merges == [("▁a", "b"), ("a", "b")]
    assert model.tokens[5:] == ["a", "b", "▁a", "▁ab", "ab"]
    assert model.encode("abab") == [8, 9]
    assert model.encode("ab cd", add_special=True) == [2, 8, 1, 1, 3]
    assert model.tokenize("ab abab") == ["▁ab", "▁ab", "ab"]


def test_specials_occupy_fixed_ids():
    model = train_subword(["x y z"], 8)
    assert (model.pad_id, model.unk_id, model.bos_id, model.eos_id, model.mask_id) == (0, 1, 2, 3, 4)
    assert model.vocab_size == 8


def test_budget_errors():
    with pytest.raises(ValueError, match="smaller than"):
        train_subword(["abc def"], 6)
    with pytest.raises(ValueError, match="at most"):
        train_subword(["ab"], 50)


def test_save_load_roundtrip(tmp_path):
    a, _ = two_languages()
    model = train_subword(a.lines(200, 0), 80)
    model.save(tmp_path / "m.txt")
    back = SubwordModel.load(tmp_path / "m.txt")
    assert back.tokens == model.tokens and back.merges == model.merges
    for line in a.lines(20, 3):
        assert back.encode(line) == model.encode(line)
    (tmp_path / "bad.txt").write_text("nope\n")
    with pytest.raises(ValueError):
        SubwordModel.load(tmp_path / "bad.txt")


def test_training_is_deterministic():
    a, b = two_languages()
    lines = a.lines(100, 0) + b.lines(100, 0)
    assert train_subword(lines, 90).merges == train_subword(list(lines), 90).merges


def test_diagnostics_counts(tmp_path):
    model = train_subword(["abab ab"] * 10, 10)
    d = diagnostics(model, ["abab ab", "ab cd"])
    # tokens: [▁ab ab] [▁ab] [▁ab] [unk unk] -> 6 tokens, 2 unk, 10 chars
    assert d.tokens == 6
    assert d.unk_unigram_frequency == pytest.approx(2 / 6)
    assert d.chars_per_token == pytest.approx(10 / 6)
    assert d.mean_sequence_length == pytest.approx(5.0)
    assert mean_sequence_length(model, ["abab ab", "ab cd"]) == pytest.approx(5.0)
    write_diagnostics(tmp_path / "d.tsv", [("s", d)])
    assert (tmp_path / "d.tsv").read_text().splitlines()[1].startswith("s\t2\t6\t")
    with pytest.raises(ValueError):
        diagnostics(model, [])


_model = None


def _shared_model():
    global _model
    if _model is None:
        a, b = two_languages()
        # every letter appears word-initially and word-internally
        cover = " ".join(c + c for c in "abdefgiklmnoprst")
        _model = train_subword(a.lines(300, 0) + b.lines(300, 0) + [cover], 150)
    return _model


@settings(max_examples=60, deadline=None)
@given(st.lists(st.text(alphabet="abdefgiklmnoprst", min_size=1, max_size=12),
                min_size=1, max_size=6))
def test_decode_inverts_encode_on_known_alphabet(words):
    model = _shared_model()
    text = " ".join(words)
    assert model.decode(model.encode(text, add_special=True)) == text
