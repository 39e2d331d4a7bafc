from famadapt.synthetic import CYRILLIC, LATIN, LEXICON_SIZES, two_languages, write_fixture
from famadapt.tasks.conllu import read_conllu


def test_lexicon_tags_are_unique_and_alphabets_disjoint():
    a, b = two_languages()
    for lang, alphabet in ((a, LATIN), (b, CYRILLIC)):
        words = [w for ws in lang.lexicon.values() for w in ws]
        assert len(words) == len(set(words)) == sum(LEXICON_SIZES.values())
        assert set("".join(words)) <= set(alphabet)
    assert not set(LATIN) & set(CYRILLIC)


def test_sentences_follow_previous_word_heads():
    a, _ = two_languages()
    for s in a.sentences(50, 1):
        assert s.heads == list(range(len(s)))
        assert all(a.tag_of[w] == t for w, t in zip(s.words, s.upos))


def test_generation_is_seeded():
    a, _ = two_languages()
    assert a.lines(20, 4) == a.lines(20, 4)
    assert a.lines(20, 4) != a.lines(20, 5)


def test_fixture_layout(tmp_path):
    write_fixture(tmp_path, n_text=30, n_train=8, n_dev=3, n_test=4, test_only=("cyr",))
    assert len((tmp_path / "text" / "lat.txt").read_text().splitlines()) == 30
    assert len(read_conllu(tmp_path / "ud" / "lat.train.conllu")) == 8
    assert len(read_conllu(tmp_path / "ud" / "cyr.test.conllu")) == 4
    assert not (tmp_path / "ud" / "cyr.train.conllu").exists()
