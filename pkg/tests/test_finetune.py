import numpy as np
import pytest

from famadapt.synthetic import two_languages
from famadapt.tasks.conllu import Sentence
from famadapt.tasks.finetune import (FinetuneConfig, TaskModel, cap_training, encode_sentences,
                                     evaluate, finetune)
from famadapt.tasks.protocols import Treebank, carve_dev, few_shot_sample, run_setting

from _util import tiny_encoder, toy_tokenizer


class Fixed:
    """Predicts a fixed output for every sentence."""

    def __init__(self, fn):
        self.fn = fn

    def predict(self, sentences):
        return [self.fn(s) for s in sentences]


def ten_word_sentence():
    # three words attach to the root, seven to other words
    return Sentence([f"w{i}" for i in range(10)], ["NOUN"] * 10,
                    [0, 1, 0, 3, 4, 0, 6, 7, 8, 9])


def test_uas_oracle_all_root_and_disjoint():
    s = ten_word_sentence()
    assert evaluate(Fixed(lambda x: list(x.heads)), [s], "uas") == 100.0
    assert evaluate(Fixed(lambda x: [0] * len(x)), [s], "uas") == pytest.approx(30.0)
    assert evaluate(Fixed(lambda x: [10 if h != 10 else 1 for h in x.heads]), [s], "uas") == 0.0
    assert evaluate(Fixed(lambda x: [None] * len(x)), [s], "uas") == 0.0
    assert evaluate(Fixed(lambda x: list(x.upos)), [s], "pos") == 100.0
    with pytest.raises(ValueError):
        evaluate(Fixed(list), [], "pos")


def test_truncated_words_lose_their_heads():
    tok = toy_tokenizer()
    a, _ = two_languages()
    sent = a.sentences(1, 3)[0]
    batch = encode_sentences(tok, [sent], max_len=4)
    assert batch.word_mask[0].sum() < len(sent)
    fits = np.concatenate([[True], batch.word_mask[0]])
    assert np.all(fits[batch.heads[0]])


@pytest.fixture(scope="module")
def setup():
    tok = toy_tokenizer()
    a, b = two_languages()
    return tok, a, b


def small_config(**kw):
    base = dict(learning_rate=3e-3, max_epochs=4, eval_interval_epochs=2, batch_size=16,
                max_sequence_length=48, arc_dim=8, seeds=(0, 1), few_shot_size=20, dev_carve=10)
    base.update(kw)
    return FinetuneConfig(**base)


def test_patience_none_runs_all_epochs(setup):
    tok, a, _ = setup
    enc = tiny_encoder(tok.vocab_size)
    res = finetune("pos", enc, tok, a.sentences(20, 1), a.sentences(10, 2), small_config())
    assert res.epochs_run == 4 and len(res.train_loss) == 4
    assert [e for e, _ in res.trajectory] == [2, 4]
    assert res.best_epoch in (2, 4)


def test_early_stopping_bound(setup):
    tok, a, _ = setup
    enc = tiny_encoder(tok.vocab_size)
    cfg = small_config(learning_rate=0.0, max_epochs=20, patience_epochs=2)
    res = finetune("uas", enc, tok, a.sentences(10, 1), a.sentences(5, 2), cfg)
    # a frozen score improves only at the first evaluation
    assert res.best_epoch == 2 and res.epochs_run == 4


def test_finetune_is_deterministic_and_leaves_encoder_alone(setup):
    tok, a, _ = setup
    enc = tiny_encoder(tok.vocab_size)
    before = enc.params["embeddings.token"].data.copy()
    r1 = finetune("uas", enc, tok, a.sentences(20, 1), a.sentences(10, 2), small_config(), seed=5)
    r2 = finetune("uas", enc, tok, a.sentences(20, 1), a.sentences(10, 2), small_config(), seed=5)
    assert r1.trajectory == r2.trajectory and r1.train_loss == r2.train_loss
    assert np.array_equal(enc.params["embeddings.token"].data, before)


def test_training_cap():
    assert len(cap_training(list(range(40000)))) == 32768
    assert cap_training(list(range(5)), 3) == [0, 1, 2]


def test_all_unknown_training_set_warns(setup):
    tok, _, b = setup
    latin_only = toy_tokenizer()
    cyr = [Sentence(["ЖЖЖ", "ЯЯ"], ["NOUN", "VERB"], [0, 1])]
    enc = tiny_encoder(latin_only.vocab_size)
    with pytest.warns(UserWarning, match="unk"):
        finetune("pos", enc, latin_only, cyr * 4, [], small_config(max_epochs=1))


def test_task_model_save_load(setup, tmp_path):
    tok, a, _ = setup
    enc = tiny_encoder(tok.vocab_size, dtype=np.float32)
    model = TaskModel.build("uas", enc, tok, seed=2, arc_dim=8)
    model.save(tmp_path / "m.bin")
    back = TaskModel.load(tmp_path / "m.bin")
    sents = a.sentences(5, 4)
    assert back.predict(sents) == model.predict(sents)
    assert back.task == "uas" and back.head.arc_dim == 8


def test_config_validation():
    with pytest.raises(ValueError):
        FinetuneConfig(max_epochs=0)
    with pytest.raises(ValueError, match="multiple"):
        small_config(patience_epochs=3)
    assert small_config().replace(patience_epochs=4).patience_epochs == 4


def test_few_shot_sample_and_carve(setup):
    _, a, _ = setup
    train = a.sentences(50, 1)
    s1, s2 = few_shot_sample(train, 20, 3), few_shot_sample(train, 20, 3)
    assert s1 == s2 and len(s1) == 20
    assert few_shot_sample(train[:10], 20, 0) == train[:10]
    tb = carve_dev(Treebank("x", train, [], []), 10)
    assert len(tb.dev) == 10 and len(tb.train) == 40
    assert carve_dev(tb, 10) is tb


def test_run_setting_record_counts(setup):
    tok, a, b = setup
    enc = tiny_encoder(tok.vocab_size)
    inv = {"lat": Treebank("lat", a.sentences(30, 1), a.sentences(5, 2), a.sentences(5, 3)),
           "cyr": Treebank("cyr", [], [], b.sentences(5, 3))}
    cfg = small_config(max_epochs=2, seeds=(0, 1, 2, 3))
    res = run_setting("few_shot", enc, tok, inv, cfg, tasks=("pos",), lapt_steps=7)
    assert len(res.records) == 4
    assert {r.finetuning_lines for r in res.records} == {20}
    (agg,) = res.aggregates
    assert agg.n == 4 and agg.lapt_steps == 7
    assert agg.mean == pytest.approx(np.mean([r.score for r in res.records]))

    seen = []
    zs = run_setting("zero_shot", enc, tok, inv, cfg.replace(seeds=(0,)), tasks=("uas",),
                     on_result=seen.append)
    assert [r.language for r in zs.records] == ["cyr"] and seen == zs.records
    assert zs.records[0].finetuning_lines == 30
    with pytest.raises(ValueError, match="zero-shot"):
        run_setting("zero_shot", enc, tok, {"cyr": inv["cyr"]}, cfg)
    with pytest.raises(ValueError):
        run_setting("bogus", enc, tok, inv, cfg)
