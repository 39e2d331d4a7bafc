import numpy as np
import pytest

from famadapt.nn.pretrain import (MaskedDevSet, PretrainConfig, TrainingDiverged, mlm_mask,
                                  pretrain)
from famadapt.sampling import SampledStream, compute_sampling_weights
from famadapt.synthetic import two_languages

from _util import tiny_encoder, toy_tokenizer


def test_mask_proportions_and_specials():
    rng = np.random.default_rng(0)
    ids = rng.integers(5, 100, size=(400, 50))
    special = np.zeros(ids.shape, dtype=bool)
    special[:, 0] = special[:, -1] = True
    corrupted, labels = mlm_mask(ids, special, 0.15, rng, 4, np.arange(5, 100))
    sel = labels >= 0
    assert not sel[:, 0].any() and not sel[:, -1].any()
    frac = sel.sum() / (~special).sum()
    assert abs(frac - 0.15) < 0.01
    np.testing.assert_array_equal(labels[sel], ids[sel])
    masked = (corrupted == 4) & sel
    unchanged = (corrupted == ids) & sel
    assert abs(masked.sum() / sel.sum() - 0.8) < 0.02
    # random replacements sometimes coincide with the original id
    assert abs(unchanged.sum() / sel.sum() - (0.1 + 0.1 / 95)) < 0.02
    np.testing.assert_array_equal(corrupted[~sel], ids[~sel])


def test_mask_is_seeded():
    ids = np.arange(5, 65).reshape(3, 20)
    special = np.zeros(ids.shape, dtype=bool)
    a = mlm_mask(ids, special, 0.3, 7, 4, np.arange(5, 70))
    b = mlm_mask(ids, special, 0.3, 7, 4, np.arange(5, 70))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_config_validation():
    with pytest.raises(ValueError, match="freeze_steps"):
        PretrainConfig(total_steps=10, freeze_steps=11)
    with pytest.raises(ValueError):
        PretrainConfig(total_steps=0)
    assert PretrainConfig(total_steps=100_000).eval_interval == 2000
    assert PretrainConfig(total_steps=500, freeze_steps=0).eval_interval == 100


def _setup(steps, freeze, lr=3e-3, interval=None):
    tok = toy_tokenizer()
    a, b = two_languages()
    corpora = {"lat": a.lines(300, 5), "cyr": b.lines(300, 6)}
    stream = SampledStream(corpora, compute_sampling_weights({"lat": 300, "cyr": 300}, 1.0))
    enc = tiny_encoder(tok.vocab_size, dtype=np.float32)
    cfg = PretrainConfig(total_steps=steps, freeze_steps=freeze, learning_rate=lr, batch_size=8,
                         max_sequence_length=32, dev_eval_interval=interval)
    return tok, enc, stream, cfg, a.lines(40, 9) + b.lines(40, 10)


def test_short_run_is_deterministic_and_records_trajectory():
    runs = []
    for _ in range(2):
        tok, enc, stream, cfg, dev = _setup(30, 10, interval=10)
        runs.append(pretrain(enc, stream, cfg, dev, tok))
    a, b = runs
    assert a.dev_loss == b.dev_loss
    assert [s for s, _ in a.dev_loss] == [0, 10, 20, 30]
    assert len(a.train_loss) == len(a.lr) == len(a.grad_norm) == 30
    assert a.lr[0] == cfg.learning_rate and a.lr[-1] == pytest.approx(cfg.learning_rate / 30)
    assert a.best.dev_loss == min(l for _, l in a.dev_loss)


def test_divergence_raises_with_last_good_checkpoint():
    tok, enc, stream, cfg, dev = _setup(20, 0, interval=5)
    calls = {"n": 0}

    def poison(step, encoder):
        calls["n"] += 1
        if step == 7:
            encoder.params["mlm.bias"].data[:] = np.nan

    with pytest.raises(TrainingDiverged) as info:
        pretrain(enc, stream, cfg, dev, tok, on_step=poison)
    assert info.value.step == 8
    assert info.value.last_good is not None and info.value.last_good.step == 5


def test_dev_set_masks_are_fixed():
    tok, enc, _, cfg, dev = _setup(10, 0)
    d1, d2 = MaskedDevSet(tok, dev, cfg), MaskedDevSet(tok, dev, cfg)
    assert d1.loss(enc) == d2.loss(enc)
    with pytest.raises(ValueError):
        MaskedDevSet(tok, [], cfg)
