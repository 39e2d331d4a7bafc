import pytest
import yaml

from famadapt.config import OUTPUT_ROOT_ENV, ConfigError, build_config, load_config
from famadapt.synthetic import write_fixture


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("fx")
    write_fixture(root, n_text=50, n_train=10, n_dev=5, n_test=5)
    return root


def raw(**overrides):
    cfg = {
        "languages": [{"code": "lat", "text": "text/lat.txt", "treebank": "ud"},
                      {"code": "cyr", "text": "text/cyr.txt", "treebank": "ud"}],
        "grid": {"lapt_steps": [50], "vocab_size": [120], "alpha": [0.2], "seeds": [0]},
    }
    cfg.update(overrides)
    return cfg


def test_valid_config_gets_profile_defaults(fixture_dir):
    cfg = build_config(raw(), fixture_dir)
    assert cfg.profile == "desk"
    assert cfg.encoder["model_dim"] == 64
    assert cfg.finetuning.seeds == (0,)
    assert cfg.base_languages == ["lat", "cyr"]
    assert cfg.high_resource == ["et", "fi", "hu", "ru"]
    pc = cfg.pretrain_config(50, seed=3)
    assert pc.freeze_steps == 50 and pc.seed == 3
    assert cfg.language("cyr").treebank.endswith("ud")
    assert cfg.grid.cells() == [(50, 120, 0.2)]


def test_all_problems_reported_together(fixture_dir):
    bad = raw(grid={"lapt_steps": [0], "vocab_size": [3], "alpha": [2], "seeds": []},
              pretraining={"bogus": 1}, frob=1, settings=["nope"],
              groups={"g": ["zz"]}, workers=0)
    bad["languages"].append({"code": "zz", "text": "missing.txt"})
    with pytest.raises(ConfigError) as info:
        build_config(bad, fixture_dir)
    text = "\n".join(info.value.problems)
    for fragment in ("unknown key 'frob'", "grid.lapt_steps", "grid.vocab_size", "grid.alpha",
                     "grid.seeds", "pretraining.bogus", "settings: unknown", "missing file",
                     "workers"):
        assert fragment in text
    assert len(info.value.problems) >= 9


def test_cross_field_checks(fixture_dir):
    with pytest.raises(ConfigError, match="divisible"):
        build_config(raw(encoder={"model_dim": 30, "heads": 4}), fixture_dir)
    with pytest.raises(ConfigError, match="max_positions"):
        build_config(raw(pretraining={"max_sequence_length": 128}), fixture_dir)
    with pytest.raises(ConfigError, match="collide"):
        build_config(raw(baselines=["lapt_only"], base={"vocab_size": 120}), fixture_dir)


def test_stamp_ignores_output_location(fixture_dir, monkeypatch, tmp_path):
    a = build_config(raw(output_dir="x"), fixture_dir)
    b = build_config(raw(output_dir="y", workers=2), fixture_dir)
    c = build_config(raw(vocab_alpha=0.3), fixture_dir)
    assert a.stamp == b.stamp != c.stamp
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert a.run_dir() == tmp_path / f"run-{a.stamp}"


def test_load_config_errors(tmp_path, fixture_dir):
    (tmp_path / "bad.yaml").write_text("grid: [unclosed")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(tmp_path / "bad.yaml")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "none.yaml")
    path = fixture_dir / "ok.yaml"
    path.write_text(yaml.safe_dump(raw()))
    assert load_config(path).languages[0].text[0].startswith(str(fixture_dir))
