"""A miniature adaptation grid end to end, through the command line.

Builds two synthetic languages, trains a base model on one of them, then
adapts it over a small grid of steps, vocabulary sizes and sampling alphas,
fine-tunes taggers and parsers, and fits a mixed model to the results.
Takes well under a minute.

    python demos/toy_grid.py [workdir]
"""

import sys
import tempfile
from pathlib import Path

import yaml

from famadapt.cli import main as famadapt
from famadapt.synthetic import write_fixture


def main(workdir):
    root = Path(workdir)
    write_fixture(root, n_text=600, n_train=60, n_dev=20, n_test=30)
    # unequal corpus sizes, so that the sampling alpha matters
    cyr = root / "text" / "cyr.txt"
    cyr.write_text("\n".join(cyr.read_text(encoding="utf-8").splitlines()[:120]) + "\n",
                   encoding="utf-8")
    config = {
        "profile": "desk",
        "languages": [{"code": "lat", "text": "text/lat.txt", "treebank": "ud"},
                      {"code": "cyr", "text": "text/cyr.txt", "treebank": "ud"}],
        "encoder": {"model_dim": 32, "ffn_dim": 64},
        "base": {"vocab_size": 120, "steps": 60, "languages": ["lat"]},
        "grid": {"lapt_steps": [20, 40], "vocab_size": [130, 160], "alpha": [0.3, 1.0],
                 "seeds": [0, 1]},
        "pretraining": {"freeze_steps": 10, "batch_size": 8, "max_sequence_length": 32},
        "finetuning": {"max_epochs": 4, "few_shot_size": 32, "batch_size": 16,
                       "max_sequence_length": 32, "dev_carve": 10},
        "settings": ["few_shot"],
        "aux_dim": 8,
    }
    (root / "grid.yaml").write_text(yaml.safe_dump(config))
    out = root / "run"
    famadapt(["run-grid", "--config", str(root / "grid.yaml"), "--out", str(out)])
    famadapt(["regress", "--records", str(out / "records.tsv"), "--setting", "few_shot",
              "--formula", "score ~ lapt_steps + vocab_size + task + (1 | language)",
              "--out", str(root / "regression")])
    print((out / "report" / "report.md").read_text())


if __name__ == "__main__":
    if len(sys.argv) > 1:
        main(sys.argv[1])
    else:
        with tempfile.TemporaryDirectory() as tmp:
            main(tmp)
