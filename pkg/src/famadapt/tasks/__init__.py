from .conllu import UPOS_TAGS, ConllUParseError, Sentence, load_treebank_dir, read_conllu, write_conllu
from .finetune import (FinetuneConfig, FinetuneResult, TaskModel, evaluate, finetune,
                       finetune_parser, finetune_pos)
from .heads import BiaffineHead, TaggerHead, biaffine_scores, head_distribution
from .protocols import SETTINGS, SettingResult, Treebank, carve_dev, few_shot_sample, run_setting

__all__ = [
    "UPOS_TAGS", "ConllUParseError", "Sentence", "load_treebank_dir", "read_conllu",
    "write_conllu", "FinetuneConfig", "FinetuneResult", "TaskModel", "evaluate", "finetune",
    "finetune_parser", "finetune_pos", "BiaffineHead", "TaggerHead", "biaffine_scores",
    "head_distribution", "SETTINGS", "SettingResult", "Treebank", "carve_dev",
    "few_shot_sample", "run_setting",
]
