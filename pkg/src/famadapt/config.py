"""Declarative run configuration (YAML) with aggregated validation."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .corpus import CleaningConfig
from .nn.pretrain import PretrainConfig
from .tasks.finetune import FinetuneConfig
from .tasks.protocols import SETTINGS

OUTPUT_ROOT_ENV = "FAMADAPT_OUTPUT_ROOT"
TASKS = ("pos", "uas")

# Defaults mirror the full-scale regime; "desk" swaps in a model and schedule
# small enough to run on a laptop CPU.
PROFILES = {
    "full": {
        "encoder": {"layers": 12, "model_dim": 768, "ffn_dim": 3072, "heads": 12,
                    "max_positions": 512},
        "pretraining": {"freeze_steps": 10_000, "mask_prob": 0.15, "learning_rate": 1e-5,
                        "schedule": "linear", "batch_size": 200, "max_grad_norm": 1.0,
                        "max_sequence_length": 256},
        "finetuning": {"learning_rate": 5e-6, "max_epochs": 64, "eval_interval_epochs": 2,
                       "batch_size": 72, "max_grad_norm": 1.0, "max_sequence_length": 256,
                       "train_cap": 32_768, "few_shot_size": 512, "dev_carve": 300,
                       "full_patience_epochs": 8},
        "base": {"vocab_size": 250_002, "steps": 0},
        "vocab_lines": 5_000_000,
        "aux_dim": 300,
    },
    "desk": {
        "encoder": {"layers": 2, "model_dim": 64, "ffn_dim": 128, "heads": 2,
                    "max_positions": 64},
        "pretraining": {"freeze_steps": 100, "mask_prob": 0.15, "learning_rate": 2e-3,
                        "schedule": "linear", "batch_size": 32, "max_grad_norm": 1.0,
                        "max_sequence_length": 64},
        "finetuning": {"learning_rate": 1e-3, "max_epochs": 16, "eval_interval_epochs": 2,
                       "batch_size": 32, "max_grad_norm": 1.0, "max_sequence_length": 64,
                       "train_cap": 32_768, "few_shot_size": 512, "dev_carve": 300,
                       "full_patience_epochs": 8},
        "base": {"vocab_size": 300, "steps": 300},
        "vocab_lines": 20_000,
        "aux_dim": 32,
    },
}


class ConfigError(ValueError):
    """Every validation problem found, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


@dataclass
class LanguageSpec:
    code: str
    text: list = field(default_factory=list)      # raw text files
    treebank: str | None = None                   # dir with <code>.<split>.conllu
    byte_cap: int | None = None


@dataclass
class GridSpec:
    lapt_steps: list
    vocab_size: list
    alpha: list
    seeds: list

    def cells(self):
        """Every (lapt_steps, vocab_size, alpha) combination, in a fixed order."""
        return [(s, v, a) for s in self.lapt_steps for v in self.vocab_size for a in self.alpha]


@dataclass
class RunConfig:
    languages: list
    grid: GridSpec
    output_dir: str = "runs"
    profile: str = "desk"
    groups: dict = field(default_factory=dict)
    high_resource: list = field(default_factory=lambda: ["et", "fi", "hu", "ru"])
    base_languages: list = field(default_factory=list)
    base_vocab_size: int = 300
    base_steps: int = 300
    settings: list = field(default_factory=lambda: list(SETTINGS))
    tasks: list = field(default_factory=lambda: list(TASKS))
    vocab_alpha: float = 0.2
    vocab_lines: int = 5_000_000
    sample_measure: str = "lines"
    dev_frac: float = 0.05
    test_frac: float = 0.05
    split_seed: int = 0
    aux_dim: int = 32
    focus_k: int = 10
    workers: int = 1
    baselines: list = field(default_factory=list)
    encoder: dict = field(default_factory=dict)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    pretraining: dict = field(default_factory=dict)
    finetuning: FinetuneConfig = field(default_factory=FinetuneConfig)
    source: dict = field(default_factory=dict, repr=False)

    def pretrain_config(self, total_steps, seed=0) -> PretrainConfig:
        opts = dict(self.pretraining)
        opts["freeze_steps"] = min(opts.get("freeze_steps", 0), total_steps)
        return PretrainConfig(total_steps=total_steps, seed=seed, **opts)

    def language(self, code) -> LanguageSpec:
        for lang in self.languages:
            if lang.code == code:
                return lang
        raise KeyError(code)

    @property
    def stamp(self) -> str:
        """Content hash of the configuration; names the run directory."""
        relevant = {k: v for k, v in self.source.items() if k not in ("output_dir", "workers")}
        blob = json.dumps(relevant, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def output_root(self) -> Path:
        return Path(os.environ.get(OUTPUT_ROOT_ENV) or self.output_dir)

    def run_dir(self) -> Path:
        return self.output_root() / f"run-{self.stamp}"


BASELINES = ("off_the_shelf", "lapt_only", "monolingual")

_TOP_KEYS = {f.name for f in fields(RunConfig)} - {"source", "base_vocab_size", "base_steps"} \
    | {"base"}


def _merge(defaults, overrides):
    out = copy.deepcopy(defaults)
    for k, v in (overrides or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _resolve(path, base_dir):
    p = Path(path)
    return p if p.is_absolute() else (base_dir / p)


def build_config(raw: dict, base_dir=".") -> RunConfig:
    """Validate a parsed configuration mapping; raises ``ConfigError`` listing all problems."""
    problems = []
    base_dir = Path(base_dir)
    if not isinstance(raw, dict):
        raise ConfigError(["configuration must be a mapping"])
    profile = raw.get("profile", "desk")
    if profile not in PROFILES:
        problems.append(f"profile: unknown {profile!r} (choose from {sorted(PROFILES)})")
        profile = "desk"
    merged = _merge(PROFILES[profile], raw)
    for key in merged:
        if key not in _TOP_KEYS and key not in PROFILES[profile]:
            problems.append(f"unknown key {key!r}")

    languages = []
    seen = set()
    for i, entry in enumerate(merged.get("languages") or []):
        if not isinstance(entry, dict) or "code" not in entry:
            problems.append(f"languages[{i}]: needs a 'code'")
            continue
        code = str(entry["code"])
        if code in seen:
            problems.append(f"languages[{i}]: duplicate code {code!r}")
        seen.add(code)
        text = entry.get("text") or []
        text = [text] if isinstance(text, str) else list(text)
        text = [str(_resolve(t, base_dir)) for t in text]
        for t in text:
            if not Path(t).is_file():
                problems.append(f"languages[{code}].text: missing file {t}")
        tb = entry.get("treebank")
        if tb is not None:
            tb = str(_resolve(tb, base_dir))
            if not Path(tb).is_dir():
                problems.append(f"languages[{code}].treebank: missing directory {tb}")
        cap = entry.get("byte_cap")
        if cap is not None and (not isinstance(cap, int) or cap <= 0):
            problems.append(f"languages[{code}].byte_cap: must be a positive integer")
        languages.append(LanguageSpec(code, text, tb, cap))
    if not languages:
        problems.append("languages: at least one language is required")
    if not any(l.text for l in languages):
        problems.append("languages: no language has text for pretraining")

    g = merged.get("grid") or {}
    grid = GridSpec(*(list(g.get(k) or []) for k in ("lapt_steps", "vocab_size", "alpha", "seeds")))
    for name in ("lapt_steps", "vocab_size", "alpha", "seeds"):
        if not getattr(grid, name):
            problems.append(f"grid.{name}: must be a nonempty list")
    for s in grid.lapt_steps:
        if not isinstance(s, int) or s <= 0:
            problems.append(f"grid.lapt_steps: {s!r} is not a positive integer")
    for v in grid.vocab_size:
        if not isinstance(v, int) or v <= 5:
            problems.append(f"grid.vocab_size: {v!r} must be an integer above the 5 specials")
    for a in grid.alpha:
        if not isinstance(a, (int, float)) or not 0 <= a <= 1:
            problems.append(f"grid.alpha: {a!r} outside [0, 1]")
    for s in grid.seeds:
        if not isinstance(s, int) or s < 0:
            problems.append(f"grid.seeds: {s!r} is not a non-negative integer")
    if len(set(grid.seeds)) != len(grid.seeds):
        problems.append("grid.seeds: duplicates")

    codes = {l.code for l in languages}
    groups = merged.get("groups") or {}
    member_seen = {}
    for name, members in groups.items():
        for m in members or []:
            if m not in codes:
                problems.append(f"groups.{name}: unknown language {m!r}")
            if m in member_seen:
                problems.append(f"groups: {m!r} in both {member_seen[m]!r} and {name!r}")
            member_seen[m] = name
        if name in codes:
            problems.append(f"groups.{name}: name clashes with a language code")

    settings = list(merged.get("settings") or SETTINGS)
    for s in settings:
        if s not in SETTINGS:
            problems.append(f"settings: unknown {s!r}")
    tasks = list(merged.get("tasks") or TASKS)
    for t in tasks:
        if t not in TASKS:
            problems.append(f"tasks: unknown {t!r}")
    if not any(l.treebank for l in languages):
        problems.append("languages: no language has a treebank to evaluate on")
    baselines = list(merged.get("baselines") or [])
    for b in baselines:
        if b not in BASELINES:
            problems.append(f"baselines: unknown {b!r} (choose from {list(BASELINES)})")

    base = merged.get("base") or {}
    base_vocab = base.get("vocab_size", 300)
    base_steps = base.get("steps", 0)
    base_langs = list(base.get("languages") or [l.code for l in languages if l.text])
    for c in base_langs:
        if c not in codes:
            problems.append(f"base.languages: unknown language {c!r}")
    if not isinstance(base_steps, int) or base_steps < 0:
        problems.append("base.steps: must be a non-negative integer")
    if baselines and base_vocab in grid.vocab_size:
        problems.append("base.vocab_size equals a grid vocab size; baseline records would collide")

    def sub(name, cls, extra_drop=()):
        opts = {k: v for k, v in (merged.get(name) or {}).items() if k not in extra_drop}
        known = {f.name for f in fields(cls)}
        for k in opts:
            if k not in known:
                problems.append(f"{name}.{k}: unknown option")
        try:
            return cls(**{k: v for k, v in opts.items() if k in known})
        except (TypeError, ValueError) as exc:
            problems.append(f"{name}: {exc}")
            return None

    cleaning = sub("cleaning", CleaningConfig)
    ft_opts = dict(merged.get("finetuning") or {})
    ft_opts["seeds"] = tuple(grid.seeds)
    merged["finetuning"] = ft_opts
    finetuning = sub("finetuning", FinetuneConfig)
    pre = dict(merged.get("pretraining") or {})
    for k in ("total_steps", "seed"):
        if k in pre:
            problems.append(f"pretraining.{k}: set by the grid, not the config")
            pre.pop(k)
    known = {f.name for f in fields(PretrainConfig)}
    for k in pre:
        if k not in known:
            problems.append(f"pretraining.{k}: unknown option")
    pre = {k: v for k, v in pre.items() if k in known}
    # every grid cell must be a valid pretraining run
    for steps in grid.lapt_steps:
        if isinstance(steps, int) and steps > 0:
            try:
                PretrainConfig(total_steps=steps, **{**pre, "freeze_steps": min(
                    pre.get("freeze_steps", 0), steps)})
            except (TypeError, ValueError) as exc:
                problems.append(f"pretraining (lapt_steps={steps}): {exc}")

    enc = dict(merged.get("encoder") or {})
    d, h = enc.get("model_dim", 64), enc.get("heads", 2)
    if isinstance(d, int) and isinstance(h, int) and h > 0 and d % h:
        problems.append(f"encoder: model_dim {d} not divisible by heads {h}")
    if pre.get("max_sequence_length", 0) > enc.get("max_positions", 0):
        problems.append("pretraining.max_sequence_length exceeds encoder.max_positions")
    if ft_opts.get("max_sequence_length", 0) > enc.get("max_positions", 0):
        problems.append("finetuning.max_sequence_length exceeds encoder.max_positions")

    measure = merged.get("sample_measure", "lines")
    if measure not in ("lines", "bytes"):
        problems.append(f"sample_measure: {measure!r} is not 'lines' or 'bytes'")
    workers = merged.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        problems.append("workers: must be a positive integer")

    if problems:
        raise ConfigError(problems)
    return RunConfig(
        languages=languages, grid=grid, output_dir=str(merged.get("output_dir", "runs")),
        profile=profile, groups=groups, high_resource=list(merged.get("high_resource", ["et", "fi", "hu", "ru"])),
        base_languages=base_langs, base_vocab_size=base_vocab, base_steps=base_steps,
        settings=settings, tasks=tasks, vocab_alpha=float(merged.get("vocab_alpha", 0.2)),
        vocab_lines=int(merged.get("vocab_lines", 5_000_000)), sample_measure=measure,
        dev_frac=float(merged.get("dev_frac", 0.05)), test_frac=float(merged.get("test_frac", 0.05)),
        split_seed=int(merged.get("split_seed", 0)), aux_dim=int(merged.get("aux_dim", 32)),
        focus_k=int(merged.get("focus_k", 10)), workers=workers, baselines=baselines,
        encoder=enc, cleaning=cleaning, pretraining=pre, finetuning=finetuning,
        source=_merge({}, merged),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    return build_config(raw or {}, base_dir=path.parent)
