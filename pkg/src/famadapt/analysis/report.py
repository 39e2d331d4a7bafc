"""Marginal-effect tables and per-setting score reports."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

from .records import COLUMNS, aggregate, mean_sd

PARAMETERS = ("lapt_steps", "vocab_size", "alpha", "finetuning_lines", "task", "setting", "seed")


def marginalize(records, parameter):
    """Mean score per (language, level of ``parameter``), pooling everything else.

    Returns rows ``{"language", "level", "n", "mean", "sd"}`` sorted by
    language then level.
    """
    if parameter not in COLUMNS or parameter in ("language", "score"):
        raise KeyError(f"cannot marginalize over {parameter!r}")
    cells = defaultdict(list)
    for r in records:
        cells[(r.language, getattr(r, parameter))].append(r.score)
    rows = []
    for (lang, level), scores in sorted(cells.items()):
        m, sd = mean_sd(scores)
        rows.append({"language": lang, "level": level, "n": len(scores), "mean": m, "sd": sd})
    return rows


def format_marginal(rows, parameter) -> str:
    lines = [f"language\t{parameter}\tn\tmean\tsd"]
    for r in rows:
        lines.append(f"{r['language']}\t{r['level']}\t{r['n']}\t{r['mean']:.4f}\t{r['sd']:.4f}")
    return "\n".join(lines) + "\n"


def _config_label(agg):
    return f"steps={agg.lapt_steps} vocab={agg.vocab_size} alpha={agg.alpha:g}"


def build_tables(records):
    """``{(setting, task): (languages, rows)}``; each row is (label, {lang: (mean, sd)}, avg)."""
    aggs = aggregate(records)
    by_table = defaultdict(lambda: defaultdict(dict))
    for a in aggs:
        by_table[(a.setting, a.task)][(a.lapt_steps, a.vocab_size, a.alpha, _config_label(a))][
            a.language] = (a.mean, a.sd)
    tables = {}
    for key in sorted(by_table):
        configs = by_table[key]
        languages = sorted({lang for cells in configs.values() for lang in cells})
        rows = []
        for cfg in sorted(configs):
            cells = configs[cfg]
            avg = sum(m for m, _ in cells.values()) / len(cells)
            rows.append((cfg[3], cells, avg))
        tables[key] = (languages, rows)
    return tables


def table_tsv(languages, rows) -> str:
    header = ["config"] + [f"{lang}_mean\t{lang}_sd" for lang in languages] + ["avg"]
    lines = ["\t".join(header)]
    for label, cells, avg in rows:
        out = [label]
        for lang in languages:
            if lang in cells:
                out.append(f"{cells[lang][0]:.2f}\t{cells[lang][1]:.2f}")
            else:
                out.append("\t")
        out.append(f"{avg:.2f}")
        lines.append("\t".join(out))
    return "\n".join(lines) + "\n"


def table_markdown(languages, rows, title="") -> str:
    lines = [f"### {title}", ""] if title else []
    lines.append("| config | " + " | ".join(languages) + " | Avg |")
    lines.append("|---" * (len(languages) + 2) + "|")
    for label, cells, avg in rows:
        vals = [f"{cells[l][0]:.1f} ± {cells[l][1]:.1f}" if l in cells else "" for l in languages]
        lines.append(f"| {label} | " + " | ".join(vals) + f" | {avg:.1f} |")
    return "\n".join(lines) + "\n"


def emit_report(records, out_dir) -> list[Path]:
    """Write one TSV and one markdown table per (setting, task); returns written paths."""
    records = list(records)
    if not records:
        raise ValueError("no records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    md_parts = []
    for (setting, task), (languages, rows) in build_tables(records).items():
        path = out_dir / f"{setting}.{task}.tsv"
        path.write_text(table_tsv(languages, rows), encoding="utf-8")
        written.append(path)
        md_parts.append(table_markdown(languages, rows, f"{setting} / {task}"))
    md = out_dir / "report.md"
    md.write_text("\n".join(md_parts), encoding="utf-8")
    written.append(md)
    return written
