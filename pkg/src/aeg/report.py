"""JSON and HTML report emission with attention-colored example galleries."""
from __future__ import annotations

import difflib
import html
import json
import os

from .attack import AttackResult, Report
from .data import normalize_words


def report_to_dict(report):
    examples = []
    for r in report.results:
        examples.append({
            "original": r.original,
            "adversarial": r.adversarial,
            "label": r.label,
            "pred_before": r.pred_before,
            "pred_after": r.pred_after,
            "success": r.success,
            "queries": r.queries_used,
            "attention": r.attention,
        })
    return {
        "attacker": report.attacker,
        "acc_before": report.acc_before,
        "acc_after": report.acc_after,
        "dip_percent": report.dip_percent,
        "mean_queries": report.mean_queries,
        "mean_semantic": report.mean_semantic,
        "mean_lexical": report.mean_lexical,
        "examples": examples,
    }


def report_from_dict(data):
    results = []
    for ex in data["examples"]:
        results.append(AttackResult(
            original=ex["original"], label=ex["label"],
            adversarial=ex["adversarial"], pred_before=ex["pred_before"],
            pred_after=ex["pred_after"], success=ex["success"],
            queries_used=ex["queries"], attention=ex.get("attention", [])))
    return Report(
        attacker=data["attacker"], acc_before=data["acc_before"],
        acc_after=data["acc_after"], dip_percent=data["dip_percent"],
        mean_queries=data["mean_queries"], mean_semantic=data["mean_semantic"],
        mean_lexical=data["mean_lexical"], results=results)


def changed_word_positions(original, adversarial):
    """Positions in the adversarial word list not matched to the original."""
    a = normalize_words(original)
    b = normalize_words(adversarial)
    matcher = difflib.SequenceMatcher(a=a, b=b, autojunk=False)
    changed = set(range(len(b)))
    for block in matcher.get_matching_blocks():
        for k in range(block.size):
            changed.discard(block.b + k)
    return changed


def _attention_intensities(attention):
    peak = max(attention) if attention else 0.0
    if peak <= 0.0:
        return [0.0 for _ in attention]
    return [a / peak for a in attention]


def _render_example(result):
    orig_words = normalize_words(result.original)
    intensities = _attention_intensities(result.attention)
    orig_spans = []
    for i, word in enumerate(orig_words):
        alpha = intensities[i] if i < len(intensities) else 0.0
        orig_spans.append(
            f'<span class="attn" style="background: rgba(0, 160, 0, {alpha:.3f})" '
            f'data-intensity="{alpha:.3f}">{html.escape(word)}</span>')
    changed = changed_word_positions(result.original, result.adversarial)
    adv_spans = []
    for i, word in enumerate(normalize_words(result.adversarial)):
        if i in changed:
            adv_spans.append(f'<span class="changed">{html.escape(word)}</span>')
        else:
            adv_spans.append(html.escape(word))
    status = "success" if result.success else "failed"
    return (
        f'<div class="example {status}">'
        f'<div class="orig">{" ".join(orig_spans)}</div>'
        f'<div class="adv">{" ".join(adv_spans)}</div>'
        f'<div class="meta">label={result.label} {status}, '
        f'{result.queries_used} queries</div>'
        f'</div>'
    )


_STYLE = """
body { font-family: sans-serif; margin: 2em; }
.example { margin: 1em 0; padding: 0.6em; border: 1px solid #ccc; }
.example.success { border-left: 4px solid #2a2; }
.example.failed { border-left: 4px solid #aaa; }
.changed { color: #c00; font-weight: bold; }
.meta { color: #666; font-size: 0.85em; margin-top: 0.3em; }
table { border-collapse: collapse; }
td, th { border: 1px solid #ccc; padding: 0.3em 0.8em; }
"""


def render_html(report, max_examples=50):
    rows = (
        f"<tr><td>{html.escape(report.attacker)}</td>"
        f"<td>{report.acc_before:.4f}</td><td>{report.acc_after:.4f}</td>"
        f"<td>{report.dip_percent:.2f}%</td><td>{report.mean_queries:.2f}</td>"
        f"<td>{report.mean_semantic:.3f}</td><td>{report.mean_lexical:.3f}</td></tr>"
    )
    gallery = "\n".join(_render_example(r) for r in report.results[:max_examples])
    return (
        "<!DOCTYPE html><html><head><meta charset='utf-8'>"
        f"<title>attack report: {html.escape(report.attacker)}</title>"
        f"<style>{_STYLE}</style></head><body>"
        "<h1>Attack report</h1>"
        "<table><tr><th>attacker</th><th>acc before</th><th>acc after</th>"
        "<th>dip</th><th>mean queries</th><th>mean semantic</th>"
        f"<th>mean lexical</th></tr>{rows}</table>"
        "<h2>Examples</h2>"
        "<p>Original text shaded by attention weight; changed words in red.</p>"
        f"{gallery}</body></html>"
    )


def emit_report(report, out_dir):
    """Write report.json and report.html; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "report.json")
    html_path = os.path.join(out_dir, "report.html")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=1)
    with open(html_path, "w", encoding="utf-8") as fh:
        fh.write(render_html(report))
    return json_path, html_path
