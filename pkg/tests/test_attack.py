"""Attack strategies, the dip metric, and report emission."""
import json

import numpy as np
import pytest

from aeg import toy
from aeg.attack import (accuracy_dip, evaluate_attack, random_baseline,
                        wordbug_baseline, word_importance)
from aeg.data import LabeledExample, normalize_words
from aeg.errors import ConfigError, EmptyInputError
from aeg.report import (changed_word_positions, emit_report, render_html,
                        report_from_dict, report_to_dict)
from aeg.rewards import exact_levenshtein
from aeg.targets import OracleHandle


class KeywordClassifier:
    """Deterministic stand-in victim: class 1 iff a positive keyword occurs."""

    class config:
        num_classes = 2

    def predict(self, text):
        from aeg.autodiff import Tensor
        hit = any(w in {"good", "nice", "great"} for w in text.lower().split())
        return Tensor(np.array([0.2, 0.8]) if hit else np.array([0.8, 0.2]))


def test_accuracy_dip_reference_pairs():
    assert accuracy_dip(0.8995, 0.2813) == pytest.approx(68.73, abs=0.01)
    assert accuracy_dip(0.8995, 0.185) == pytest.approx(79.43, abs=0.01)
    assert accuracy_dip(0.0, 0.0) == 0.0
    assert accuracy_dip(0.5, 0.5) == 0.0


def test_random_baseline_changes_exactly_one_word_per_trial():
    clf = KeywordClassifier()

    class RecordingHandle(OracleHandle):
        def __init__(self):
            super().__init__(clf, budget=10)
            self.seen = []

        def query(self, text):
            self.seen.append(text)
            return super().query(text)

    handle = RecordingHandle()
    text = "the film seemed rather long today"
    result = random_baseline(handle, text, 0, np.random.default_rng(0),
                             synonym_table=toy.SYNONYMS)
    original = normalize_words(text)
    for candidate in handle.seen:
        words = normalize_words(candidate)
        assert len(words) == len(original)
        assert sum(1 for a, b in zip(words, original) if a != b) == 1
    assert result.queries_used == handle.query_count <= 10


def test_random_baseline_success_and_failure_paths():
    clf = KeywordClassifier()
    # label 1 with one keyword: flipping needs that keyword broken
    ok = random_baseline(OracleHandle(clf, budget=50), "the movie was good", 1,
                         np.random.default_rng(1), synonym_table={})
    if ok.success:
        assert not any(w in {"good", "nice", "great"}
                       for w in ok.adversarial.split())
    fail = random_baseline(OracleHandle(clf, budget=2), "good nice great good", 1,
                           np.random.default_rng(2), synonym_table={})
    assert not fail.success
    assert fail.queries_used == 2


def test_random_baseline_empty_text_raises():
    with pytest.raises(EmptyInputError):
        random_baseline(OracleHandle(KeywordClassifier(), budget=5), "  ", 0,
                        np.random.default_rng(0))


def test_wordbug_requires_budget_for_importance_pass():
    clf = KeywordClassifier()
    with pytest.raises(ConfigError):
        wordbug_baseline(OracleHandle(clf, budget=4), "one two three four five",
                         0, np.random.default_rng(0))


def test_wordbug_targets_important_words_first():
    clf = KeywordClassifier()
    handle = OracleHandle(clf, budget=10)
    result = wordbug_baseline(handle, "the movie was good", 1,
                              np.random.default_rng(0))
    assert result.success
    # the first transform hits the only important word
    changed = [i for i, (a, b) in enumerate(zip(
        normalize_words(result.adversarial), ["the", "movie", "was", "good"]))
        if a != b]
    assert changed == [3]
    assert result.queries_used == 5  # 4 deletions + 1 transform query


def test_word_importance_scores_keyword_highest():
    clf = KeywordClassifier()
    handle = OracleHandle(clf)
    scores = word_importance(handle, "the movie was good", 1)
    assert int(np.argmax(scores)) == 3
    assert handle.query_count == 5


def make_test_set():
    return [LabeledExample("the movie was good", 1),
            LabeledExample("a nice story", 1),
            LabeledExample("the plot seemed flat", 0),
            LabeledExample("a long slow film", 0)]


def test_evaluate_attack_audits_queries_and_counts_failures_as_originals():
    clf = KeywordClassifier()

    def attacker(handle, ex, pred_before):
        return random_baseline(handle, ex.text, ex.label,
                               np.random.default_rng(5),
                               pred_before=pred_before)

    report = evaluate_attack("random", attacker, clf, make_test_set(), budget=8)
    assert report.attacker == "random"
    assert report.acc_before == 1.0
    assert 0.0 <= report.acc_after <= 1.0
    assert report.dip_percent == pytest.approx(
        100.0 * (report.acc_before - report.acc_after) / report.acc_before)
    for result in report.results:
        assert result.queries_used <= 8
    assert report.mean_queries <= 8


def test_evaluate_attack_empty_test_set():
    with pytest.raises(EmptyInputError):
        evaluate_attack("random", None, KeywordClassifier(), [], 5)


def make_report():
    clf = KeywordClassifier()

    def attacker(handle, ex, pred_before):
        return random_baseline(handle, ex.text, ex.label,
                               np.random.default_rng(5),
                               pred_before=pred_before)
    return evaluate_attack("random", attacker, clf, make_test_set(), budget=8)


def test_report_dict_schema_and_round_trip():
    report = make_report()
    data = report_to_dict(report)
    for key in ("attacker", "acc_before", "acc_after", "dip_percent",
                "mean_queries", "mean_semantic", "mean_lexical", "examples"):
        assert key in data
    for ex in data["examples"]:
        for key in ("original", "adversarial", "label", "pred_before",
                    "pred_after", "success", "queries"):
            assert key in ex
    again = report_to_dict(report_from_dict(data))
    assert again == data


def test_emit_report_is_byte_stable(tmp_path):
    report = make_report()
    json_a, html_a = emit_report(report, str(tmp_path / "a"))
    json_b, html_b = emit_report(report, str(tmp_path / "b"))
    assert open(json_a, "rb").read() == open(json_b, "rb").read()
    assert open(html_a, "rb").read() == open(html_b, "rb").read()
    parsed = json.load(open(json_a))
    assert parsed["attacker"] == "random"


def test_changed_word_positions():
    assert changed_word_positions("the movie was good", "the film was gud") == {1, 3}
    assert changed_word_positions("a b c", "a b c") == set()
    assert changed_word_positions("a b", "a x b") == {1}


def test_render_html_highlights_and_attention():
    report = make_report()
    report.results[0].attention = [0.1, 0.6, 0.2, 0.1]
    html_text = render_html(report)
    assert "<html" in html_text
    assert "class=\"changed\"" in html_text or "changed" in html_text
    assert "rgba(0, 160, 0" in html_text          # attention shading
    assert "data-intensity=\"1.000\"" in html_text  # peak word normalized to 1


def test_word_level_edit_fraction_measurable_from_results():
    report = make_report()
    for r in report.results:
        a = normalize_words(r.original)
        b = normalize_words(r.adversarial)
        frac = exact_levenshtein(a, b) / max(len(a), len(b))
        assert 0.0 <= frac <= 1.0
