"""Attack strategies and the evaluation harness.

Every attacker sees only a budgeted OracleHandle. Failed attacks return a
result (success=False) rather than raising; the harness counts failed
attacks as unperturbed originals when computing post-attack accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import no_grad
from .data import misspell_word, normalize_words
from .errors import BudgetExhaustedError, ConfigError, EmptyInputError
from .rewards import (RewardBreakdown, RewardWeights, combine,
                      exact_levenshtein)
from .targets import OracleHandle, evaluate_accuracy

ALPHABET = "abcdefghijklmnopqrstuvwxyz"


@dataclass
class AttackResult:
    original: str
    label: int
    adversarial: str
    pred_before: list
    pred_after: list
    success: bool
    queries_used: int
    breakdown: object = None     # RewardBreakdown, when reward models ran
    attention: list = field(default_factory=list)


@dataclass
class Report:
    attacker: str
    acc_before: float
    acc_after: float
    dip_percent: float
    mean_queries: float
    mean_semantic: float
    mean_lexical: float
    results: list = field(default_factory=list)


def accuracy_dip(acc_before, acc_after):
    """Relative percentage dip: 100 * (before - after) / before."""
    if acc_before == 0.0:
        return 0.0
    return 100.0 * (acc_before - acc_after) / acc_before


def attack_example_aeg(model, oracle, matcher, lexical, text, label,
                       weights=None, rng=None, pred_before=None,
                       min_similarity=0.5, max_edit_fraction=0.3):
    """Greedy candidate first; then sampled candidates until success or
    the budget runs out.

    Success requires the candidate to flip the prediction AND stay close
    to the original (matcher similarity >= `min_similarity`, word-level
    edit fraction <= `max_edit_fraction`): a flip that rewrites the whole
    text is not an adversarial *example*, just a different input. Failed
    attacks return the candidate with the highest combined reward.
    """
    if weights is None:
        weights = RewardWeights()
    if rng is None:
        rng = np.random.default_rng(0)

    def close_enough(candidate_text, bd):
        if matcher is not None and bd.semantic < min_similarity:
            return False
        a = normalize_words(text)
        b = normalize_words(candidate_text)
        return exact_levenshtein(a, b) / max(1, max(len(a), len(b))) <= max_edit_fraction

    def score(candidate_text):
        probs = oracle.query(candidate_text)
        r_a = float(1.0 - probs[label])
        r_s = min(1.0, max(0.0, matcher.similarity(text, candidate_text))) if matcher else 0.0
        r_l = min(1.0, max(0.0, lexical.similarity(text, candidate_text))) if lexical else 0.0
        bd = RewardBreakdown(r_a, r_s, r_l, combine(r_a, r_s, r_l, weights))
        return probs, bd

    with no_grad():
        enc = model.encode(text)
        greedy = model.decode(enc, mode="greedy")
    attention = [float(w) for w in enc.summary_weights.values]
    best = None
    try:
        probs, bd = score(greedy.text)
        best = (greedy.text, probs, bd)
        if int(np.argmax(probs)) != label and close_enough(greedy.text, bd):
            return AttackResult(text, label, greedy.text, pred_before,
                                list(probs), True, oracle.query_count, bd,
                                attention)
        while oracle.budget is None or oracle.query_count < oracle.budget:
            with no_grad():
                sampled = model.decode(enc, mode="sample", rng=rng)
            if not sampled.words:
                continue
            probs, bd = score(sampled.text)
            if int(np.argmax(probs)) != label and close_enough(sampled.text, bd):
                return AttackResult(text, label, sampled.text, pred_before,
                                    list(probs), True, oracle.query_count,
                                    bd, attention)
            if bd.combined > best[2].combined:
                best = (sampled.text, probs, bd)
    except BudgetExhaustedError:
        pass
    adv, probs, bd = best
    return AttackResult(text, label, adv, pred_before, list(probs), False,
                        oracle.query_count, bd, attention)


def random_baseline(oracle, text, label, rng, synonym_table=None,
                    pred_before=None):
    """Each trial perturbs one random word of the original text: a random
    character replacement, or a synonym substitution when the table has
    one (empty table degenerates to character replacement only)."""
    synonym_table = synonym_table or {}
    words = normalize_words(text)
    if not words:
        raise EmptyInputError("cannot attack empty text")
    last = (text, None)
    try:
        while oracle.budget is None or oracle.query_count < oracle.budget:
            trial = list(words)
            idx = int(rng.integers(len(trial)))
            synonym = synonym_table.get(trial[idx])
            if synonym is not None and rng.random() < 0.5:
                trial[idx] = synonym
            else:
                pos = int(rng.integers(len(trial[idx])))
                ch = ALPHABET[rng.integers(len(ALPHABET))]
                trial[idx] = trial[idx][:pos] + ch + trial[idx][pos + 1:]
            candidate = " ".join(trial)
            probs = oracle.query(candidate)
            last = (candidate, probs)
            if int(np.argmax(probs)) != label:
                return AttackResult(text, label, candidate, pred_before,
                                    list(probs), True, oracle.query_count)
    except BudgetExhaustedError:
        pass
    candidate, probs = last
    return AttackResult(text, label, candidate, pred_before,
                        list(probs) if probs is not None else None, False,
                        oracle.query_count)


def wordbug_baseline(oracle, text, label, rng, pred_before=None):
    """Deletion-based importance scoring, then character transforms on the
    most important words until success or budget exhaustion."""
    words = normalize_words(text)
    if not words:
        raise EmptyInputError("cannot attack empty text")
    if oracle.budget is not None and oracle.budget < len(words) + 1:
        raise ConfigError(
            f"wordbug needs budget >= n_words + 1 = {len(words) + 1}, "
            f"got {oracle.budget}")
    # P_l after deleting word i; lower means the word mattered more, so
    # ranking ascending is the same as ranking by importance descending.
    deleted_pl = []
    for i in range(len(words)):
        reduced = words[:i] + words[i + 1:]
        probs = oracle.query(" ".join(reduced) if reduced else words[i])
        deleted_pl.append(float(probs[label]))
    order = sorted(range(len(words)), key=lambda i: deleted_pl[i])
    trial = list(words)
    last = (text, None)
    try:
        for i in order:
            if oracle.budget is not None and oracle.query_count >= oracle.budget:
                break
            trial[i] = misspell_word(trial[i], rng)
            candidate = " ".join(trial)
            probs = oracle.query(candidate)
            last = (candidate, probs)
            if int(np.argmax(probs)) != label:
                return AttackResult(text, label, candidate, pred_before,
                                    list(probs), True, oracle.query_count)
    except BudgetExhaustedError:
        pass
    candidate, probs = last
    return AttackResult(text, label, candidate, pred_before,
                        list(probs) if probs is not None else None, False,
                        oracle.query_count)


def word_importance(oracle, text, label):
    """Importance = drop in P_l when the word is deleted (n queries)."""
    words = normalize_words(text)
    base = float(oracle.query(text)[label])
    scores = []
    for i in range(len(words)):
        reduced = words[:i] + words[i + 1:]
        probs = oracle.query(" ".join(reduced) if reduced else words[i])
        scores.append(base - float(probs[label]))
    return scores


def evaluate_attack(attacker_name, attacker_fn, classifier, test_set, budget,
                    matcher=None, lexical=None):
    """Run an attacker over the test set and assemble the dip report.

    `attacker_fn(handle, example, pred_before)` must return an AttackResult;
    each example gets a fresh handle with the per-example budget, and the
    handle's counter is audited against the result.
    """
    test_set = list(test_set)
    if not test_set:
        raise EmptyInputError("empty test set")
    before_handle = OracleHandle(classifier)
    acc_before = evaluate_accuracy(before_handle, test_set)
    preds_before = []
    with no_grad():
        for ex in test_set:
            preds_before.append(classifier.predict(ex.text).values.copy())
    results = []
    correct_after = 0
    for ex, pb in zip(test_set, preds_before):
        handle = OracleHandle(classifier, budget=budget)
        result = attacker_fn(handle, ex, list(float(v) for v in pb))
        assert handle.query_count == result.queries_used, "query audit mismatch"
        assert result.queries_used <= budget, "budget exceeded"
        if result.success:
            correct_after += int(np.argmax(result.pred_after) == ex.label)
        else:
            correct_after += int(np.argmax(pb) == ex.label)
        if result.breakdown is None and result.success and (matcher or lexical):
            r_s = matcher.similarity(ex.text, result.adversarial) if matcher else 0.0
            r_l = lexical.similarity(ex.text, result.adversarial) if lexical else 0.0
            result.breakdown = RewardBreakdown(0.0, min(1.0, max(0.0, r_s)),
                                               min(1.0, max(0.0, r_l)), 0.0)
        results.append(result)
    acc_after = correct_after / len(test_set)
    wins = [r for r in results if r.success and r.breakdown is not None]
    mean_sem = float(np.mean([r.breakdown.semantic for r in wins])) if wins else 0.0
    mean_lex = float(np.mean([r.breakdown.lexical for r in wins])) if wins else 0.0
    return Report(
        attacker=attacker_name,
        acc_before=acc_before,
        acc_after=acc_after,
        dip_percent=accuracy_dip(acc_before, acc_after),
        mean_queries=float(np.mean([r.queries_used for r in results])),
        mean_semantic=mean_sem,
        mean_lexical=mean_lex,
        results=results,
    )
