"""Synthetic two-class keyword task for desk-scale experiments.

Each example is a short filler sentence carrying two sentiment keywords
from one class's list; the label is the keyword class. Redundant keywords
make single-word perturbations (the Random baseline) insufficient, so
attackers must learn where and how much to perturb.
"""
from __future__ import annotations

import numpy as np

from .data import LabeledExample, ParaphrasePair, misspell_words

POSITIVE = ["good", "great", "nice", "super", "sweet", "solid"]
NEGATIVE = ["bad", "awful", "poor", "gross", "lousy", "grim"]

FILLERS = [
    "the", "a", "this", "that", "movie", "film", "show", "plot", "story",
    "acting", "scene", "music", "script", "cast", "ending", "start", "was",
    "is", "felt", "seemed", "looked", "had", "with", "and", "but", "very",
    "quite", "really", "rather", "fairly", "most", "some", "many", "whole",
    "first", "last", "long", "short", "slow", "fast", "loud", "quiet",
    "early", "late", "old", "new", "big", "small", "plain", "clear",
]

# word -> word synonym table; keywords map within their own class so the
# label survives a paraphrase.
SYNONYMS = {
    "good": "nice", "great": "super", "nice": "good", "super": "great",
    "sweet": "solid", "solid": "sweet",
    "bad": "poor", "awful": "gross", "poor": "bad", "gross": "awful",
    "lousy": "grim", "grim": "lousy",
    "movie": "film", "film": "movie", "show": "story", "story": "plot",
    "plot": "story", "was": "is", "is": "was", "felt": "seemed",
    "seemed": "felt", "very": "quite", "quite": "very", "really": "rather",
    "rather": "really", "big": "small", "long": "short", "start": "ending",
}


def make_example(rng, n_keywords=2):
    label = int(rng.integers(2))
    keywords = POSITIVE if label == 1 else NEGATIVE
    n_fill = int(rng.integers(6, 10))
    words = [FILLERS[rng.integers(len(FILLERS))] for _ in range(n_fill)]
    slots = rng.choice(n_fill + 1, size=n_keywords, replace=False)
    for offset, slot in enumerate(sorted(int(s) for s in slots)):
        words.insert(slot + offset, keywords[rng.integers(len(keywords))])
    return LabeledExample(text=" ".join(words), label=label)


def make_dataset(rng, n_examples=2000, n_keywords=2):
    return [make_example(rng, n_keywords) for _ in range(n_examples)]


def paraphrase(text, rng, synonym_prob=0.3):
    """Synonym-substituted variant (label-preserving by table construction)."""
    words = text.split()
    out = []
    for w in words:
        repl = SYNONYMS.get(w)
        if repl is not None and rng.random() < synonym_prob:
            out.append(repl)
        else:
            out.append(w)
    return " ".join(out)


def make_paraphrase_pairs(examples, rng, synonym_prob=0.3):
    """One paraphrase pair per example, source = the original text."""
    return [ParaphrasePair(source=ex.text, target=paraphrase(ex.text, rng, synonym_prob))
            for ex in examples]


def make_misspelled_pairs(examples, rng, rate_cap=0.10):
    return [ParaphrasePair(source=ex.text,
                           target=" ".join(misspell_words(ex.text.split(), rng, rate_cap)),
                           provenance="misspell_only")
            for ex in examples]
