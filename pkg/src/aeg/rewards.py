"""Reward components for policy-gradient fine-tuning.

Three signals: the oracle's probability drop on the true class, a learned
semantic matcher, and a learned approximation of normalized Levenshtein
similarity. An exact dynamic-programming edit distance is kept alongside
as the test oracle for the learned one.
"""
from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from . import nn
from .autodiff import Tensor, concat, embedding_lookup, no_grad, softmax, stack
from .data import misspell_word
from .errors import EmptyInputError, RewardRangeError


@dataclass
class RewardWeights:
    adversarial: float = 1.0
    semantic: float = 0.5
    lexical: float = 0.25

    def __post_init__(self):
        if min(self.adversarial, self.semantic, self.lexical) < 0:
            raise RewardRangeError("reward weights must be nonnegative")
        if self.adversarial == self.semantic == self.lexical == 0:
            raise RewardRangeError("at least one reward weight must be nonzero")


@dataclass
class RewardBreakdown:
    adversarial: float
    semantic: float
    lexical: float
    combined: float

    def as_dict(self):
        return {"R_A": self.adversarial, "R_S": self.semantic,
                "R_L": self.lexical, "r": self.combined}


def combine(adversarial, semantic, lexical, weights):
    for name, value in (("adversarial", adversarial), ("semantic", semantic),
                        ("lexical", lexical)):
        if not 0.0 <= value <= 1.0:
            raise RewardRangeError(f"{name} reward {value} outside [0, 1]")
    return (weights.adversarial * adversarial + weights.semantic * semantic
            + weights.lexical * lexical)


def adversarial_reward(oracle, text, true_label):
    """1 - P_l from a single oracle query."""
    probs = oracle.query(text)
    return float(1.0 - probs[true_label])


def exact_levenshtein(a, b):
    """Unit-cost edit distance between two sequences (strings or token lists)."""
    a, b = list(a), list(b)
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (0 if ca == cb else 1))
        prev = cur
    return prev[-1]


def normalized_levenshtein(a, b):
    if not a and not b:
        return 0.0
    return exact_levenshtein(a, b) / max(len(a), len(b))


# -- character encoder shared by both learned reward models ------------------

REWARD_ALPHABET = string.ascii_lowercase + string.digits + " '-_."
_CHAR_IDS = {c: i + 1 for i, c in enumerate(REWARD_ALPHABET)}  # 0 = unknown


def _char_ids(text):
    return [_CHAR_IDS.get(c, 0) for c in text.lower()]


class CharSeqEncoder(nn.Module):
    """Bidirectional character GRU with self-attentive pooling."""

    def __init__(self, name, char_emb, hidden, rng):
        self.hidden = hidden
        self.embedding = nn.Parameter(f"{name}.embedding",
                                      (len(REWARD_ALPHABET) + 1, char_emb), rng)
        self.gru_fwd = nn.GruCell(f"{name}.gru_fwd", char_emb, hidden, rng)
        self.gru_bwd = nn.GruCell(f"{name}.gru_bwd", char_emb, hidden, rng)
        self.attn_score = nn.Dense(f"{name}.attn_score", hidden, 1, rng)

    def embed(self, text):
        ids = _char_ids(text)
        if not ids:
            raise EmptyInputError("cannot embed empty text")
        embs = embedding_lookup(self.embedding.tensor, ids)
        states = nn.bigru_encode(self.gru_fwd, self.gru_bwd,
                                 [embs[i] for i in range(len(ids))])
        mat = stack(states)
        weights = softmax(mat @ self.attn_score.weight.tensor
                          + self.attn_score.bias.tensor, axis=0)
        pooled = weights.reshape(len(ids)) @ mat
        mean = mat.mean(axis=0)
        return concat([pooled, mean])


class _PairScorer(nn.Module):
    """Symmetric sigmoid head over [(a-b)^2; a*b] features of two embeddings."""

    def __init__(self, name, emb_size, rng):
        self.head = nn.Dense(f"{name}.head", 2 * emb_size, 1, rng,
                             activation="sigmoid")

    def __call__(self, ea, eb):
        diff = ea - eb
        feats = concat([(diff * diff), ea * eb])
        return self.head(feats)[0]


class LexicalModel(nn.Module):
    """Learned approximate-Levenshtein similarity in [0, 1]."""

    def __init__(self, rng, char_emb=12, hidden=24):
        self.encoder = CharSeqEncoder("lex.enc", char_emb, hidden, rng)
        self.scorer = _PairScorer("lex", 2 * hidden, rng)

    def score_graph(self, a, b):
        return self.scorer(self.encoder.embed(a), self.encoder.embed(b))

    def similarity(self, a, b):
        with no_grad():
            return self.score_graph(a, b).item()


class MatcherModel(nn.Module):
    """Learned semantic match score in [0, 1]; symmetric by construction."""

    def __init__(self, rng, char_emb=12, hidden=24):
        self.encoder = CharSeqEncoder("match.enc", char_emb, hidden, rng)
        self.scorer = _PairScorer("match", 2 * hidden, rng)

    def score_graph(self, a, b):
        return self.scorer(self.encoder.embed(a), self.encoder.embed(b))

    def similarity(self, a, b):
        with no_grad():
            return self.score_graph(a, b).item()


# -- training ----------------------------------------------------------------

def _random_string(rng, min_len=3, max_len=10):
    length = int(rng.integers(min_len, max_len + 1))
    return "".join(string.ascii_lowercase[rng.integers(26)] for _ in range(length))


def make_lexical_pairs(rng, n_pairs, word_pool=None, nickname_table=None):
    """Synthetic (a, b, 1 - normalized edit distance) triples."""
    pool = list(word_pool) if word_pool else []
    nicknames = list(nickname_table.items()) if nickname_table else []
    pairs = []
    for _ in range(n_pairs):
        if pool and rng.random() < 0.7:
            base_words = [pool[rng.integers(len(pool))]
                          for _ in range(int(rng.integers(1, 4)))]
        else:
            base_words = [_random_string(rng)
                          for _ in range(int(rng.integers(1, 4)))]
        a = " ".join(base_words)
        roll = rng.random()
        if nicknames and roll < 0.1:
            src, dst = nicknames[rng.integers(len(nicknames))]
            a, b = src, dst
        elif roll < 0.25:
            b = a  # identical pair
        elif roll < 0.45:
            b = " ".join(_random_string(rng)
                         for _ in range(int(rng.integers(1, 4))))  # unrelated
        else:
            words = a.split()
            n_edits = int(rng.integers(1, max(2, len(a) // 3)))
            for _ in range(n_edits):
                idx = int(rng.integers(len(words)))
                words[idx] = misspell_word(words[idx], rng) or words[idx]
            b = " ".join(w for w in words if w)
            if not b:
                b = a
        pairs.append((a, b, 1.0 - normalized_levenshtein(a, b)))
    return pairs


def train_lexical(model, rng, n_pairs=2000, epochs=5, learning_rate=2e-3,
                  word_pool=None, nickname_table=None):
    """Squared-error regression onto 1 - normalized DP edit distance.

    Each epoch draws a fresh batch of synthetic pairs so the model sees
    n_pairs * epochs distinct supervision points.
    """
    if n_pairs < 1000:
        raise ValueError("need at least 1000 synthetic pairs")
    params = model.parameters()
    opt = nn.Optimizer("adam", learning_rate)
    for _ in range(epochs):
        pairs = make_lexical_pairs(rng, n_pairs, word_pool, nickname_table)
        order = rng.permutation(len(pairs))
        for i in order:
            a, b, target = pairs[i]
            pred = model.score_graph(a, b)
            diff = pred - Tensor(np.array(target))
            loss = diff * diff
            loss.backward()
            nn.clip_gradients(params)
            opt.apply(params)
    return model


def train_matcher(model, paraphrases, rng, epochs=2, learning_rate=2e-3):
    """Binary cross-entropy: paraphrase pairs vs randomly re-paired texts."""
    paraphrases = list(paraphrases)
    if not paraphrases:
        raise EmptyInputError("empty paraphrase set")
    examples = []
    for pair in paraphrases:
        examples.append((pair.source, pair.target, 1.0))
        other = paraphrases[rng.integers(len(paraphrases))]
        if other.target != pair.target:
            examples.append((pair.source, other.target, 0.0))
    params = model.parameters()
    opt = nn.Optimizer("adam", learning_rate)
    for _ in range(epochs):
        order = rng.permutation(len(examples))
        for i in order:
            a, b, label = examples[i]
            pred = model.score_graph(a, b)
            if label == 1.0:
                loss = -(pred.log())
            else:
                loss = -((Tensor(np.array(1.0)) - pred).log())
            loss.backward()
            nn.clip_gradients(params)
            opt.apply(params)
    return model


def compute_rewards(oracle, matcher, lexical, original, candidate, true_label,
                    weights):
    """Full breakdown for one candidate; consumes exactly one oracle query."""
    r_a = adversarial_reward(oracle, candidate, true_label)
    r_s = min(1.0, max(0.0, matcher.similarity(original, candidate))) if matcher else 0.0
    r_l = min(1.0, max(0.0, lexical.similarity(original, candidate))) if lexical else 0.0
    return RewardBreakdown(adversarial=r_a, semantic=r_s, lexical=r_l,
                           combined=combine(r_a, r_s, r_l, weights))
