"""Desk-scale victim classifiers behind a query-counting oracle.

The attack side only ever sees an OracleHandle: text in, probability
vector out, one query counted per call. Classifier internals stay on
this side of the fence.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .autodiff import Tensor, concat, embedding_lookup, conv1d_windows, no_grad, softmax
from .data import PAD, build_vocab, tokenize
from .errors import BudgetExhaustedError, EmptyInputError


@dataclass
class ClassifierConfig:
    kind: str = "cnn_word"            # cnn_word | cnn_char
    num_classes: int = 2
    embedding_dim: int = 32
    filter_widths: tuple = (3, 4, 5)
    filters_per_width: int = 24
    dropout: float = 0.0
    epochs: int = 5
    learning_rate: float = 1e-3
    max_word_vocab: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("cnn_word", "cnn_char"):
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if not self.filter_widths:
            raise ValueError("need at least one filter width")


class WordCnn(nn.Module):
    """Kim-style sentence classifier: parallel width-{3,4,5} convolutions,
    max-over-time pooling, dense softmax."""

    def __init__(self, config, vocab, rng):
        self.config = config
        self.vocab = vocab
        d = config.embedding_dim
        self.embedding = nn.Parameter("wcnn.embedding", (vocab.word_size, d), rng)
        self.conv_weights = []
        self.conv_biases = []
        for w in config.filter_widths:
            self.conv_weights.append(
                nn.Parameter(f"wcnn.conv{w}.weight", (w * d, config.filters_per_width), rng))
            self.conv_biases.append(
                nn.Parameter(f"wcnn.conv{w}.bias", (config.filters_per_width,), rng))
        total = config.filters_per_width * len(config.filter_widths)
        self.out = nn.Dense("wcnn.out", total, config.num_classes, rng)

    def forward_ids(self, word_ids):
        ids = list(word_ids)
        max_w = max(self.config.filter_widths)
        while len(ids) < max_w:
            ids.append(PAD)
        emb = embedding_lookup(self.embedding.tensor, ids)
        pooled = []
        for w, weight, bias in zip(self.config.filter_widths,
                                   self.conv_weights, self.conv_biases):
            conv = conv1d_windows(emb, weight.tensor, bias.tensor, w).relu()
            pooled.append(conv.max(axis=0))
        return softmax(self.out(concat(pooled)))

    def predict(self, text):
        tok = tokenize(text, self.vocab)
        return self.forward_ids(tok.words)


class CharCnn(nn.Module):
    """Shallow character-level classifier: two stacked convolutions with
    pooling, then a dense softmax head."""

    CONV_WIDTH = 5
    POOL = 2

    def __init__(self, config, vocab, rng):
        self.config = config
        self.vocab = vocab
        d = config.embedding_dim
        f = config.filters_per_width
        self.embedding = nn.Parameter("ccnn.embedding", (vocab.char_size, d), rng)
        self.conv1_w = nn.Parameter("ccnn.conv1.weight", (self.CONV_WIDTH * d, f), rng)
        self.conv1_b = nn.Parameter("ccnn.conv1.bias", (f,), rng)
        self.conv2_w = nn.Parameter("ccnn.conv2.weight", (self.CONV_WIDTH * f, f), rng)
        self.conv2_b = nn.Parameter("ccnn.conv2.bias", (f,), rng)
        self.out = nn.Dense("ccnn.out", f, config.num_classes, rng)

    def forward_ids(self, char_ids):
        ids = list(char_ids)
        # enough length for two convolutions plus one pooling stage
        need = self.CONV_WIDTH * self.POOL + self.CONV_WIDTH
        while len(ids) < need:
            ids.append(PAD)
        emb = embedding_lookup(self.embedding.tensor, ids)
        h = conv1d_windows(emb, self.conv1_w.tensor, self.conv1_b.tensor,
                           self.CONV_WIDTH).relu()
        n = h.shape[0] - h.shape[0] % self.POOL
        h = h[:n].reshape(n // self.POOL, self.POOL, h.shape[1]).max(axis=1)
        h = conv1d_windows(h, self.conv2_w.tensor, self.conv2_b.tensor,
                           self.CONV_WIDTH).relu()
        return softmax(self.out(h.max(axis=0)))

    def predict(self, text):
        tok = tokenize(text, self.vocab)
        return self.forward_ids(tok.char_ids)


def train_classifier(config, train_examples):
    """Train a victim on its own split; vocabulary comes from that split only."""
    train_examples = list(train_examples)
    if not train_examples:
        raise EmptyInputError("empty training set")
    for ex in train_examples:
        if not 0 <= ex.label < config.num_classes:
            raise ValueError(f"label {ex.label} out of range [0, {config.num_classes})")
    rng = np.random.default_rng(config.seed)
    vocab = build_vocab([ex.text for ex in train_examples], config.max_word_vocab)
    model = (WordCnn if config.kind == "cnn_word" else CharCnn)(config, vocab, rng)
    params = model.parameters()
    opt = nn.Optimizer("adam", config.learning_rate)
    tokens = [tokenize(ex.text, vocab) for ex in train_examples]
    for _ in range(config.epochs):
        order = rng.permutation(len(train_examples))
        for i in order:
            tok, label = tokens[i], train_examples[i].label
            ids = tok.words if config.kind == "cnn_word" else tok.char_ids
            probs = model.forward_ids(ids)
            loss = nn.cross_entropy(probs, label)
            loss.backward()
            nn.clip_gradients(params)
            opt.apply(params)
    return model


@dataclass
class OracleHandle:
    """Query-counting wrapper; the only surface the attack side touches."""

    classifier: object
    budget: int | None = None
    query_count: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def query(self, text):
        with self._lock:
            if self.budget is not None and self.query_count >= self.budget:
                raise BudgetExhaustedError(
                    f"oracle budget of {self.budget} queries exhausted")
            self.query_count += 1
        with no_grad():
            return self.classifier.predict(text).values.copy()

    @property
    def num_classes(self):
        return self.classifier.config.num_classes


def oracle_query(handle, text):
    return handle.query(text)


def evaluate_accuracy(handle, examples):
    """Fraction of argmax-correct predictions (ties break to lower index)."""
    examples = list(examples)
    if not examples:
        raise EmptyInputError("cannot evaluate on an empty example set")
    correct = 0
    for ex in examples:
        probs = handle.query(ex.text)
        if int(np.argmax(probs)) == ex.label:
            correct += 1
    return correct / len(examples)


def save_classifier(path, model):
    """Checkpoint plus a JSON sidecar carrying the kind tag and vocabulary."""
    import dataclasses
    import json

    nn.save_module(path, model)
    meta = {
        "config": dataclasses.asdict(model.config),
        "word_to_id": model.vocab.word_to_id,
        "char_to_id": model.vocab.char_to_id,
    }
    meta["config"]["filter_widths"] = list(model.config.filter_widths)
    with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh)


def load_classifier(path):
    import json

    from .data import Vocab

    with open(f"{path}.meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    cfg = dict(meta["config"])
    cfg["filter_widths"] = tuple(cfg["filter_widths"])
    config = ClassifierConfig(**cfg)
    vocab = Vocab(meta["word_to_id"], meta["char_to_id"])
    rng = np.random.default_rng(config.seed)
    model = (WordCnn if config.kind == "cnn_word" else CharCnn)(config, vocab, rng)
    nn.load_module(path, model)
    return model
