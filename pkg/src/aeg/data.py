"""Vocabularies, tokenization with character spans, corpus I/O and the
synthetic misspelling/paraphrase augmentation used for pretraining."""
from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusFormatError, EmptyInputError

# Reserved word-vocabulary ids.
PAD, SOS, EOS, OOV = 0, 1, 2, 3
WORD_RESERVED = ["<pad>", "<sos>", "<eos>", "<oov>"]

# Reserved character-vocabulary ids. '_' doubles as the word boundary in
# the character stream and as the per-word terminator for char decoding.
CHAR_PAD, CHAR_SOS, CHAR_EOS, CHAR_BOUNDARY, CHAR_OOV = 0, 1, 2, 3, 4
BOUNDARY = "_"
CHAR_RESERVED = ["<cpad>", "<csos>", "<ceos>", BOUNDARY, "<coov>"]

ALPHABET = string.ascii_lowercase


@dataclass
class Vocab:
    word_to_id: dict
    char_to_id: dict
    id_to_word: list = field(default_factory=list)
    id_to_char: list = field(default_factory=list)

    def __post_init__(self):
        if not self.id_to_word:
            self.id_to_word = [None] * len(self.word_to_id)
            for w, i in self.word_to_id.items():
                self.id_to_word[i] = w
        if not self.id_to_char:
            self.id_to_char = [None] * len(self.char_to_id)
            for c, i in self.char_to_id.items():
                self.id_to_char[i] = c

    @property
    def word_size(self):
        return len(self.word_to_id)

    @property
    def char_size(self):
        return len(self.char_to_id)

    def word_id(self, word):
        return self.word_to_id.get(word, OOV)

    def char_id(self, ch):
        return self.char_to_id.get(ch, CHAR_OOV)


@dataclass
class TokenizedText:
    raw: str
    words: list            # word ids (OOV for unknown words)
    word_strings: list     # surface forms after normalization
    char_ids: list         # ids over "w1_w2_..._wn"
    spans: list            # per-word (p, q) inclusive char positions
    vocab: Vocab

    @property
    def n_words(self):
        return len(self.words)


@dataclass
class LabeledExample:
    text: str
    label: int


@dataclass
class ParaphrasePair:
    source: str
    target: str
    provenance: str = "paraphrase"   # paraphrase | misspell_only | both


@dataclass
class SplitConfig:
    ratios: tuple = (0.6, 0.3, 0.1)
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")


def normalize_words(raw):
    """Lowercased whitespace tokenization; the only normalization applied."""
    return raw.lower().split()


def build_vocab(corpus, max_word_vocab=10000):
    """Most-frequent words up to the cap (ties lexicographic); all chars kept."""
    corpus = list(corpus)
    if not corpus:
        raise EmptyInputError("cannot build a vocabulary from an empty corpus")
    word_counts = Counter()
    # always include a-z: misspelling edits insert arbitrary letters, and
    # the character decoder must be able to emit them
    chars = set(ALPHABET)
    for line in corpus:
        words = normalize_words(line)
        word_counts.update(words)
        for w in words:
            chars.update(w)
    chars.discard(BOUNDARY)
    kept = sorted(word_counts, key=lambda w: (-word_counts[w], w))[:max_word_vocab]
    word_to_id = {w: i for i, w in enumerate(WORD_RESERVED)}
    for w in kept:
        word_to_id[w] = len(word_to_id)
    char_to_id = {c: i for i, c in enumerate(CHAR_RESERVED)}
    for c in sorted(chars):
        char_to_id[c] = len(char_to_id)
    return Vocab(word_to_id, char_to_id)


def tokenize(raw, vocab):
    """Tokenize into word ids plus a boundary-joined character stream.

    "movie was good" -> chars "movie_was_good", spans (0,4),(6,8),(10,13).
    """
    words = normalize_words(raw)
    if not words:
        raise EmptyInputError("cannot tokenize empty or whitespace-only text")
    char_ids = []
    spans = []
    pos = 0
    for i, w in enumerate(words):
        if i > 0:
            char_ids.append(CHAR_BOUNDARY)
            pos += 1
        start = pos
        for ch in w:
            char_ids.append(vocab.char_id(ch))
            pos += 1
        spans.append((start, pos - 1))
    return TokenizedText(
        raw=raw,
        words=[vocab.word_id(w) for w in words],
        word_strings=words,
        char_ids=char_ids,
        spans=spans,
        vocab=vocab,
    )


def detokenize(text):
    if isinstance(text, TokenizedText):
        return " ".join(text.word_strings)
    return " ".join(text)


def split_dataset(examples, config):
    """Deterministic shuffled 60-30-10 split: (target_train, aeg_pool, test)."""
    examples = list(examples)
    if len(examples) < 10:
        raise EmptyInputError(f"need at least 10 examples to split, got {len(examples)}")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(examples))
    n = len(examples)
    n_train = int(n * config.ratios[0])
    n_pool = int(n * config.ratios[1])
    idx_train = order[:n_train]
    idx_pool = order[n_train:n_train + n_pool]
    idx_test = order[n_train + n_pool:]
    pick = lambda idx: [examples[i] for i in idx]
    return pick(idx_train), pick(idx_pool), pick(idx_test)


def max_misspelled_words(n_words, rate_cap=0.10):
    return max(1, int(rate_cap * n_words))


def misspell_word(word, rng):
    """One random character insertion, deletion or replacement."""
    ops = ["insert", "replace"] if len(word) == 1 else ["insert", "delete", "replace"]
    op = ops[rng.integers(len(ops))]
    if op == "insert":
        pos = int(rng.integers(len(word) + 1))
        ch = ALPHABET[rng.integers(len(ALPHABET))]
        return word[:pos] + ch + word[pos:]
    if op == "delete":
        pos = int(rng.integers(len(word)))
        return word[:pos] + word[pos + 1:]
    pos = int(rng.integers(len(word)))
    ch = ALPHABET[rng.integers(len(ALPHABET))]
    while ch == word[pos]:   # replacement must actually change the word
        ch = ALPHABET[rng.integers(len(ALPHABET))]
    return word[:pos] + ch + word[pos + 1:]


def misspell_words(words, rng, rate_cap=0.10):
    """Misspell k ~ Uniform{1..cap} distinct words of the list."""
    words = list(words)
    cap = max_misspelled_words(len(words), rate_cap)
    k = int(rng.integers(1, cap + 1))
    positions = rng.choice(len(words), size=min(k, len(words)), replace=False)
    for pos in positions:
        words[pos] = misspell_word(words[pos], rng)
    return words


def augment_misspell(text, rng, rate_cap=0.10):
    """Misspelled copy of a TokenizedText, capped at 10% of its words."""
    if text.n_words == 0:
        raise EmptyInputError("cannot augment empty text")
    words = misspell_words(text.word_strings, rng, rate_cap)
    return tokenize(" ".join(words), text.vocab)


def make_pretrain_set(pairs, rng, misspell_fraction=0.5, augment_target_prob=0.5,
                      rate_cap=0.10):
    """Augmented pretraining pairs.

    Each pair's target side is misspelled with probability
    `augment_target_prob`; additionally a `misspell_fraction` share of
    identity pairs (x -> misspelled x) is appended so the model sees
    character-only transformations without paraphrasing.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyInputError("empty paraphrase set")
    out = []
    for pair in pairs:
        words = normalize_words(pair.target)
        if rng.random() < augment_target_prob:
            words = misspell_words(words, rng, rate_cap)
            out.append(ParaphrasePair(pair.source, " ".join(words), "both"))
        else:
            out.append(ParaphrasePair(pair.source, " ".join(words), pair.provenance))
    n_extra = int(round(misspell_fraction * len(pairs)))
    for i in range(n_extra):
        src = pairs[i % len(pairs)].source
        words = misspell_words(normalize_words(src), rng, rate_cap)
        out.append(ParaphrasePair(src, " ".join(words), "misspell_only"))
    return out


# -- corpus files ------------------------------------------------------------

MALFORMED_THRESHOLD = 0.05


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def load_classification_corpus(path, malformed_threshold=MALFORMED_THRESHOLD):
    """JSON-lines corpus: {"text": str, "label": int} per line."""
    examples = []
    bad = []
    lines = _read_lines(path)
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            text = obj["text"]
            label = int(obj["label"])
            if not isinstance(text, str) or not text.strip():
                raise ValueError("empty text")
            examples.append(LabeledExample(text=text, label=label))
        except (ValueError, KeyError, TypeError):
            bad.append(lineno)
    total = len(examples) + len(bad)
    if total == 0:
        raise EmptyInputError(f"{path}: no usable lines")
    if len(bad) / total > malformed_threshold:
        raise CorpusFormatError(
            f"{path}: {len(bad)}/{total} malformed lines, first at line {bad[0]}")
    return examples, bad


def load_paraphrase_corpus(path, malformed_threshold=MALFORMED_THRESHOLD):
    """TSV corpus: source<TAB>target per line."""
    pairs = []
    bad = []
    lines = _read_lines(path)
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            bad.append(lineno)
            continue
        pairs.append(ParaphrasePair(source=parts[0], target=parts[1]))
    total = len(pairs) + len(bad)
    if total == 0:
        raise EmptyInputError(f"{path}: no usable lines")
    if len(bad) / total > malformed_threshold:
        raise CorpusFormatError(
            f"{path}: {len(bad)}/{total} malformed lines, first at line {bad[0]}")
    return pairs, bad


def load_word_embeddings(path, dim=300):
    """Optional pretrained embeddings: token then `dim` reals per line."""
    table = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != dim + 1:
            raise CorpusFormatError(
                f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
        table[parts[0]] = np.asarray([float(v) for v in parts[1:]])
    return table


def load_tsv_table(path):
    """Two-column TSV (e.g. synonym or nickname tables) -> dict."""
    table = {}
    for line in _read_lines(path):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) == 2:
            table[parts[0].strip().lower()] = parts[1].strip().lower()
    return table
