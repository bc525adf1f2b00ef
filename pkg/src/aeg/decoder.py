"""Two-level decoder: a word-GRU with attention and a perturbation vector,
plus a character-GRU that spells words.

At inference the character path triggers on out-of-vocabulary emissions
(config flag `always_spell` spells every word instead); during teacher
forcing every target word is spelled, terminator '_' included. Ablations:
`no_pert` drops the perturbation vector (smaller fusion arity), `char_dec`
replaces the two-level decoder with a single attentive character-GRU that
still uses the perturbation vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .autodiff import Tensor, concat, embedding_lookup, softmax
from .data import (CHAR_BOUNDARY, CHAR_EOS, CHAR_OOV, CHAR_PAD, CHAR_SOS,
                   EOS, OOV, PAD, SOS, tokenize)

NEG_INF = -1e9


@dataclass
class WordStep:
    state: object          # s_j
    context: object        # c_j
    attentional: object    # s~_j
    pert: object           # v_p (zero vector in no_pert mode)
    probs: object
    attn_weights: object


@dataclass
class DecodedOutput:
    word_ids: list
    words: list
    text: str
    attn_weights: list
    log_probs: list = field(default_factory=list)
    total_log_prob: object = None
    spelled: list = field(default_factory=list)


@dataclass
class TeacherForcingLosses:
    j_word: object
    j_char: object
    j_mle: object
    word_targets: list     # content word ids (terminal EOS tracked separately)
    char_targets: list     # per-word char id lists, boundary included
    n_eos_terms: int = 1


def _mask_logits(logits, banned):
    mask = np.zeros(logits.shape)
    mask[list(banned)] = NEG_INF
    return logits + Tensor(mask)


def _pick(probs, mode, rng):
    if mode == "greedy":
        return int(np.argmax(probs.values))
    p = probs.values / probs.values.sum()
    return int(rng.choice(p.size, p=p))


class HybridDecoder(nn.Module):

    def __init__(self, config, vocab, rng, word_embedding, char_embedding):
        self.config = config
        self.vocab = vocab
        dw, dc, h = config.word_emb, config.char_emb, config.hidden
        # embeddings are shared with the encoder; kept out of parameters()
        self._shared = {"word": word_embedding, "char": char_embedding}
        self.bridge = nn.Dense("dec.bridge", h, h, rng, activation="tanh")
        self.pert = nn.Dense("dec.pert", 3 * h, h, rng, activation="tanh")
        if config.mode == "char_dec":
            self.cd_gru = nn.GruCell("dec.cd_gru", dc + h, h, rng)
            self.cd_attn = nn.AttentionLayer("dec.cd_attn", h, h, h, rng)
            self.cd_out = nn.Dense("dec.cd_out", 3 * h, h, rng, activation="tanh")
            self.cd_proj = nn.Dense("dec.cd_proj", h, vocab.char_size, rng)
            return
        self.word_gru = nn.GruCell("dec.word_gru", dw + h, h, rng)
        self.word_attn = nn.AttentionLayer("dec.word_attn", h, h, h, rng)
        fuse_in = 3 * h if config.mode == "full" else 2 * h
        self.word_out = nn.Dense("dec.word_out", fuse_in, h, rng, activation="tanh")
        self.word_proj = nn.Dense("dec.word_proj", h, vocab.word_size, rng)
        self.char_attn = nn.AttentionLayer("dec.char_attn", h, dc, h, rng)
        self.char_init = nn.Dense("dec.char_init", fuse_in + dc, h, rng,
                                  activation="tanh")
        self.char_gru = nn.GruCell("dec.char_gru", dc, h, rng)
        self.char_proj = nn.Dense("dec.char_proj", h, vocab.char_size, rng)

    # -- shared embedding access --------------------------------------------

    def _word_vec(self, word_id):
        return embedding_lookup(self._shared["word"].tensor, [word_id])[0]

    def _char_vec(self, char_id):
        return embedding_lookup(self._shared["char"].tensor, [char_id])[0]

    def initial_state(self, enc):
        return self.bridge(enc.hidden[-1])

    # -- word level ----------------------------------------------------------

    def word_step(self, prev_state, prev_word_id, enc, first=False,
                  generation=True):
        """One word-GRU step; context attends over H keyed on the previous state.

        The GRU consumes [prev word embedding; context] so alignment
        information accumulates in the recurrent state across steps.
        """
        context, attn_w = nn.attend(self.word_attn, prev_state, enc.hidden)
        state = self.word_gru.step(
            concat([self._word_vec(prev_word_id), context]), prev_state)
        if self.config.mode == "full":
            pert = self.pert(concat([state, context, enc.summary]))
            attentional = self.word_out(concat([context, state, pert]))
        else:
            pert = Tensor(np.zeros(self.config.hidden))
            attentional = self.word_out(concat([context, state]))
        logits = self.word_proj(attentional)
        banned = [PAD, SOS]
        if generation and first:
            banned.append(EOS)
        probs = softmax(_mask_logits(logits, banned))
        return WordStep(state=state, context=context, attentional=attentional,
                        pert=pert, probs=probs, attn_weights=attn_w)

    def char_init_state(self, step, enc):
        """Initial char-GRU hidden state; only this first state sees c_j^(c)."""
        char_ctx, _ = nn.attend(self.char_attn, step.state, enc.char_embs)
        if self.config.mode == "full":
            fused = concat([step.context, step.state, step.pert, char_ctx])
        else:
            fused = concat([step.context, step.state, char_ctx])
        return self.char_init(fused)

    def _char_probs(self, state, generation=True, first=False):
        logits = self.char_proj(state)
        banned = [CHAR_PAD, CHAR_SOS, CHAR_EOS]
        if generation:
            banned.append(CHAR_OOV)
            if first:
                banned.append(CHAR_BOUNDARY)
        probs = softmax(_mask_logits(logits, banned))
        return probs

    def spell_word(self, init_state, mode, rng, record):
        """Generate characters until the boundary symbol or the length cap."""
        state = init_state
        prev = CHAR_SOS
        chars = []
        for pos in range(self.config.max_word_len):
            state = self.char_gru.step(self._char_vec(prev), state)
            probs = self._char_probs(state, first=(pos == 0))
            choice = _pick(probs, mode, rng)
            record.append(probs[choice].log())
            if choice == CHAR_BOUNDARY:
                break
            chars.append(self.vocab.id_to_char[choice])
            prev = choice
        return "".join(chars)

    def spell_losses(self, init_state, char_ids):
        """Teacher-forced char cross-entropies over chars + trailing boundary."""
        state = init_state
        prev = CHAR_SOS
        losses = []
        for target in list(char_ids) + [CHAR_BOUNDARY]:
            state = self.char_gru.step(self._char_vec(prev), state)
            probs = self._char_probs(state, generation=False)
            losses.append(nn.cross_entropy(probs, target))
            prev = target
        return losses

    # -- sequence level ------------------------------------------------------

    def decode(self, enc, mode="greedy", rng=None, max_len=None):
        if mode not in ("greedy", "sample"):
            raise ValueError(f"unknown decode mode {mode!r}")
        if mode == "sample" and rng is None:
            raise ValueError("sampled decoding needs an explicit rng")
        if self.config.mode == "char_dec":
            return self._decode_chars(enc, mode, rng, max_len)
        if max_len is None:
            max_len = max(1, int(self.config.max_len_factor * enc.tok.n_words))
        state = self.initial_state(enc)
        word_ids, words, attn, log_probs, spelled = [], [], [], [], []
        prev = SOS
        for j in range(max_len):
            step = self.word_step(state, prev, enc, first=(j == 0))
            choice = _pick(step.probs, mode, rng)
            log_probs.append(step.probs[choice].log())
            if choice == EOS:
                break
            word_ids.append(choice)
            if choice == OOV or self.config.always_spell:
                word = self.spell_word(self.char_init_state(step, enc),
                                       mode, rng, log_probs)
                spelled.append(True)
            else:
                word = self.vocab.id_to_word[choice]
                spelled.append(False)
            words.append(word)
            attn.append(step.attn_weights.values.copy())
            state = step.state
            prev = choice
        total = None
        if log_probs:
            total = log_probs[0]
            for term in log_probs[1:]:
                total = total + term
        return DecodedOutput(word_ids=word_ids, words=words,
                             text=" ".join(w for w in words if w),
                             attn_weights=attn, log_probs=log_probs,
                             total_log_prob=total, spelled=spelled)

    def _cd_step(self, state, prev_char, enc):
        context, attn_w = nn.attend(self.cd_attn, state, enc.hidden)
        new_state = self.cd_gru.step(
            concat([self._char_vec(prev_char), context]), state)
        pert = self.pert(concat([new_state, context, enc.summary]))
        attentional = self.cd_out(concat([context, new_state, pert]))
        return new_state, self.cd_proj(attentional), attn_w

    def _decode_chars(self, enc, mode, rng, max_len):
        if max_len is None:
            max_len = max(2, int(self.config.max_len_factor * len(enc.tok.char_ids)))
        state = self.initial_state(enc)
        prev = CHAR_SOS
        chars, attn, log_probs = [], [], []
        for pos in range(max_len):
            state, logits, attn_w = self._cd_step(state, prev, enc)
            banned = [CHAR_PAD, CHAR_SOS, CHAR_OOV]
            if pos == 0:
                banned.append(CHAR_BOUNDARY)
                banned.append(CHAR_EOS)
            probs = softmax(_mask_logits(logits, banned))
            choice = _pick(probs, mode, rng)
            log_probs.append(probs[choice].log())
            if choice == CHAR_EOS:
                break
            chars.append(self.vocab.id_to_char[choice])
            attn.append(attn_w.values.copy())
            prev = choice
        words = [w for w in "".join(chars).split("_") if w]
        total = None
        if log_probs:
            total = log_probs[0]
            for term in log_probs[1:]:
                total = total + term
        return DecodedOutput(word_ids=[self.vocab.word_id(w) for w in words],
                             words=words, text=" ".join(words),
                             attn_weights=attn, log_probs=log_probs,
                             total_log_prob=total,
                             spelled=[True] * len(words))

    def teacher_force_losses(self, enc, target_raw):
        """(J_w, J_c) on a target string; char losses cover every target word."""
        tok = tokenize(target_raw, self.vocab)
        if self.config.mode == "char_dec":
            return self._teacher_force_chars(enc, tok)
        state = self.initial_state(enc)
        prev = SOS
        word_terms, char_terms = [], []
        char_targets = []
        for j, target_id in enumerate(tok.words):
            step = self.word_step(state, prev, enc, generation=False)
            word_terms.append(nn.cross_entropy(step.probs, target_id))
            ids = [self.vocab.char_id(c) for c in tok.word_strings[j]]
            char_targets.append(ids + [CHAR_BOUNDARY])
            char_terms.extend(self.spell_losses(self.char_init_state(step, enc), ids))
            state = step.state
            prev = target_id
        step = self.word_step(state, prev, enc, generation=False)
        eos_term = nn.cross_entropy(step.probs, EOS)
        j_word = word_terms[0]
        for term in word_terms[1:]:
            j_word = j_word + term
        j_word = j_word + eos_term
        j_char = char_terms[0]
        for term in char_terms[1:]:
            j_char = j_char + term
        return TeacherForcingLosses(j_word=j_word, j_char=j_char,
                                    j_mle=j_word + j_char,
                                    word_targets=list(tok.words),
                                    char_targets=char_targets)

    def _teacher_force_chars(self, enc, tok):
        state = self.initial_state(enc)
        prev = CHAR_SOS
        terms = []
        targets = list(tok.char_ids) + [CHAR_EOS]
        for target in targets:
            state, logits, _ = self._cd_step(state, prev, enc)
            probs = softmax(_mask_logits(logits, [CHAR_PAD, CHAR_SOS]))
            terms.append(nn.cross_entropy(probs, target))
            prev = target
        j_char = terms[0]
        for term in terms[1:]:
            j_char = j_char + term
        zero = Tensor(np.zeros(()))
        return TeacherForcingLosses(j_word=zero, j_char=j_char, j_mle=j_char,
                                    word_targets=[], char_targets=[targets],
                                    n_eos_terms=0)
