"""Character-enhanced word encoder with a substitute classification head.

Each word is fused with attention contexts over its inside and outside
characters, a bidirectional GRU runs over the fused word vectors, and a
learned-query self-attention pools the hidden states into a summary
vector. A dense head on the summary mimics the target classifier; it is
trained without backpropagating below the hidden states.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .autodiff import Tensor, concat, embedding_lookup, softmax


@dataclass
class EncoderOutput:
    hidden: list             # per-word states (fwd + bwd sum)
    summary: object          # summary vector S
    summary_weights: object  # attention weights over word positions
    substitute_probs: object
    char_embs: object        # (n', d_c) input character embeddings
    tok: object              # the TokenizedText that was encoded


class CharWordEncoder(nn.Module):

    def __init__(self, config, vocab, rng):
        self.config = config
        self.vocab = vocab
        dw, dc, h = config.word_emb, config.char_emb, config.hidden
        self.word_embedding = nn.Parameter("enc.word_embedding",
                                           (vocab.word_size, dw), rng)
        self.char_embedding = nn.Parameter("enc.char_embedding",
                                           (vocab.char_size, dc), rng)
        self.inside_attn = nn.AttentionLayer("enc.inside_attn", dw, dc, h, rng)
        self.outside_attn = nn.AttentionLayer("enc.outside_attn", dw, dc, h, rng)
        self.fuse = nn.Dense("enc.fuse", dw + 2 * dc, h, rng, activation="tanh")
        self.gru_fwd = nn.GruCell("enc.gru_fwd", h, h, rng)
        self.gru_bwd = nn.GruCell("enc.gru_bwd", h, h, rng)
        self.summary_query = nn.Parameter("enc.summary_query", (h,), rng)
        self.summary_attn = nn.AttentionLayer("enc.summary_attn", h, h, h, rng)
        self.sub_head = nn.Dense("enc.sub_head", h, config.num_classes, rng)

    def substitute_parameters(self):
        """Parameters above the stop-gradient line (summary + head)."""
        return ([self.summary_query] + self.summary_attn.parameters()
                + self.sub_head.parameters())

    def load_word_embeddings(self, table):
        """Overwrite embedding rows for words present in a pretrained table."""
        values = self.word_embedding.values.copy()
        dim = values.shape[1]
        for word, idx in self.vocab.word_to_id.items():
            vec = table.get(word)
            if vec is not None and vec.shape[0] == dim:
                values[idx] = vec
        self.word_embedding.set_values(values)

    def _word_vectors(self, tok):
        char_embs = embedding_lookup(self.char_embedding.tensor, tok.char_ids)
        word_embs = embedding_lookup(self.word_embedding.tensor, tok.words)
        n_chars = len(tok.char_ids)
        fused = []
        for t, (p, q) in enumerate(tok.spans):
            e_w = word_embs[t]
            inside, _ = nn.attend(self.inside_attn, e_w, char_embs[p:q + 1])
            if p == 0 and q == n_chars - 1:
                outside = Tensor(np.zeros(self.config.char_emb))
            else:
                if p == 0:
                    outer = char_embs[q + 1:]
                elif q == n_chars - 1:
                    outer = char_embs[:p]
                else:
                    outer = concat([char_embs[:p], char_embs[q + 1:]], axis=0)
                outside, _ = nn.attend(self.outside_attn, e_w, outer)
            fused.append(self.fuse(concat([e_w, inside, outside])))
        return fused, char_embs

    def summarize(self, hidden):
        summary, weights = nn.attend(self.summary_attn,
                                     self.summary_query.tensor, hidden)
        probs = softmax(self.sub_head(summary))
        return summary, weights, probs

    def encode(self, tok):
        fused, char_embs = self._word_vectors(tok)
        hidden = nn.bigru_encode(self.gru_fwd, self.gru_bwd, fused)
        summary, weights, probs = self.summarize(hidden)
        return EncoderOutput(hidden=hidden, summary=summary,
                             summary_weights=weights, substitute_probs=probs,
                             char_embs=char_embs, tok=tok)
