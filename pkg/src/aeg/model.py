"""The full generator: encoder + decoder + substitute head plumbing."""
from __future__ import annotations

import dataclasses
import json

import numpy as np

from . import nn
from .autodiff import Tensor, no_grad
from .config import AegConfig
from .data import Vocab, tokenize
from .decoder import HybridDecoder
from .encoder import CharWordEncoder
from .errors import DimensionError


class AegModel(nn.Module):

    def __init__(self, config, vocab, rng=None):
        if rng is None:
            rng = np.random.default_rng(config.seed)
        self.config = config
        self.vocab = vocab
        self.encoder = CharWordEncoder(config, vocab, rng)
        self.decoder = HybridDecoder(config, vocab, rng,
                                     self.encoder.word_embedding,
                                     self.encoder.char_embedding)

    def encode(self, text):
        tok = text if not isinstance(text, str) else tokenize(text, self.vocab)
        return self.encoder.encode(tok)

    def decode(self, enc, mode="greedy", rng=None, max_len=None):
        return self.decoder.decode(enc, mode=mode, rng=rng, max_len=max_len)

    def generate(self, text, mode="greedy", rng=None):
        """Inference fast path: encode + decode without graph recording."""
        with no_grad():
            enc = self.encode(text)
            return self.decode(enc, mode=mode, rng=rng), enc

    def teacher_force_losses(self, enc, target_raw):
        return self.decoder.teacher_force_losses(enc, target_raw)

    def substitute_train_step(self, text, oracle_probs, optimizer):
        """Fit the substitute head to one oracle response.

        The stop-gradient contract: hidden states are recomputed as
        constants, so only the summary attention and the head move.
        """
        oracle_probs = np.asarray(oracle_probs, dtype=np.float64)
        if oracle_probs.shape != (self.config.num_classes,):
            raise DimensionError("oracle distribution size mismatch",
                                 oracle_probs.shape, (self.config.num_classes,))
        with no_grad():
            enc = self.encode(text)
        frozen = [Tensor(h.values) for h in enc.hidden]
        _, _, probs = self.encoder.summarize(frozen)
        loss = nn.kl_divergence(oracle_probs, probs)
        params = self.encoder.substitute_parameters()
        nn.zero_gradients(params)
        loss.backward()
        nn.clip_gradients(params)
        optimizer.apply(params)
        return loss.item()

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        nn.save_module(path, self)
        meta = {
            "config": dataclasses.asdict(self.config),
            "word_to_id": self.vocab.word_to_id,
            "char_to_id": self.vocab.char_to_id,
        }
        with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh)

    @classmethod
    def load(cls, path):
        with open(f"{path}.meta.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        config = AegConfig(**meta["config"])
        vocab = Vocab(meta["word_to_id"], meta["char_to_id"])
        model = cls(config, vocab)
        nn.load_module(path, model)
        return model
