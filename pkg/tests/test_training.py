"""Teacher-forcing pretraining and the self-critical fine-tuning contract."""
import json

import numpy as np
import pytest

from aeg import nn
from aeg.config import AegConfig, PretrainConfig, RlConfig
from aeg.data import LabeledExample, ParaphrasePair, build_vocab
from aeg.errors import EmptyInputError
from aeg.model import AegModel
from aeg.rewards import RewardWeights
from aeg.training import TrainLog, finetune, pretrain, scst_step


def small_model(seed=0, corpus=None):
    corpus = corpus or ["the movie was good", "a film is bad",
                        "story was nice", "plot seemed poor"]
    vocab = build_vocab(corpus)
    cfg = AegConfig(word_emb=16, char_emb=8, hidden=16, seed=seed)
    return AegModel(cfg, vocab)


class ConstantOracle:
    """Returns a fixed distribution; counts queries like the real handle."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)
        self.query_count = 0
        self.budget = None

    def query(self, text):
        self.query_count += 1
        return self.probs.copy()


class KeywordOracle:
    """Class 1 iff any keyword is present; soft probabilities."""

    def __init__(self, keywords):
        self.keywords = set(keywords)
        self.query_count = 0
        self.budget = None

    def query(self, text):
        self.query_count += 1
        hit = any(w in self.keywords for w in text.lower().split())
        return np.array([0.1, 0.9]) if hit else np.array([0.9, 0.1])


def test_pretrain_reduces_loss():
    model = small_model()
    pairs = [ParaphrasePair("the movie was good", "a film is good"),
             ParaphrasePair("story was nice", "plot was nice")] * 4
    model, log = pretrain(model, pairs, PretrainConfig(epochs=4, seed=0))
    losses = [r["mean_loss"] for r in log.records]
    assert losses[-1] < losses[0]
    assert log.records[-1]["epoch"] == 3


def test_pretrain_rejects_empty_set():
    with pytest.raises(EmptyInputError):
        pretrain(small_model(), [], PretrainConfig())


def test_scst_zero_advantage_leaves_parameters_bit_identical():
    model = small_model(seed=1)
    oracle = ConstantOracle([0.5, 0.5])   # every candidate scores identically
    opt = nn.Optimizer("sgd", 0.01)
    before = {p.name: p.values.copy() for p in model.parameters()}
    ex = LabeledExample("the movie was good", 1)
    loss, bd_s, bd_g = scst_step(model, ex, oracle, None, None,
                                 RewardWeights(), opt, np.random.default_rng(3))
    assert bd_s.combined == bd_g.combined
    assert loss == 0.0
    for p in model.parameters():
        assert np.array_equal(before[p.name], p.values), p.name
    assert oracle.query_count == 2


def test_scst_positive_advantage_increases_sampled_log_prob():
    model = small_model(seed=2)
    ex = LabeledExample("the movie was good", 1)
    # replay the same sampled sequence before and after the update
    rng_seed = 17

    def sampled_log_prob():
        out, _ = model.generate(ex.text, mode="sample",
                                rng=np.random.default_rng(rng_seed))
        return out.text, out.total_log_prob.item()

    text_before, lp_before = sampled_log_prob()

    class BiasedOracle(ConstantOracle):
        """Rewards exactly the sequence the frozen rng will sample."""

        def query(self, text):
            self.query_count += 1
            return (np.array([0.9, 0.1]) if text == text_before
                    else np.array([0.1, 0.9]))

    oracle = BiasedOracle([0.5, 0.5])
    opt = nn.Optimizer("sgd", 0.01)
    loss, bd_s, bd_g = scst_step(model, ex, oracle, None, None, RewardWeights(),
                                 opt, np.random.default_rng(rng_seed))
    assert bd_s.combined > bd_g.combined
    assert loss > 0.0   # -advantage * log p: advantage > 0, log p < 0
    text_after, lp_after = sampled_log_prob()
    assert text_after == text_before   # same rng -> replayable while p grows
    assert lp_after > lp_before


def test_scst_episode_costs_two_queries_and_logs_rewards():
    model = small_model(seed=3)
    pool = [LabeledExample("the movie was good", 1),
            LabeledExample("a film is bad", 0)] * 3
    oracle = KeywordOracle({"good", "nice"})
    cfg = RlConfig(episodes=5, eval_every=0, seed=0)
    model, log = finetune(model, pool, oracle, None, None, cfg)
    episode_recs = [r for r in log.records if "loss" in r]
    assert len(episode_recs) == 5
    for rec in episode_recs:
        assert rec["episode_queries"] == 2
        for key in ("step", "loss", "r_sampled", "r_greedy",
                    "R_A", "R_S", "R_L", "queries_total"):
            assert key in rec
    assert oracle.query_count == 10
    assert episode_recs[-1]["queries_total"] == 10


def test_finetune_improves_attack_on_keyword_oracle():
    corpus = ["the movie was good", "the story was nice",
              "a good story was here", "the nice movie played"]
    model = small_model(seed=4, corpus=corpus)
    pairs = [ParaphrasePair(t, t) for t in corpus] * 3
    model, _ = pretrain(model, pairs, PretrainConfig(epochs=3, seed=0))
    oracle = KeywordOracle({"good", "nice"})
    pool = [LabeledExample(t, 1) for t in corpus]

    def success_rate():
        wins = 0
        for ex in pool:
            out, _ = model.generate(ex.text)
            if not any(w in oracle.keywords for w in out.text.split()):
                wins += 1
        return wins / len(pool)

    before = success_rate()
    cfg = RlConfig(episodes=150, eval_every=0, seed=0)
    model, log = finetune(model, pool, oracle, None, None, cfg,
                          update_substitute=False)
    after = success_rate()
    assert after >= before


def test_trainlog_jsonl_round_trip(tmp_path):
    log = TrainLog()
    log.add(step=0, loss=1.5, episode_queries=2)
    log.add(step=1, loss=0.5, episode_queries=2)
    path = tmp_path / "log.jsonl"
    log.to_jsonl(str(path))
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec == {"step": 0, "loss": 1.5, "episode_queries": 2}
    assert log.total_episode_queries() == 4


def test_finetune_rejects_empty_pool():
    with pytest.raises(EmptyInputError):
        finetune(small_model(), [], ConstantOracle([0.5, 0.5]), None, None,
                 RlConfig(episodes=1))
