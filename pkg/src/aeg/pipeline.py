"""End-to-end toy pipeline: victim training, generator pretraining, reward
models, SCST fine-tuning, and the attacker bake-off."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import toy
from .attack import (attack_example_aeg, evaluate_attack, random_baseline,
                     wordbug_baseline)
from .config import AegConfig, PretrainConfig, RlConfig
from .data import SplitConfig, build_vocab, make_pretrain_set, split_dataset
from .model import AegModel
from .rewards import (LexicalModel, MatcherModel, RewardWeights, train_lexical,
                      train_matcher)
from .targets import ClassifierConfig, OracleHandle, train_classifier
from .training import finetune, pretrain


@dataclass
class PipelineConfig:
    seed: int = 0
    n_examples: int = 2000
    n_keywords: int = 2
    target_epochs: int = 4
    pretrain_epochs: int = 6
    rl_episodes: int = 2000
    ablation_rl_episodes: int = 400
    budget: int = 25
    weights: RewardWeights = field(default_factory=RewardWeights)
    hidden: int = 32
    max_word_vocab: int = 300
    attack_test_size: int = 0   # 0 = full test split


@dataclass
class PipelineArtifacts:
    classifier: object
    target_train: list
    aeg_pool: list
    test_set: list
    vocab: object
    pretrained_params: dict
    model: object
    matcher: object
    lexical: object
    pretrain_log: object
    finetune_log: object


def build_data(cfg):
    rng = np.random.default_rng(cfg.seed)
    dataset = toy.make_dataset(rng, cfg.n_examples, cfg.n_keywords)
    return split_dataset(dataset, SplitConfig(seed=cfg.seed))


def train_victim(cfg, target_train):
    classifier_cfg = ClassifierConfig(kind="cnn_word", num_classes=2,
                                      epochs=cfg.target_epochs, seed=cfg.seed)
    return train_classifier(classifier_cfg, target_train)


def build_generator(cfg, aeg_pool, mode="full"):
    # vocabulary from the clean pool only, so misspelled decodes are OOV
    # and must go through the character path
    vocab = build_vocab([ex.text for ex in aeg_pool], cfg.max_word_vocab)
    aeg_cfg = AegConfig(hidden=cfg.hidden, word_emb=cfg.hidden,
                        char_emb=cfg.hidden // 2, num_classes=2, mode=mode,
                        seed=cfg.seed)
    return AegModel(aeg_cfg, vocab), vocab


def build_pretrain_pairs(cfg, aeg_pool, rng):
    # modest noise rates keep sampled decodes close to the input, so
    # attack candidates concentrate their edits on a few positions
    pairs = toy.make_paraphrase_pairs(aeg_pool, rng, synonym_prob=0.2)
    return make_pretrain_set(pairs, rng, misspell_fraction=0.4,
                             augment_target_prob=0.3)


def train_reward_models(cfg, paraphrase_pairs, vocab, rng):
    matcher = MatcherModel(np.random.default_rng(cfg.seed + 1))
    train_matcher(matcher, paraphrase_pairs, rng)
    lexical = LexicalModel(np.random.default_rng(cfg.seed + 2))
    word_pool = [w for w in vocab.word_to_id if not w.startswith("<")]
    # 3 epochs is plenty for reward shaping on the toy vocabulary; the
    # held-out-agreement gate trains its own model with the full schedule
    train_lexical(lexical, rng, n_pairs=2000, epochs=3, word_pool=word_pool)
    return matcher, lexical


def run_training(cfg, mode="full", episodes=None, data=None, classifier=None,
                 matcher=None, lexical=None):
    """Train one generator variant end to end; returns PipelineArtifacts."""
    target_train, aeg_pool, test_set = data if data else build_data(cfg)
    if classifier is None:
        classifier = train_victim(cfg, target_train)
    rng = np.random.default_rng(cfg.seed + 10)
    model, vocab = build_generator(cfg, aeg_pool, mode=mode)
    pairs = build_pretrain_pairs(cfg, aeg_pool, rng)
    if matcher is None or lexical is None:
        matcher, lexical = train_reward_models(cfg, pairs, vocab, rng)
    model, pre_log = pretrain(model, pairs,
                              PretrainConfig(epochs=cfg.pretrain_epochs,
                                             seed=cfg.seed))
    pretrained_params = {p.name: p.values.copy() for p in model.parameters()}
    rl_cfg = RlConfig(episodes=episodes or cfg.rl_episodes,
                      gamma_adversarial=cfg.weights.adversarial,
                      gamma_semantic=cfg.weights.semantic,
                      gamma_lexical=cfg.weights.lexical,
                      seed=cfg.seed)
    oracle = OracleHandle(classifier)
    eval_oracle = OracleHandle(classifier)
    model, rl_log = finetune(model, aeg_pool, oracle, matcher, lexical, rl_cfg,
                             eval_oracle=eval_oracle)
    return PipelineArtifacts(classifier=classifier, target_train=target_train,
                             aeg_pool=aeg_pool, test_set=test_set, vocab=vocab,
                             pretrained_params=pretrained_params, model=model,
                             matcher=matcher, lexical=lexical,
                             pretrain_log=pre_log, finetune_log=rl_log)


def snapshot_params(model):
    return {p.name: p.values.copy() for p in model.parameters()}


def restore_params(model, snapshot):
    for p in model.parameters():
        p.set_values(snapshot[p.name])


def make_attacker(name, cfg, artifacts, model=None):
    """Attacker callable with the evaluate_attack(handle, ex, pred) contract."""
    weights = cfg.weights
    if name == "random":
        rng = np.random.default_rng(cfg.seed + 100)

        def attacker(handle, ex, pred_before):
            return random_baseline(handle, ex.text, ex.label, rng,
                                   synonym_table=toy.SYNONYMS,
                                   pred_before=pred_before)
        return attacker
    if name == "wordbug":
        rng = np.random.default_rng(cfg.seed + 101)

        def attacker(handle, ex, pred_before):
            return wordbug_baseline(handle, ex.text, ex.label, rng,
                                    pred_before=pred_before)
        return attacker
    model = model if model is not None else artifacts.model
    rng = np.random.default_rng(cfg.seed + 102)

    def attacker(handle, ex, pred_before):
        return attack_example_aeg(model, handle, artifacts.matcher,
                                  artifacts.lexical, ex.text, ex.label,
                                  weights=weights, rng=rng,
                                  pred_before=pred_before)
    return attacker


def attack_test_set(cfg, artifacts):
    test = artifacts.test_set
    if cfg.attack_test_size:
        test = test[:cfg.attack_test_size]
    return test


def evaluate_attacker(name, cfg, artifacts, model=None):
    attacker = make_attacker(name, cfg, artifacts, model=model)
    return evaluate_attack(name, attacker, artifacts.classifier,
                           attack_test_set(cfg, artifacts), cfg.budget,
                           matcher=artifacts.matcher, lexical=artifacts.lexical)


def run_bakeoff(cfg, artifacts, attackers=("random", "aeg_no_rl", "aeg")):
    """Evaluate a set of attackers on the shared test slice."""
    reports = {}
    for name in attackers:
        if name == "aeg_no_rl":
            saved = snapshot_params(artifacts.model)
            restore_params(artifacts.model, artifacts.pretrained_params)
            reports[name] = evaluate_attacker(name, cfg, artifacts)
            restore_params(artifacts.model, saved)
        else:
            reports[name] = evaluate_attacker(name, cfg, artifacts)
    return reports
