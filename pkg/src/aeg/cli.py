"""Command-line surface: train-target, pretrain-aeg, train-rewards,
finetune, attack, report, grad-check.

Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import gradcheck, toy
from .config import (AegConfig, AttackConfig, PretrainConfig, RlConfig,
                     apply_overrides, load_config_file)
from .data import (SplitConfig, build_vocab, load_classification_corpus,
                   load_paraphrase_corpus, load_tsv_table, split_dataset)
from .errors import AegError, ConfigError
from .model import AegModel
from .rewards import LexicalModel, MatcherModel, RewardWeights, train_lexical, train_matcher
from .targets import (ClassifierConfig, OracleHandle, evaluate_accuracy,
                      load_classifier, save_classifier, train_classifier)
from .training import finetune, pretrain
from . import nn
from .attack import evaluate_attack
from .report import emit_report, render_html, report_from_dict
from .pipeline import make_attacker, PipelineConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _load_overrides(args):
    values = {}
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        values = load_config_file(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    return values


def _write_examples(path, examples):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({"text": ex.text, "label": ex.label}) + "\n")


def _read_examples(path):
    examples, _ = load_classification_corpus(path)
    return examples


def cmd_train_target(args):
    values = _load_overrides(args)
    seed = int(values.get("seed", 0))
    if args.data:
        examples, _ = load_classification_corpus(args.data)
    else:
        rng = np.random.default_rng(seed)
        examples = toy.make_dataset(rng, int(values.get("n_examples", 2000)))
    train, pool, test = split_dataset(examples, SplitConfig(seed=seed))
    cfg = apply_overrides(ClassifierConfig(seed=seed), values)
    model = train_classifier(cfg, train)
    os.makedirs(args.out_dir, exist_ok=True)
    save_classifier(os.path.join(args.out_dir, "target.ckpt"), model)
    _write_examples(os.path.join(args.out_dir, "target_train.jsonl"), train)
    _write_examples(os.path.join(args.out_dir, "aeg_pool.jsonl"), pool)
    _write_examples(os.path.join(args.out_dir, "test.jsonl"), test)
    acc = evaluate_accuracy(OracleHandle(model), test)
    print(f"target {cfg.kind} trained; test accuracy {acc:.4f}")
    return 0


def cmd_pretrain_aeg(args):
    values = _load_overrides(args)
    seed = int(values.get("seed", 0))
    rng = np.random.default_rng(seed)
    if args.pairs:
        pairs, _ = load_paraphrase_corpus(args.pairs)
        corpus = [p.source for p in pairs]
    else:
        if not args.pool:
            raise ConfigError("pretrain-aeg needs --pairs or --pool")
        pool = _read_examples(args.pool)
        pairs = toy.make_paraphrase_pairs(pool, rng)
        corpus = [ex.text for ex in pool]
    from .data import make_pretrain_set
    pairs = make_pretrain_set(pairs, rng)
    vocab = build_vocab(corpus, int(values.get("max_word_vocab", 300)))
    aeg_cfg = apply_overrides(AegConfig(seed=seed), values)
    model = AegModel(aeg_cfg, vocab)
    pre_cfg = apply_overrides(PretrainConfig(seed=seed), values)
    model, log = pretrain(model, pairs, pre_cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    model.save(os.path.join(args.out_dir, "aeg_pretrained.ckpt"))
    log.to_jsonl(os.path.join(args.out_dir, "pretrain_log.jsonl"))
    print(f"pretrained on {len(pairs)} pairs; "
          f"final epoch loss {log.records[-1]['mean_loss']:.4f}")
    return 0


def cmd_train_rewards(args):
    values = _load_overrides(args)
    seed = int(values.get("seed", 0))
    rng = np.random.default_rng(seed)
    if args.pairs:
        pairs, _ = load_paraphrase_corpus(args.pairs)
        word_pool = sorted({w for p in pairs for w in p.source.lower().split()})
    else:
        if not args.pool:
            raise ConfigError("train-rewards needs --pairs or --pool")
        pool = _read_examples(args.pool)
        pairs = toy.make_paraphrase_pairs(pool, rng)
        word_pool = sorted({w for ex in pool for w in ex.text.lower().split()})
    nicknames = load_tsv_table(args.nicknames) if args.nicknames else None
    matcher = MatcherModel(np.random.default_rng(seed + 1))
    train_matcher(matcher, pairs, rng)
    lexical = LexicalModel(np.random.default_rng(seed + 2))
    train_lexical(lexical, rng, n_pairs=int(values.get("n_pairs", 2000)),
                  word_pool=word_pool, nickname_table=nicknames)
    os.makedirs(args.out_dir, exist_ok=True)
    nn.save_module(os.path.join(args.out_dir, "matcher.ckpt"), matcher)
    nn.save_module(os.path.join(args.out_dir, "lexical.ckpt"), lexical)
    print("reward models trained")
    return 0


def _load_rewards(out_dir):
    matcher = MatcherModel(np.random.default_rng(0))
    nn.load_module(os.path.join(out_dir, "matcher.ckpt"), matcher)
    lexical = LexicalModel(np.random.default_rng(0))
    nn.load_module(os.path.join(out_dir, "lexical.ckpt"), lexical)
    return matcher, lexical


def cmd_finetune(args):
    values = _load_overrides(args)
    seed = int(values.get("seed", 0))
    model = AegModel.load(os.path.join(args.out_dir, "aeg_pretrained.ckpt"))
    classifier = load_classifier(os.path.join(args.out_dir, "target.ckpt"))
    matcher, lexical = _load_rewards(args.out_dir)
    pool = _read_examples(os.path.join(args.out_dir, "aeg_pool.jsonl"))
    rl_cfg = apply_overrides(RlConfig(seed=seed), values)
    oracle = OracleHandle(classifier)
    model, log = finetune(model, pool, oracle, matcher, lexical, rl_cfg,
                          eval_oracle=OracleHandle(classifier))
    model.save(os.path.join(args.out_dir, "aeg_finetuned.ckpt"))
    log.to_jsonl(os.path.join(args.out_dir, "finetune_log.jsonl"))
    print(f"fine-tuned for {rl_cfg.episodes} episodes; "
          f"oracle queries used: {oracle.query_count}")
    return 0


def cmd_attack(args):
    values = _load_overrides(args)
    seed = int(values.get("seed", 0))
    atk_cfg = apply_overrides(AttackConfig(seed=seed), values)
    if args.attacker:
        atk_cfg = apply_overrides(atk_cfg, {"attacker": args.attacker})
    if args.budget:
        atk_cfg = apply_overrides(atk_cfg, {"budget": args.budget})
    classifier = load_classifier(os.path.join(args.out_dir, "target.ckpt"))
    test = _read_examples(os.path.join(args.out_dir, "test.jsonl"))
    matcher = lexical = None
    if os.path.exists(os.path.join(args.out_dir, "matcher.ckpt")):
        matcher, lexical = _load_rewards(args.out_dir)
    model = None
    if atk_cfg.attacker.startswith("aeg"):
        ckpt = ("aeg_pretrained.ckpt" if atk_cfg.attacker == "aeg_no_rl"
                else "aeg_finetuned.ckpt")
        path = os.path.join(args.out_dir, ckpt)
        if not os.path.exists(path):
            path = os.path.join(args.out_dir, "aeg_pretrained.ckpt")
        model = AegModel.load(path)

    pcfg = PipelineConfig(seed=atk_cfg.seed, budget=atk_cfg.budget,
                          weights=RewardWeights(atk_cfg.gamma_adversarial,
                                                atk_cfg.gamma_semantic,
                                                atk_cfg.gamma_lexical))

    class _Arts:
        pass
    arts = _Arts()
    arts.model = model
    arts.matcher = matcher
    arts.lexical = lexical
    attacker = make_attacker(
        "random" if atk_cfg.attacker == "random"
        else "wordbug" if atk_cfg.attacker == "wordbug" else "aeg",
        pcfg, arts, model=model)
    report = evaluate_attack(atk_cfg.attacker, attacker, classifier, test,
                             atk_cfg.budget, matcher=matcher, lexical=lexical)
    json_path, html_path = emit_report(report, args.out_dir)
    print(f"{atk_cfg.attacker}: acc {report.acc_before:.4f} -> "
          f"{report.acc_after:.4f}, dip {report.dip_percent:.2f}% "
          f"({json_path}, {html_path})")
    return 0


def cmd_report(args):
    path = args.json or os.path.join(args.out_dir, "report.json")
    if not os.path.exists(path):
        raise ConfigError(f"report file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        report = report_from_dict(json.load(fh))
    html_path = os.path.join(args.out_dir, "report.html")
    with open(html_path, "w", encoding="utf-8") as fh:
        fh.write(render_html(report))
    print(f"wrote {html_path}")
    return 0


def cmd_grad_check(args):
    values = _load_overrides(args)
    seed = int(values.get("seed", 0))
    ok, results = gradcheck.run_suite(seed=seed)
    for name, rep in results:
        status = "PASS" if rep["passed"] else "FAIL"
        print(f"{status} {name}: max rel error {rep['max_rel_error']:.2e} "
              f"(tol {rep['tolerance']:.0e})")
    return 0 if ok else 2


def build_parser():
    parser = _Parser(prog="aeg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default="out")
        return p

    p = common(sub.add_parser("train-target"))
    p.add_argument("--data", help="JSONL classification corpus (default: toy task)")
    p.set_defaults(fn=cmd_train_target)

    p = common(sub.add_parser("pretrain-aeg"))
    p.add_argument("--pairs", help="TSV paraphrase corpus")
    p.add_argument("--pool", help="JSONL pool to derive toy paraphrases from")
    p.set_defaults(fn=cmd_pretrain_aeg)

    p = common(sub.add_parser("train-rewards"))
    p.add_argument("--pairs", help="TSV paraphrase corpus")
    p.add_argument("--pool", help="JSONL pool to derive toy paraphrases from")
    p.add_argument("--nicknames", help="two-column TSV nickname table")
    p.set_defaults(fn=cmd_train_rewards)

    p = common(sub.add_parser("finetune"))
    p.set_defaults(fn=cmd_finetune)

    p = common(sub.add_parser("attack"))
    p.add_argument("--attacker", choices=AttackConfig.ATTACKERS)
    p.add_argument("--budget", type=int)
    p.set_defaults(fn=cmd_attack)

    p = common(sub.add_parser("report"))
    p.add_argument("--json", help="existing report.json to render")
    p.set_defaults(fn=cmd_report)

    p = common(sub.add_parser("grad-check"))
    p.set_defaults(fn=cmd_grad_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AegError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
