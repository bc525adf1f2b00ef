"""Two-level decoder: masking, teacher forcing, decode modes, ablations."""
import numpy as np
import pytest

from aeg import nn
from aeg.config import AegConfig
from aeg.data import CHAR_BOUNDARY, EOS, OOV, PAD, SOS, build_vocab
from aeg.model import AegModel


def make_model(mode="full", always_spell=False, seed=0, corpus=None, hidden=12):
    corpus = corpus or ["movie was good", "film is the run"]
    vocab = build_vocab(corpus)
    cfg = AegConfig(word_emb=hidden, char_emb=hidden // 2, hidden=hidden,
                    mode=mode, always_spell=always_spell, seed=seed)
    return AegModel(cfg, vocab), vocab


def test_word_step_masks_reserved_tokens():
    model, _ = make_model()
    enc = model.encode("movie was good")
    state = model.decoder.initial_state(enc)
    first = model.decoder.word_step(state, SOS, enc, first=True)
    assert first.probs.values[PAD] == pytest.approx(0.0, abs=1e-12)
    assert first.probs.values[SOS] == pytest.approx(0.0, abs=1e-12)
    assert first.probs.values[EOS] == pytest.approx(0.0, abs=1e-12)
    later = model.decoder.word_step(first.state, 5, enc, first=False)
    assert later.probs.values[EOS] > 0.0  # EOS only banned on the first step


def test_greedy_decode_never_emits_reserved_words():
    model, vocab = make_model(seed=9)
    out, _ = model.generate("movie was good")
    assert PAD not in out.word_ids
    assert SOS not in out.word_ids
    assert EOS not in out.word_ids
    assert len(out.words) <= max(1, int(1.5 * 3))


def test_greedy_decode_is_deterministic():
    model, _ = make_model(seed=4)
    a, _ = model.generate("movie was good")
    b, _ = model.generate("movie was good")
    assert a.text == b.text


def test_sampled_decode_reproducible_per_seed():
    model, _ = make_model(seed=4)
    a, _ = model.generate("movie was good", mode="sample",
                          rng=np.random.default_rng(11))
    b, _ = model.generate("movie was good", mode="sample",
                          rng=np.random.default_rng(11))
    assert a.text == b.text
    assert a.total_log_prob.item() == b.total_log_prob.item()


def test_sample_without_rng_rejected():
    model, _ = make_model()
    enc = model.encode("movie was good")
    with pytest.raises(ValueError):
        model.decode(enc, mode="sample")
    with pytest.raises(ValueError):
        model.decode(enc, mode="beam")


def test_oov_emission_triggers_char_spelling():
    model, vocab = make_model(seed=2)
    out, _ = model.generate("movie was good")
    for word_id, word, spelled in zip(out.word_ids, out.words, out.spelled):
        if word_id == OOV:
            assert spelled
            assert word not in vocab.word_to_id or word == ""
        else:
            assert not spelled
            assert vocab.id_to_word[word_id] == word


def test_always_spell_spells_every_word():
    model, _ = make_model(always_spell=True, seed=2)
    out, _ = model.generate("movie was good")
    assert all(out.spelled)


def test_spelled_words_respect_length_cap():
    model, _ = make_model(seed=7)
    cap = model.config.max_word_len
    for seed in range(5):
        out, _ = model.generate("movie was good", mode="sample",
                                rng=np.random.default_rng(seed))
        for word, spelled in zip(out.words, out.spelled):
            if spelled:
                assert len(word) <= cap


def test_teacher_forcing_decomposition_worked_example():
    model, vocab = make_model()
    enc = model.encode("movie was good")
    losses = model.teacher_force_losses(enc, "film is gud")
    # three word targets, the last one OOV
    assert len(losses.word_targets) == 3
    assert losses.word_targets[-1] == OOV
    assert losses.n_eos_terms == 1
    # 12 char targets across the three words, boundaries included
    assert sum(len(c) for c in losses.char_targets) == 12
    assert [c[-1] for c in losses.char_targets] == [CHAR_BOUNDARY] * 3
    assert losses.j_mle.item() == pytest.approx(
        losses.j_word.item() + losses.j_char.item(), rel=1e-12)
    assert losses.j_word.item() > 0 and losses.j_char.item() > 0


def test_teacher_forcing_char_losses_cover_all_words():
    model, _ = make_model()
    enc = model.encode("movie was good")
    losses = model.teacher_force_losses(enc, "film is the")  # all in-vocab
    assert sum(len(c) for c in losses.char_targets) == len("film") + len("is") + len("the") + 3


def test_no_pert_mode_runs_and_has_no_perturbation_params():
    model, _ = make_model(mode="no_pert")
    names = {p.name for p in model.parameters()}
    assert "dec.word_out.weight" in names
    assert model.decoder.word_out.in_size == 2 * model.config.hidden
    out, _ = model.generate("movie was good")
    assert out.words is not None
    enc = model.encode("movie was good")
    losses = model.teacher_force_losses(enc, "film is gud")
    assert losses.j_mle.item() > 0
    # the perturbation vector is identically zero in this mode
    state = model.decoder.initial_state(enc)
    step = model.decoder.word_step(state, SOS, enc, first=True)
    np.testing.assert_array_equal(step.pert.values, 0.0)


def test_char_dec_mode_decodes_words_from_characters():
    model, _ = make_model(mode="char_dec")
    out, _ = model.generate("movie was good")
    assert all(out.spelled)
    for w in out.words:
        assert "_" not in w and w != ""
    enc = model.encode("movie was good")
    losses = model.teacher_force_losses(enc, "film is gud")
    assert losses.word_targets == []
    assert losses.j_word.item() == 0.0
    assert losses.j_mle.item() == pytest.approx(losses.j_char.item())


def test_memorizes_worked_example_within_200_steps():
    model, _ = make_model(corpus=["movie was good", "film is the"], hidden=24)
    params = model.parameters()
    opt = nn.Optimizer("adam", 3e-2)
    for _ in range(200):
        enc = model.encode("movie was good")
        losses = model.teacher_force_losses(enc, "film is gud")
        nn.zero_gradients(params)
        losses.j_mle.backward()
        nn.clip_gradients(params)
        opt.apply([p for p in params if p.tensor.grad is not None])
    assert losses.j_mle.item() < 0.1
    out, _ = model.generate("movie was good")
    assert out.text == "film is gud"
    assert out.spelled == [False, False, True]  # "gud" arrives via the char path
