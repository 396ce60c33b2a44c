from dataclasses import replace

import numpy as np
import pytest

from tucore_gcn.config import PRESETS
from tucore_gcn.corpus import Dialogue, RelationInstance, Turn
from tucore_gcn.encoding import CLS, COLON, S1, S2, SEP, Vocab, WordTokenizer, build_input, embed, encode, split_words
from tucore_gcn.model import init_params
from tucore_gcn.numerics import GradTape, grad_check
from tucore_gcn.numerics import tensor as T


@pytest.fixture(scope="module")
def tok(dialogre_fixture):
    return WordTokenizer(Vocab.build(dialogre_fixture))


def test_split_words():
    assert split_words("Frank’s always late.") == ["frank", "’", "s", "always", "late", "."]


def test_reference_dialogue_marking(frank_s2, tok):
    inp = build_input(frank_s2, tok)
    words = tok.vocab.decode(inp.tokens)
    assert words[0] == CLS
    for (b, e), turn in zip(inp.turn_spans, frank_s2.dialogue.turns):
        head = words[b : b + 2]
        if turn.speaker_id == "S2":
            assert head == [S2, COLON]
            assert set(inp.speaker_ids[b : e + 1]) == {2}
        else:
            assert head == ["s1", COLON]
            assert set(inp.speaker_ids[b : e + 1]) == {3}
        assert words[b + 2 : e + 1] == split_words(turn.text)
    sb, se = inp.subject_span
    ob, oe = inp.object_span
    assert words[sb : se + 1] == ["frank"]
    assert words[ob : oe + 1] == [S2]
    assert words[-1] == SEP and words[se + 1] == SEP and words[inp.turn_spans[-1][1] + 1] == SEP
    assert not inp.subject_is_speaker and inp.object_is_speaker
    first_sep = inp.turn_spans[-1][1] + 1
    assert not inp.segment_ids[: first_sep + 1].any()
    assert inp.segment_ids[first_sep + 1 :].all()
    np.testing.assert_array_equal(inp.position_ids, np.arange(len(inp)))
    assert inp.speaker_ids[0] == 0 and inp.speaker_ids[inp.object_span[0]] == 2


def test_subject_speaker_gets_first_marker(dialogre_fixture, tok):
    inst = dialogre_fixture[1]  # subject S2
    inp = build_input(inst, tok)
    words = tok.vocab.decode(inp.tokens)
    assert words[inp.turn_spans[1][0]] == S1
    assert words[inp.subject_span[0]] == S1


def test_truncation_drops_whole_turns():
    turns = tuple(Turn("A" if k % 2 else "B", " ".join(["word"] * 9) + f" n{k}") for k in range(12))
    inst = RelationInstance(Dialogue(turns), "A", "n3", frozenset(["r"]))
    tok = WordTokenizer(Vocab.build([inst]))
    inp = build_input(inst, tok, max_len=64)
    assert len(inp) <= 64
    m = inp.num_turns
    assert 0 < m < 12
    longer = build_input(RelationInstance(Dialogue(turns[: m + 1]), "A", "n3", frozenset(["r"])), tok, max_len=10_000)
    assert len(longer) > 64
    words = tok.vocab.decode(inp.tokens)
    for (b, e), turn in zip(inp.turn_spans, turns):
        assert words[b + 2 : e + 1] == split_words(turn.text)
    assert words[-1] == SEP
    assert words[inp.subject_span[0]] == S1
    assert words[inp.object_span[0] : inp.object_span[1] + 1] == ["n3"]
    with pytest.raises(ValueError):
        build_input(inst, tok, max_len=8)


def test_subject_equal_object_warns(tok):
    inst = RelationInstance(Dialogue((Turn("S1", "hey"),)), "S1", "S1", frozenset())
    with pytest.warns(UserWarning):
        build_input(inst, tok)


def test_extra_speakers_share_clamped_slots():
    turns = tuple(Turn(f"P{k}", "hi") for k in range(6))
    inst = RelationInstance(Dialogue(turns), "P0", "P1", frozenset())
    tok = WordTokenizer(Vocab.build([inst]))
    inp = build_input(inst, tok, speaker_slots=2)
    rows = [inp.speaker_ids[b] for b, _ in inp.turn_spans]
    assert rows == [1, 2, 3, 4, 4, 4]


def test_embedding_matches_scalar_sum(frank_s2, tok):
    cfg = replace(PRESETS["tiny"].model, vocab_size=len(tok.vocab), num_labels=2)
    params = init_params(cfg, 3)
    inp = build_input(frank_s2, tok, cfg.max_len, cfg.speaker_slots)
    x = embed(inp, params).data
    for n in range(len(inp)):
        for j in range(cfg.d_model):
            ref = (
                params["emb.token"].data[inp.tokens[n], j]
                + params["emb.segment"].data[inp.segment_ids[n], j]
                + params["emb.position"].data[inp.position_ids[n], j]
                + params["emb.speaker"].data[inp.speaker_ids[n], j]
            )
            assert x[n, j] == ref
    no_spk = embed(inp, params, use_speaker=False).data
    np.testing.assert_allclose(x - no_spk, params["emb.speaker"].data[inp.speaker_ids], atol=1e-15)


def test_embedding_rejects_out_of_range_ids(frank_s2, tok):
    cfg = replace(PRESETS["tiny"].model, vocab_size=5, num_labels=2)
    params = init_params(cfg, 0)
    with pytest.raises(IndexError):
        embed(build_input(frank_s2, tok), params)


def test_zero_layer_encoder_is_identity_with_identity_gradient(rng):
    cfg = replace(PRESETS["tiny"].model, vocab_size=10, num_labels=2, encoder_layers=0)
    x = T.Tensor(rng.normal(size=(5, cfg.d_model)), requires_grad=True)
    w = rng.normal(size=(5, cfg.d_model))
    with GradTape() as tape:
        out = encode(x, init_params(cfg), cfg)
        loss = T.tsum(out * T.Tensor(w))
    tape.backward(loss)
    np.testing.assert_array_equal(out.data, x.data)
    np.testing.assert_array_equal(x.grad, w)


def test_encoder_layer_gradients(rng):
    cfg = replace(PRESETS["tiny"].model, vocab_size=10, num_labels=2, encoder_layers=1).deterministic()
    params = init_params(cfg, 0)
    x = rng.normal(size=(2, 6, cfg.d_model))
    allowed = np.ones((2, 6, 6), bool)
    allowed[1, :, 4:] = False
    allowed[1, 4:, 4:] = np.eye(2, dtype=bool)
    w = rng.normal(size=x.shape)
    # a key bias shifts every score in a row equally, so its true gradient is zero
    names = [n for n in params if n.startswith("enc.") and not n.endswith("attn.k.b")]
    rep = grad_check(lambda: T.tsum(encode(T.Tensor(x), params, cfg, allowed) * T.Tensor(w)), params, 80, names=names)
    assert rep.max_rel_error < 1e-5
    assert np.abs(params["enc.0.attn.k.b"].grad).max() < 1e-12


def test_padding_does_not_leak_into_real_tokens(rng):
    cfg = replace(PRESETS["tiny"].model, vocab_size=10, num_labels=2).deterministic()
    params = init_params(cfg, 1)
    x = rng.normal(size=(4, cfg.d_model))
    pad = np.concatenate([x, rng.normal(size=(3, cfg.d_model))])[None]
    allowed = np.eye(7, dtype=bool)[None].copy()
    allowed[0, :4, :4] = True
    a = encode(T.Tensor(x), params, cfg).data
    b = encode(T.Tensor(pad), params, cfg, allowed).data[0, :4]
    np.testing.assert_allclose(a, b, atol=1e-12)
