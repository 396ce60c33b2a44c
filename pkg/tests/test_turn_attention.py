from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_instance, surround_oracle
from tucore_gcn.config import PRESETS
from tucore_gcn.corpus import Dialogue, RelationInstance, Turn
from tucore_gcn.encoding import InputSequence, Vocab, WordTokenizer, build_input
from tucore_gcn.layers import multi_head_attention
from tucore_gcn.model import init_params
from tucore_gcn.numerics import Tensor
from tucore_gcn.turn_attention import SurroundMask, build_surround_mask, surround_allowed, turn_attend


def three_turn_input():
    turns = (Turn("A", "one two"), Turn("B", "three"), Turn("A", "four five six"))
    inst = RelationInstance(Dialogue(turns), "A", "B", frozenset())
    return build_input(inst, WordTokenizer(Vocab.build([inst])))


def test_three_turns_window_one():
    inp = three_turn_input()
    allowed = build_surround_mask(inp, 1).allowed
    t = inp.turn_of_token()
    for m in range(len(inp)):
        if t[m] == 0:
            assert list(np.flatnonzero(allowed[m])) == [m]
            continue
        seen = set(t[np.flatnonzero(allowed[m])])
        assert seen == {1: {1, 2}, 2: {1, 2, 3}, 3: {2, 3}}[t[m]]


def test_wide_window_and_single_turn():
    inp = three_turn_input()
    t = inp.turn_of_token() > 0
    wide = build_surround_mask(inp, 2).allowed
    assert wide[np.ix_(t, t)].all()
    single = surround_allowed(np.array([0, 1, 1, 1, 0, 0]), 0)
    assert single[1:4, 1:4].all()
    assert (single[[0, 4, 5]] == np.eye(6, dtype=bool)[[0, 4, 5]]).all()
    with pytest.raises(ValueError):
        surround_allowed(np.array([1]), -1)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 4))
def test_mask_matches_pairwise_oracle(seed, c):
    inst = random_instance(np.random.default_rng(seed))
    inp = build_input(inst, WordTokenizer(Vocab.build([inst])))
    mask = build_surround_mask(inp, c).allowed
    np.testing.assert_array_equal(mask, surround_oracle(inp.turn_spans, len(inp), c))
    d = inp.turn_of_token() > 0
    sub = mask[np.ix_(d, d)]
    assert (sub == sub.T).all()
    assert mask.diagonal().all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 3))
def test_mask_grows_with_window(seed, c):
    inst = random_instance(np.random.default_rng(seed))
    inp = build_input(inst, WordTokenizer(Vocab.build([inst])))
    a, b = build_surround_mask(inp, c).allowed, build_surround_mask(inp, c + 1).allowed
    assert not (a & ~b).any()


def test_overlapping_spans_rejected():
    inp = three_turn_input()
    bad = replace(inp, turn_spans=((1, 4), (3, 5)))
    with pytest.raises(ValueError):
        build_surround_mask(bad, 1)


def test_additive_and_padded_forms():
    m = SurroundMask(np.array([[True, False], [False, True]]), 0)
    assert m.additive()[0, 1] < -1e8 and m.additive()[0, 0] == 0
    p = m.padded(4)
    assert p.shape == (4, 4) and p[3, 3] and not p[3, :3].any()


@pytest.fixture(scope="module")
def setup():
    inp = three_turn_input()
    cfg = replace(PRESETS["tiny"].model, vocab_size=20, num_labels=2).deterministic()
    params = init_params(cfg, 0)
    x = np.random.default_rng(0).normal(size=(len(inp), cfg.d_model))
    return inp, cfg, params, x


def test_all_allowed_equals_unmasked_block(setup):
    inp, cfg, params, x = setup
    n = len(inp)
    out = turn_attend(Tensor(x), np.ones((n, n), bool), params, cfg).data
    # unmasked reference written directly with numpy
    h, d = cfg.turn_heads, cfg.d_model
    dh = d // h
    p = {k: params[f"turn_attn.{k}"].data for k in ("q.w", "q.b", "k.w", "k.b", "v.w", "v.b", "o.w", "o.b", "ln.g", "ln.b")}
    q, k, v = (x @ p[f"{s}.w"] + p[f"{s}.b"] for s in "qkv")
    ctx = np.zeros_like(x)
    for j in range(h):
        sl = slice(j * dh, (j + 1) * dh)
        s = q[:, sl] @ k[:, sl].T / np.sqrt(dh)
        w = np.exp(s - s.max(1, keepdims=True))
        w /= w.sum(1, keepdims=True)
        ctx[:, sl] = w @ v[:, sl]
    r = x + ctx @ p["o.w"] + p["o.b"]
    mu, var = r.mean(1, keepdims=True), r.var(1, keepdims=True)
    ref = (r - mu) / np.sqrt(var + 1e-5) * p["ln.g"] + p["ln.b"]
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_non_dialogue_rows_attend_only_themselves(setup):
    inp, cfg, params, x = setup
    weights = []
    turn_attend(Tensor(x), build_surround_mask(inp, 1), params, cfg, weights_out=weights)
    w = weights[0][0]
    for m in np.flatnonzero(inp.turn_of_token() == 0):
        np.testing.assert_array_equal(w[:, m, m], 1.0)


def test_out_of_window_rows_ignore_perturbation(setup):
    inp, cfg, params, x = setup
    mask = build_surround_mask(inp, 0)
    t = inp.turn_of_token()
    j = inp.turn_spans[2][0]
    y = x.copy()
    y[j] += 5.0
    wa, wb = [], []
    a = turn_attend(Tensor(x), mask, params, cfg, weights_out=wa).data
    b = turn_attend(Tensor(y), mask, params, cfg, weights_out=wb).data
    far = np.flatnonzero((t > 0) & (t != 3))
    assert (wa[0][0][:, far, j] == 0).all()
    np.testing.assert_allclose(a[far], b[far], atol=1e-12)
    assert not np.allclose(a[j], b[j])


def test_head_count_must_divide_dimension(setup):
    inp, cfg, params, x = setup
    with pytest.raises(ValueError):
        multi_head_attention(Tensor(x[None]), np.ones((len(inp),) * 2, bool), params, "turn_attn", 3)
