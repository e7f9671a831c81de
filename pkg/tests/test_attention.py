import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from tscrec.attention import (
    LITERAL,
    MASKED,
    HerdingAttention,
    apply_hea,
    attention_scores,
    cosine_similarity,
    time_decay,
)
from tscrec.errors import InvalidArgumentError

import oracles
from conftest import cell_lists, randomize


def test_cosine_examples():
    assert cosine_similarity([3.0, 4.0], [3.0, 4.0]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(0.7071, abs=1e-4)
    assert cosine_similarity([0, 0], [1, 2]) == 0.0


def test_time_decay_examples():
    assert time_decay(3.0, 1.0, 1, 2, 0.2) == 0.0
    assert time_decay(3.0, 1.0, 2, 2, 0.2) == 0.0
    assert time_decay(10.0, 5.0, 4, 1, 0.2) == pytest.approx(math.exp(-1), abs=1e-12)
    assert time_decay(1000.0, 5.0, 4, 1, 0.0) == 1.0
    assert time_decay(5.0, 7.0, 4, 1, 0.3) == 1.0  # negative gap clamps to zero
    with pytest.raises(InvalidArgumentError):
        time_decay(1, 0, 1, 0, -0.1)


@given(st.floats(0.01, 5), st.floats(0, 100), st.floats(0.001, 50))
def test_time_decay_strictly_decreasing_in_gap(beta, gap, extra):
    a = time_decay(gap, 0.0, 2, 1, beta)
    b = time_decay(gap + extra, 0.0, 2, 1, beta)
    assert 0 < b <= a <= 1
    if beta * extra > 1e-9 and a > 1e-300:
        assert b < a


def test_literal_first_row_is_uniform():
    rng = np.random.default_rng(0)
    seq = rng.normal(size=(10, 4))
    _, _, a_bar = attention_scores(seq, np.arange(10.0), np.ones(10, bool), 0.2, LITERAL)
    np.testing.assert_allclose(a_bar[0].numpy(), 0.1, atol=1e-15)


def test_masked_rows_only_attend_to_valid_predecessors():
    rng = np.random.default_rng(1)
    seq = rng.normal(size=(5, 3))
    seq[:2] = 0.0
    mask = np.array([False, False, True, True, True])
    _, _, a_bar = attention_scores(seq, [1.0, 1.0, 1.0, 2.0, 4.0], mask, 0.2, MASKED)
    a_bar = a_bar.numpy()
    for j in range(3):
        np.testing.assert_array_equal(a_bar[j], np.eye(5)[j])  # no valid predecessor: self
    assert a_bar[3, 2] == 1.0
    assert a_bar[4, :2].sum() == 0 and a_bar[4, 4] == 0
    assert a_bar[4, 2:4].sum() == pytest.approx(1.0)


def test_three_slot_scores_match_scalar_oracle():
    seq = [[0.3, -1.2, 0.5], [1.0, 0.1, -0.4], [-0.7, 0.6, 0.9]]
    times = [2.0, 3.5, 9.0]
    mask = [True, True, True]
    for mode in (LITERAL, MASKED):
        sim_norm, td, a_bar = attention_scores(seq, times, mask, 0.2, mode)
        _, o_sim_norm, o_td, _, o_a_bar = oracles.hea_scores(seq, times, mask, 0.2, mode)
        np.testing.assert_allclose(sim_norm.numpy(), o_sim_norm, atol=1e-14)
        np.testing.assert_allclose(td.numpy(), o_td, atol=1e-15)
        np.testing.assert_allclose(a_bar.numpy(), o_a_bar, atol=1e-14)


def random_instance(rng, M, d):
    seq = rng.normal(size=(M, d))
    n_pad = int(rng.integers(0, M))
    seq[:n_pad] = 0.0
    times = np.sort(rng.uniform(0, 30, size=M)).round(2)
    times[:n_pad] = times[n_pad]
    mask = np.arange(M) >= n_pad
    return seq, times, mask


def module(d, beta, mode, seed):
    return randomize(HerdingAttention(d, beta, mode), seed)


@pytest.mark.parametrize("mode", [LITERAL, MASKED])
def test_apply_hea_matches_scalar_oracle_on_random_instances(mode):
    rng = np.random.default_rng(42)
    for trial in range(100):
        M, d = int(rng.integers(1, 6)), int(rng.integers(1, 9))
        beta = float(rng.choice([0.0, 0.2, 1.0]))
        seq, times, mask = random_instance(rng, M, d)
        hea = module(d, beta, mode, trial)
        _, trace = apply_hea(seq, times, mask, hea)
        a_bar, H, C, h_last = oracles.hea(
            seq.tolist(), times.tolist(), mask.tolist(), beta, cell_lists(hea.encoder), cell_lists(hea.decoder), mode
        )
        np.testing.assert_allclose(trace.A_bar, a_bar, atol=1e-10, rtol=0)
        np.testing.assert_allclose(trace.H, H, atol=1e-10, rtol=0)
        np.testing.assert_allclose(trace.C, C, atol=1e-10, rtol=0)
        np.testing.assert_allclose(trace.h_tilde_M, h_last, atol=1e-10, rtol=0)


def test_single_slot_window():
    hea = module(3, 0.2, LITERAL, 0)
    _, trace = apply_hea(np.ones((1, 3)), [4.0], [True], hea)
    assert trace.A_bar.tolist() == [[1.0]]
    np.testing.assert_array_equal(trace.C, trace.H)
    assert trace.h_tilde_M.shape == (3,)


def test_two_slot_hand_recurrence():
    # 2-unit cells, M=2: unroll encoder, attention and decoder by hand.
    hea = module(2, 0.5, LITERAL, 9)
    seq = [[0.4, -0.2], [0.1, 0.9]]
    times = [1.0, 3.0]
    enc, dec = cell_lists(hea.encoder), cell_lists(hea.decoder)
    h1, c1 = oracles.lstm_step(seq[0], [0, 0], [0, 0], *enc)
    h2, _ = oracles.lstm_step(seq[1], h1, c1, *enc)
    cos = oracles.cosine(seq[0], seq[1])
    sim_norm_10 = math.exp(cos) / (math.exp(cos) + math.e)
    a10 = sim_norm_10 * math.exp(-0.5 * 2.0)
    row0 = [0.5, 0.5]
    row1 = [math.exp(a10) / (math.exp(a10) + 1), 1 / (math.exp(a10) + 1)]
    C = [[r[0] * h1[i] + r[1] * h2[i] for i in range(2)] for r in (row0, row1)]
    g1, k1 = oracles.lstm_step(C[0], [0, 0], [0, 0], *dec)
    g2, _ = oracles.lstm_step(C[1], g1, k1, *dec)
    out, trace = apply_hea(seq, times, [True, True], hea)
    np.testing.assert_allclose(trace.A_bar, [row0, row1], atol=1e-15)
    np.testing.assert_allclose(out.detach().numpy(), g2, atol=1e-14)


def test_dimension_mismatch():
    hea = module(4, 0.2, LITERAL, 0)
    with pytest.raises(InvalidArgumentError):
        apply_hea(np.ones((3, 5)), [0, 1, 2], [True] * 3, hea)
    with pytest.raises(InvalidArgumentError):
        apply_hea(np.ones((3, 4)), [0, 1], [True] * 3, hea)


def test_unknown_mode():
    with pytest.raises(InvalidArgumentError):
        attention_scores(np.ones((2, 2)), [0, 1], [True, True], 0.2, "soft")


instances = st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1), st.sampled_from([LITERAL, MASKED]))


@settings(max_examples=80, deadline=None)
@given(instances, st.floats(0, 3))
def test_score_invariants(inst, beta):
    M, d, seed, mode = inst
    rng = np.random.default_rng(seed)
    seq, times, mask = random_instance(rng, M, d)
    sim_norm, td, a_bar = (x.numpy() for x in attention_scores(seq, times, mask, beta, mode))
    np.testing.assert_allclose(sim_norm.sum(1), 1.0, atol=1e-6)
    np.testing.assert_allclose(a_bar.sum(1), 1.0, atol=1e-6)
    upper = np.triu(np.ones((M, M), bool))
    assert np.all(td[upper] == 0.0)
    assert np.all((td[~upper] > 0) & (td[~upper] <= 1))
    if beta == 0:
        assert np.all(td[~upper] == 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1), st.floats(-50, 50), st.sampled_from([LITERAL, MASKED]))
def test_time_shift_invariance(M, seed, shift, mode):
    rng = np.random.default_rng(seed)
    seq, times, mask = random_instance(rng, M, 4)
    hea = module(4, 0.2, mode, seed % 1000)
    shifted = times + shift + 100.0
    out_a, tr_a = apply_hea(seq, times + 100.0, mask, hea)
    out_b, tr_b = apply_hea(seq, shifted, mask, hea)
    np.testing.assert_allclose(tr_a.TD, tr_b.TD, atol=1e-12)
    np.testing.assert_allclose(tr_a.A_bar, tr_b.A_bar, atol=1e-12)
    np.testing.assert_allclose(out_a.detach().numpy(), out_b.detach().numpy(), atol=1e-12)


def test_similarity_matrix_symmetric_with_unit_diagonal():
    rng = np.random.default_rng(5)
    seq = rng.normal(size=(6, 4))
    hea = module(4, 0.2, LITERAL, 1)
    _, trace = apply_hea(seq, np.arange(6.0), np.ones(6, bool), hea)
    np.testing.assert_allclose(trace.SIM, trace.SIM.T, atol=1e-15)
    np.testing.assert_allclose(np.diag(trace.SIM), 1.0, atol=1e-14)


def test_pad_rows_have_zero_similarity():
    seq = np.array([[0.0, 0.0], [1.0, 2.0], [2.0, -1.0]])
    hea = module(2, 0.2, LITERAL, 1)
    _, trace = apply_hea(seq, [1.0, 1.0, 2.0], [False, True, True], hea)
    assert np.all(trace.SIM[0] == 0) and np.all(trace.SIM[:, 0] == 0)


def test_trace_serialises():
    import json

    hea = module(2, 0.2, MASKED, 1)
    _, trace = apply_hea(np.ones((2, 2)), [0.0, 1.0], [True, True], hea)
    data = json.loads(trace.to_json())
    assert data["mode"] == MASKED and len(data["A_bar"]) == 2


def test_hea_gradients_match_finite_differences():
    torch.manual_seed(0)
    hea = module(8, 0.2, LITERAL, 3)
    rng = np.random.default_rng(0)
    seq = torch.as_tensor(rng.normal(size=(1, 3, 8)))
    times = torch.tensor([[0.0, 1.5, 4.0]], dtype=torch.float64)
    mask = torch.ones(1, 3, dtype=torch.bool)

    def loss():
        return (hea(seq, times, mask) ** 2).sum() + hea(seq, times, mask).sum()

    hea.zero_grad()
    loss().backward()
    for name, p in hea.named_parameters():
        flat = p.data.view(-1)
        grad = p.grad.view(-1)
        for idx in rng.choice(flat.numel(), size=20, replace=False):
            orig = flat[idx].item()
            with torch.no_grad():
                flat[idx] = orig + 1e-5
                up = loss().item()
                flat[idx] = orig - 1e-5
                down = loss().item()
                flat[idx] = orig
            num = (up - down) / 2e-5
            a = grad[idx].item()
            assert abs(a - num) / max(abs(a), abs(num), 1e-6) < 1e-4, name
