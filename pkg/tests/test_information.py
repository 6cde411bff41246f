import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cosine_potentials, naive_potentials
from qsmih.gradcheck import numeric_grad, rel_error
from qsmih.information import (
    clamped_qsmi_grad,
    clamped_qsmi_loss,
    combined_loss,
    hashing_regularizer,
    qmi,
    qmi_integration_oracle,
    qmi_potentials,
    qsmi,
    reduce_regularizer,
    unclamped_qmi_loss,
)
from qsmih.similarity import estimate_batch_m, indicator_matrix, pairwise_similarity


def _single(y):
    return [frozenset((int(v),)) for v in y]


# ------------------------------------------------------------------ potentials


def test_potentials_identical_points_one_class():
    p = qmi_potentials(np.zeros((2, 1)), _single([0, 0]), 1.0)
    assert p.v_in == pytest.approx(0.28209479177387814, abs=1e-12)
    assert p.v_all == pytest.approx(p.v_in, abs=1e-15) and p.v_btw == pytest.approx(p.v_in, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(1, 3), st.integers(0, 2**31))
def test_single_class_qmi_is_zero(N, n, seed):
    Y = np.random.default_rng(seed).normal(size=(N, n))
    assert abs(qmi(Y, _single([3] * N), 2.0)) < 1e-15


def test_potentials_frozen_oracle_values():
    # values from the loop-based oracle (tests/oracles.py), frozen
    Y = np.array([[-1.0], [-0.5], [0.4], [1.2], [2.0]])
    p = qmi_potentials(Y, _single([0, 0, 1, 1, 1]), 0.5)
    assert p.v_in == pytest.approx(0.16317799743762418, abs=1e-14)
    assert p.v_all == pytest.approx(0.10845209450955058, abs=1e-14)
    assert p.v_btw == pytest.approx(0.10858253813444776, abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 7), st.integers(1, 3), st.integers(1, 3), st.floats(0.3, 5.0), st.integers(0, 2**31))
def test_potentials_match_loop_oracle(N, n, C, s, seed):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(N, n))
    lab = rng.integers(0, C, N).tolist()
    p = qmi_potentials(Y, _single(lab), s)
    ref = naive_potentials(Y, lab, s)
    np.testing.assert_allclose([p.v_in, p.v_all, p.v_btw], ref, rtol=1e-12, atol=1e-15)


def test_potentials_match_integration_random_configs():
    rng = np.random.default_rng(11)
    for _ in range(10):
        N = int(rng.integers(3, 9))
        y = rng.uniform(-3, 3, N)
        lab = _single(rng.integers(0, 2, N))
        s = float(rng.uniform(0.3, 3.0))
        p = qmi_potentials(y[:, None], lab, s)
        o = qmi_integration_oracle(y, lab, s)
        np.testing.assert_allclose([p.v_in, p.v_all, p.v_btw], [o.v_in, o.v_all, o.v_btw], atol=1e-3)


def test_integration_oracle_single_point():
    o = qmi_integration_oracle(np.array([0.7]), _single([0]), 1.5)
    assert o.v_in == pytest.approx(1.0 / np.sqrt(2 * np.pi * 3.0), abs=1e-4)


def test_integration_oracle_symmetric_swap():
    y = np.array([-1.0, 1.0])
    a = qmi_integration_oracle(y, _single([0, 1]), 1.0)
    b = qmi_integration_oracle(y, _single([1, 0]), 1.0)
    assert a.v_btw == pytest.approx(b.v_btw, abs=1e-12)


def test_integration_oracle_grid_checks():
    with pytest.raises(ValueError, match="step"):
        qmi_integration_oracle(np.array([0.0, 1.0]), _single([0, 1]), 1.0, step=0.5)
    with pytest.raises(ValueError, match="span"):
        qmi_integration_oracle(np.array([0.0, 1.0]), _single([0, 1]), 1.0, lo=-1.0)


def test_qmi_direct_divergence_integral():
    # sum_q int (p(q,y) - P(q) p(y))^2 dy, integrated directly
    rng = np.random.default_rng(4)
    y = rng.uniform(-2, 2, 6)
    lab = np.array([0, 0, 0, 1, 1, 1])
    s = 0.8
    grid = np.linspace(y.min() - 8, y.max() + 8, 20001)
    dens = np.exp(-((grid[None] - y[:, None]) ** 2) / (2 * s)) / np.sqrt(2 * np.pi * s)
    p_y = dens.sum(0) / 6
    total = sum(np.trapezoid((dens[lab == c].sum(0) / 6 - 0.5 * p_y) ** 2, grid) for c in (0, 1))
    assert qmi(y[:, None], _single(lab), s) == pytest.approx(total, abs=1e-3)


def test_qmi_informative_labels_score_higher():
    y = np.array([-5.0, -5.1, -4.9, 5.0, 5.1, 4.9])[:, None]
    good = qmi(y, _single([0, 0, 0, 1, 1, 1]), 1.0)
    shuffled = qmi(y, _single([0, 1, 0, 1, 0, 1]), 1.0)
    assert good > shuffled


def test_qmi_rejects_multilabel():
    with pytest.raises(ValueError):
        qmi(np.zeros((2, 1)), [{0, 1}, {1}], 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), st.integers(0, 2**31))
def test_qmi_permutation_and_relabel_invariant(N, seed):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(N, 2))
    lab = rng.integers(0, 3, N)
    base = qmi(Y, _single(lab), 1.0)
    perm = rng.permutation(N)
    assert qmi(Y[perm], _single(lab[perm]), 1.0) == pytest.approx(base, abs=1e-14)
    assert qmi(Y, _single((lab + 7) % 10), 1.0) == pytest.approx(base, abs=1e-14)


# ------------------------------------------------------------------------ QSMI


def test_qsmi_example():
    assert qsmi(np.array([[1.0, 0.0], [0.0, 1.0]]), np.eye(2), 2.0) == pytest.approx(0.125, abs=1e-15)


def test_qsmi_single_class_zero():
    Y = np.random.default_rng(0).normal(size=(5, 3))
    assert abs(qsmi(Y, np.ones((5, 5)), 1.0)) < 1e-15


def test_cosine_potentials_frozen():
    # oracle values for an equiprobable 2x2 batch; V_ALL equals V_BTW
    Y = np.array([[1.0, 0.0], [0.6, 0.8], [-1.0, 0.2], [0.0, -1.0]])
    p = qmi_potentials(Y, _single([0, 0, 1, 1]), measure="cosine")
    assert p.v_in == pytest.approx(0.4002427415538635, abs=1e-14)
    assert p.v_all == pytest.approx(0.2559952403708403, abs=1e-14)
    assert abs(p.v_all - p.v_btw) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_equiprobable_matrix_form_equals_potential_form(C, per, n, seed):
    rng = np.random.default_rng(seed)
    lab = rng.permutation(np.repeat(np.arange(C), per))
    if len(lab) < 2:
        return
    Y = rng.normal(size=(len(lab), n))
    p = qmi_potentials(Y, _single(lab), measure="cosine")
    ref = cosine_potentials(Y, lab.tolist())
    np.testing.assert_allclose([p.v_in, p.v_all, p.v_btw], ref, atol=1e-12)
    assert abs(p.v_all - p.v_btw) < 1e-12
    D = indicator_matrix(_single(lab))
    assert qsmi(Y, D, estimate_batch_m(D)) == pytest.approx(p.v_in - p.v_btw, abs=1e-12)


# ---------------------------------------------------------------- clamped loss


def test_clamped_loss_at_indicator():
    D = indicator_matrix(_single([0, 0, 1, 1]))
    assert clamped_qsmi_loss(D, D, 2.0) == pytest.approx(0.25, abs=1e-15)


def test_clamped_loss_saturated():
    assert clamped_qsmi_loss(np.ones((5, 5)), np.ones((5, 5)), 1.0) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("M,per", [(1, 3), (2, 2), (3, 4), (5, 1)])
def test_clamped_loss_is_inverse_m_squared(M, per):
    D = indicator_matrix(_single(np.repeat(np.arange(M), per)))
    assert clamped_qsmi_loss(D, D, estimate_batch_m(D)) == pytest.approx(1.0 / M**2, abs=1e-12)


def test_clamped_loss_falls_as_similar_pair_rises():
    rng = np.random.default_rng(2)
    S = rng.uniform(0.1, 0.8, (4, 4))
    S = (S + S.T) / 2
    np.fill_diagonal(S, 1.0)
    D = indicator_matrix(_single([0, 0, 1, 1]))
    before = clamped_qsmi_loss(S, D, 2.0)
    S[0, 1] = S[1, 0] = S[0, 1] + 0.1
    assert clamped_qsmi_loss(S, D, 2.0) < before


def test_clamped_loss_range_check():
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        clamped_qsmi_loss(np.full((2, 2), 1.5), np.eye(2), 2.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31), st.sampled_from(["cosine", "gaussian-normalized"]))
def test_clamped_loss_nonnegative(N, seed, measure):
    rng = np.random.default_rng(seed)
    S = pairwise_similarity(rng.normal(size=(N, 3)), measure, 1.0)
    D = indicator_matrix(_single(rng.integers(0, 3, N)))
    assert clamped_qsmi_loss(S, D, estimate_batch_m(D)) >= 0.0


# ------------------------------------------------------------------- gradients


@pytest.mark.parametrize("measure", ["cosine", "gaussian-normalized"])
def test_clamped_grad_matches_finite_differences(measure):
    rng = np.random.default_rng(7)
    for _ in range(5):
        Y = rng.normal(size=(8, 6))
        D = indicator_matrix(_single(rng.integers(0, 3, 8)))
        M = estimate_batch_m(D)
        b = clamped_qsmi_grad(Y, D, M, measure, 2.0)
        num = numeric_grad(lambda: clamped_qsmi_loss(pairwise_similarity(Y, measure, 2.0), D, M), Y)
        assert rel_error(b.grad, num) < 1e-5


def test_clamped_grad_zero_at_identical_rows():
    Y = np.tile([0.3, -1.0, 2.0], (5, 1))
    b = clamped_qsmi_grad(Y, np.ones((5, 5)), 1.0)
    np.testing.assert_allclose(b.grad, 0.0, atol=1e-15)


def test_cosine_loss_scale_invariance():
    rng = np.random.default_rng(3)
    Y = rng.normal(size=(6, 4))
    D = indicator_matrix(_single(rng.integers(0, 2, 6)))
    b = clamped_qsmi_grad(Y, D, estimate_batch_m(D))
    Y2 = Y.copy()
    Y2[2] *= 2.0
    assert clamped_qsmi_grad(Y2, D, estimate_batch_m(D)).value == pytest.approx(b.value, abs=1e-14)
    assert abs(b.grad[2] @ Y[2]) < 1e-14


def test_clamped_grad_shape_check():
    with pytest.raises(ValueError):
        clamped_qsmi_grad(np.ones((3, 2)), np.eye(2), 1.0)


# --------------------------------------------------------------- regulariser


@pytest.mark.parametrize("Y,expected", [
    ([[1.0, -1.0, 1.0]], 0.0),
    ([[0.5, -1.0]], 0.5),
    ([[0.0, 0.0, 0.0, 0.0]], 4.0),
])
def test_regularizer_examples(Y, expected):
    assert hashing_regularizer(np.array(Y)).value == pytest.approx(expected)


def test_regularizer_subgradient_sign_rules():
    g = hashing_regularizer(np.array([[0.0, 0.5, -0.5, 2.0, -2.0, 1.0]])).grad
    np.testing.assert_array_equal(g, [[0.0, -1.0, 1.0, 1.0, -1.0, 0.0]])


def test_regularizer_mean_reduction():
    Y = np.random.default_rng(0).normal(size=(4, 3))
    s, m = hashing_regularizer(Y), reduce_regularizer(hashing_regularizer(Y), "mean")
    assert m.value == pytest.approx(s.value / 4)
    np.testing.assert_allclose(m.grad, s.grad / 4)
    with pytest.raises(ValueError):
        reduce_regularizer(s, "max")


# ------------------------------------------------------------- combined loss


def _batch(seed=0, N=8, n=5):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(N, n)), indicator_matrix(_single(rng.integers(0, 3, N)))


def test_combined_reduces_to_clamped():
    Y, D = _batch()
    b = combined_loss(Y, D, alpha=0.0, beta=0.0)
    ref = clamped_qsmi_grad(Y, D, estimate_batch_m(D))
    assert b.value == ref.value
    np.testing.assert_array_equal(b.grad, ref.grad)


@pytest.mark.parametrize("reduction", ["mean", "sum"])
def test_combined_additive(reduction):
    Y, D = _batch(1)
    b = combined_loss(Y, D, alpha=0.01, hash_reduction=reduction)
    assert b.value == pytest.approx(b.parts["qsmi_loss"] + 0.01 * b.parts["hash"], abs=1e-15)
    raw = hashing_regularizer(Y).value
    assert b.parts["hash"] == pytest.approx(raw if reduction == "sum" else raw / len(Y))


def test_combined_unsup_equal_to_sup():
    Y, D = _batch(2)
    b = combined_loss(Y, D, D, alpha=0.01, beta=0.5)
    assert b.value == pytest.approx(1.5 * b.parts["qsmi_loss"] + 0.01 * b.parts["hash"], abs=1e-14)


def test_combined_argument_checks():
    Y, D = _batch()
    with pytest.raises(ValueError):
        combined_loss(Y, D, beta=0.5)
    with pytest.raises(ValueError):
        combined_loss(Y, D, D, beta=0.0)
    with pytest.raises(ValueError):
        combined_loss(Y, D, alpha=-1.0)


# ------------------------------------------------------------ unclamped QMI


def test_unclamped_value_is_negative_qmi_and_grad_fd():
    rng = np.random.default_rng(5)
    Y = rng.normal(size=(8, 6))
    lab = _single(rng.integers(0, 3, 8))
    b = unclamped_qmi_loss(Y, lab, 1.5)
    assert b.value == pytest.approx(-qmi(Y, lab, 1.5), abs=1e-15)
    assert rel_error(b.grad, numeric_grad(lambda: -qmi(Y, lab, 1.5), Y)) < 1e-5


def test_unclamped_single_class_zero():
    Y = np.random.default_rng(0).normal(size=(6, 2))
    b = unclamped_qmi_loss(Y, _single([1] * 6), 1.0)
    assert abs(b.value) < 1e-15
    np.testing.assert_allclose(b.grad, 0.0, atol=1e-15)


def test_unclamped_separating_classes_lowers_loss():
    y = np.array([-0.5, -0.4, 0.4, 0.5])[:, None]
    lab = _single([0, 0, 1, 1])
    apart = y * np.array([[3.0], [3.0], [3.0], [3.0]])
    assert unclamped_qmi_loss(apart, lab, 1.0).value < unclamped_qmi_loss(y, lab, 1.0).value


# ---------------------------------------------------------------- trajectory


def test_gradient_descent_trajectory():
    rng = np.random.default_rng(9)
    Y = rng.normal(size=(10, 4))
    D = indicator_matrix(_single(np.repeat([0, 1], 5)))
    M = estimate_batch_m(D)
    q0 = qsmi(Y, D, M)
    prev = np.inf
    for _ in range(200):
        b = clamped_qsmi_grad(Y, D, M)
        assert b.value <= prev + 1e-15
        prev = b.value
        Y = Y - 0.5 * b.grad
    assert qsmi(Y, D, M) > q0
