"""Selective-SSM checks: selection, discretization, the recurrence and its
convolutional-form oracle, stability and causality."""

import numpy as np
import pytest

from polarmamba import ssm
from polarmamba import tensor as T
from polarmamba.tensor import Tensor


def make_params(d, n, seed=0):
    return ssm.SSMParams.init(d, n, np.random.default_rng(seed))


def test_select_params_zero_input_zero_bias():
    p = make_params(4, 3)
    p.delta_bias.data[:] = 0.0
    x = Tensor(np.zeros((2, 5, 4)))
    b_seq, c_seq, delta = ssm.select_params(x, p)
    np.testing.assert_array_equal(b_seq.data, 0.0)
    np.testing.assert_array_equal(c_seq.data, 0.0)
    np.testing.assert_allclose(delta.data, np.log(2.0), atol=1e-12)


def test_select_params_delta_strictly_positive():
    p = make_params(6, 4, seed=1)
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = Tensor(rng.standard_normal((3, 8, 6)) * 10)
        _, _, delta = ssm.select_params(x, p)
        assert delta.data.min() > 0.0


def test_discretize_zero_transition():
    delta = Tensor(np.full((1, 4, 2), 0.3))
    a = Tensor(np.zeros((2, 3)))
    b_seq = Tensor(np.random.default_rng(0).standard_normal((1, 4, 3)))
    disc = ssm.discretize(a, b_seq, delta)
    np.testing.assert_allclose(disc.abar.data, 1.0)


def test_discretize_scalar_exponential():
    delta = Tensor(np.full((1, 1, 1), 0.1))
    a = Tensor(np.full((1, 1), -1.0))
    b_seq = Tensor(np.ones((1, 1, 1)))
    disc = ssm.discretize(a, b_seq, delta)
    assert abs(disc.abar.data[0, 0, 0, 0] - 0.9048374180359595) < 1e-12


def test_discretize_small_delta_limit():
    a = Tensor(np.full((2, 2), -3.0))
    b_seq = Tensor(np.ones((1, 3, 2)))
    for eps in (1e-4, 1e-6, 1e-8):
        disc = ssm.discretize(a, b_seq, Tensor(np.full((1, 3, 2), eps)))
        np.testing.assert_allclose(disc.abar.data, 1.0, atol=1e-3)
        np.testing.assert_allclose(disc.bbar.data, 0.0, atol=1e-3)


def test_discretize_rejects_nonpositive_delta():
    with pytest.raises(ValueError, match="positive"):
        ssm.discretize(Tensor(np.zeros((1, 1))), Tensor(np.ones((1, 1, 1))),
                       Tensor(np.zeros((1, 1, 1))))


def test_scan_memoryless_when_abar_zero():
    rng = np.random.default_rng(3)
    B, L, D, N = 2, 6, 3, 4
    x = rng.standard_normal((B, L, D))
    bbar = rng.standard_normal((B, L, D, N))
    c = rng.standard_normal((B, L, N))
    disc = ssm.DiscreteSSM(abar=Tensor(np.zeros((B, L, D, N))),
                           bbar=Tensor(bbar), c=Tensor(c))
    y = ssm.selective_scan(Tensor(x), disc).data
    expected = np.einsum("bln,bldn->bld", c, bbar) * x
    np.testing.assert_allclose(y, expected, atol=1e-12)


def test_scan_single_step():
    rng = np.random.default_rng(4)
    bbar = rng.standard_normal((1, 1, 2, 3))
    c = rng.standard_normal((1, 1, 3))
    x = rng.standard_normal((1, 1, 2))
    disc = ssm.DiscreteSSM(abar=Tensor(rng.uniform(0, 1, (1, 1, 2, 3))),
                           bbar=Tensor(bbar), c=Tensor(c))
    y = ssm.selective_scan(Tensor(x), disc).data
    expected = np.einsum("n,dn->d", c[0, 0], bbar[0, 0]) * x[0, 0]
    np.testing.assert_allclose(y[0, 0], expected, atol=1e-12)


def _time_invariant_draw(rng, b, length, d, n):
    abar_c = rng.uniform(0.05, 0.95, (d, n))
    bbar_c = rng.standard_normal((d, n))
    c_c = rng.standard_normal(n)
    x = rng.standard_normal((b, length, d))
    abar = np.broadcast_to(abar_c, (b, length, d, n)).copy()
    bbar = np.broadcast_to(bbar_c, (b, length, d, n)).copy()
    c = np.broadcast_to(c_c, (b, length, n)).copy()
    return x, abar, bbar, c


def test_recurrence_matches_conv_oracle_50_draws():
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        d = int(rng.integers(1, 5))
        n = int(rng.integers(1, 9))
        length = int(rng.integers(2, 65))
        x, abar, bbar, c = _time_invariant_draw(rng, 2, length, d, n)
        disc = ssm.DiscreteSSM(abar=Tensor(abar), bbar=Tensor(bbar), c=Tensor(c))
        y_scan = ssm.selective_scan(Tensor(x), disc).data
        y_conv = ssm.conv_oracle(x, abar, bbar, c)
        worst = max(worst, np.abs(y_scan - y_conv).max())
    assert worst < 1e-10


def test_conv_oracle_prefix_sums():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 9, 1))
    ones = np.ones((1, 1))
    y = ssm.conv_oracle(x, ones, ones, np.ones(1))
    np.testing.assert_allclose(y, np.cumsum(x, axis=1), atol=1e-12)


def test_conv_oracle_kernel_head_and_impulse():
    rng = np.random.default_rng(6)
    d, n, length = 2, 3, 12
    abar = rng.uniform(0.1, 0.9, (d, n))
    bbar = rng.standard_normal((d, n))
    c = rng.standard_normal(n)
    impulse = np.zeros((1, length, d))
    impulse[0, 0] = 1.0
    y = ssm.conv_oracle(impulse, abar, bbar, c)
    # impulse response equals the kernel; entry 0 is <c, bbar_d>
    np.testing.assert_allclose(y[0, 0], bbar @ c, atol=1e-12)
    powers = np.ones_like(abar)
    for t in range(length):
        np.testing.assert_allclose(y[0, t], (powers * bbar) @ c, atol=1e-12)
        powers = powers * abar


def test_conv_oracle_rejects_time_varying():
    rng = np.random.default_rng(7)
    x, abar, bbar, c = _time_invariant_draw(rng, 1, 6, 2, 2)
    abar[0, 3, 1, 0] += 0.1
    with pytest.raises(ValueError, match="vary"):
        ssm.conv_oracle(x, abar, bbar, c)


def test_scan_state_stays_bounded():
    # with |abar| < 1 and constant input the state obeys the geometric bound
    rng = np.random.default_rng(8)
    for seed in range(10):
        r = np.random.default_rng(seed)
        d, n, length = 3, 4, 200
        abar_c = r.uniform(0.1, 0.99, (d, n))
        bbar_c = r.standard_normal((d, n))
        x = np.ones((1, length, d))
        h = np.zeros((d, n))
        bound = np.abs(bbar_c).max() / (1.0 - abar_c.max())
        for t in range(length):
            h = abar_c * h + bbar_c * x[0, t, :, None]
            assert np.abs(h).max() <= bound + 1e-9


def test_scan_causality_exhaustive_l8():
    rng = np.random.default_rng(9)
    B, L, D, N = 1, 8, 2, 3
    p = make_params(D, N, seed=10)
    x = rng.standard_normal((B, L, D))
    base = ssm.apply_ssm(Tensor(x), p).data
    for t in range(L):
        bumped = x.copy()
        bumped[0, t] += 0.5
        out = ssm.apply_ssm(Tensor(bumped), p).data
        if t > 0:
            np.testing.assert_allclose(out[0, :t], base[0, :t], atol=1e-14)
        assert np.abs(out[0, t:] - base[0, t:]).max() > 0


def test_scan_gradcheck_small():
    rng = np.random.default_rng(11)
    err = T.gradcheck("selective_scan",
                      [rng.standard_normal((1, 8, 2)),
                       rng.uniform(0.1, 0.9, (1, 8, 2, 4)),
                       rng.standard_normal((1, 8, 2, 4)),
                       rng.standard_normal((1, 8, 4))])
    assert err < 1e-4


def test_fused_path_matches_composed_path_with_gradients():
    rng = np.random.default_rng(12)
    p = make_params(6, 4, seed=13)
    x = rng.standard_normal((2, 7, 6))

    t1 = Tensor(x, requires_grad=True)
    loss1 = T.tsum(T.mul(ssm.apply_ssm(t1, p), ssm.apply_ssm(t1, p)))
    T.backward(loss1)
    grads1 = {k: v.grad.copy() for k, v in p.named_params("p").items()}
    gx1 = t1.grad.copy()
    for v in p.named_params("p").values():
        v.zero_grad()

    t2 = Tensor(x, requires_grad=True)
    loss2 = T.tsum(T.mul(ssm.apply_ssm_composed(t2, p), ssm.apply_ssm_composed(t2, p)))
    T.backward(loss2)
    assert abs(loss1.item() - loss2.item()) < 1e-12
    assert np.abs(gx1 - t2.grad).max() < 1e-12
    for k, v in p.named_params("p").items():
        assert np.abs(grads1[k] - v.grad).max() < 1e-12


def test_abar_parameterization_stays_in_unit_interval():
    p = make_params(5, 6, seed=14)
    rng = np.random.default_rng(15)
    x = Tensor(rng.standard_normal((2, 9, 5)) * 3)
    b_seq, c_seq, delta = ssm.select_params(x, p)
    a = T.neg(T.exp(p.a_log))
    disc = ssm.discretize(a, b_seq, delta)
    assert disc.abar.data.min() > 0.0
    assert disc.abar.data.max() < 1.0
