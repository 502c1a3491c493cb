import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planq import autodiff as ad


def finite_diff_check(fn, params, h=1e-6, rtol=1e-6, atol=1e-9):
    """Central finite differences of sum(fn(params)) w.r.t. every entry."""
    for p in params:
        p.zero_grad()
    out = fn(*params)
    loss = ad.sum_all(out) if out.data.size != 1 else out
    loss.backward()
    for p in params:
        if not p.requires_grad:
            continue
        num = np.zeros_like(p.data)
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn(*params).data.sum()
            flat[i] = orig - h
            dn = fn(*params).data.sum()
            flat[i] = orig
            num.ravel()[i] = (up - dn) / (2 * h)
        assert np.allclose(p.grad, num, rtol=rtol, atol=atol), (p.grad, num)


def P(shape, rng, scale=1.0):
    return ad.parameter(rng.standard_normal(shape) * scale)


def test_add_broadcast():
    rng = np.random.default_rng(0)
    finite_diff_check(lambda a, b: ad.add(a, b), [P((3, 4), rng), P((1, 4), rng)])


def test_sub_mul_scale():
    rng = np.random.default_rng(1)
    finite_diff_check(lambda a, b: ad.mul(ad.sub(a, b), a), [P((2, 3), rng), P((2, 3), rng)])
    finite_diff_check(lambda a: ad.scale(a, -2.5), [P((2, 2), rng)])


def test_matmul():
    rng = np.random.default_rng(2)
    finite_diff_check(lambda a, b: ad.matmul(a, b), [P((3, 4), rng), P((4, 2), rng)])


def test_concat_and_slice():
    rng = np.random.default_rng(3)
    finite_diff_check(
        lambda a, b: ad.slice_cols(ad.concat_cols([a, b]), 1, 4), [P((2, 3), rng), P((2, 2), rng)]
    )
    finite_diff_check(lambda a, b: ad.concat_rows([a, b]), [P((2, 3), rng), P((1, 3), rng)])


def test_gather_rows_repeated_indices():
    rng = np.random.default_rng(4)
    idx = [0, 2, 2, 1, 0]
    finite_diff_check(lambda a: ad.gather_rows(a, idx), [P((3, 2), rng)])


def test_segment_sum():
    rng = np.random.default_rng(5)
    seg = [0, 0, 2, 1]
    finite_diff_check(lambda a: ad.segment_sum(a, seg, 3), [P((4, 2), rng)])


def test_segment_max_values_and_grad():
    rng = np.random.default_rng(6)
    seg = [0, 0, 2]
    a = P((3, 2), rng)
    out = ad.segment_max(a, seg, 4, empty_value=-7.0)
    assert np.array_equal(out.data[0], np.maximum(a.data[0], a.data[1]))
    assert np.array_equal(out.data[2], a.data[2])
    assert np.all(out.data[1] == -7.0) and np.all(out.data[3] == -7.0)
    finite_diff_check(lambda x: ad.segment_max(x, seg, 4), [P((3, 2), rng)])


def test_segment_max_tie_routes_once():
    a = ad.parameter(np.array([[1.0], [1.0]]))
    out = ad.segment_max(a, [0, 0], 1)
    ad.sum_all(out).backward()
    assert a.grad.sum() == 1.0  # tie sends the gradient to a single row


def test_segment_logsumexp_value():
    rng = np.random.default_rng(7)
    a = P((3, 2), rng)
    seg = [0, 0, 1]
    out = ad.segment_logsumexp(a, seg, 3, empty_value=0.5)
    expect0 = np.log(np.exp(a.data[0]) + np.exp(a.data[1]))
    assert np.allclose(out.data[0], expect0)
    assert np.allclose(out.data[1], a.data[2])
    assert np.all(out.data[2] == 0.5)
    finite_diff_check(lambda x: ad.segment_logsumexp(x, seg, 3), [P((3, 2), rng)])


def test_segment_logsumexp_large_values_stable():
    a = ad.parameter(np.array([[1000.0], [1000.0]]))
    out = ad.segment_logsumexp(a, [0, 0], 1)
    assert np.isfinite(out.data).all()
    assert np.allclose(out.data[0, 0], 1000.0 + np.log(2.0))


def test_sum_rows_sum_all():
    rng = np.random.default_rng(8)
    finite_diff_check(lambda a: ad.sum_rows(a), [P((3, 4), rng)])
    finite_diff_check(lambda a: ad.sum_all(a), [P((3, 4), rng)])


def test_abs_relu_away_from_kink():
    rng = np.random.default_rng(9)
    a = ad.parameter(rng.standard_normal((3, 3)) + np.sign(rng.standard_normal((3, 3))) * 0.5)
    finite_diff_check(lambda x: ad.abs_(x), [a])
    finite_diff_check(lambda x: ad.relu(x), [a])


def test_relu_subgradient_zero_at_kink():
    a = ad.parameter(np.zeros((1, 1)))
    out = ad.relu(a)
    out.backward(np.ones((1, 1)))
    assert a.grad[0, 0] == 0.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
def test_mish_gradient_property(values):
    a = ad.parameter(np.array([values]))
    finite_diff_check(lambda x: ad.mish(x), [a], rtol=1e-5, atol=1e-7)


def test_mish_values():
    x = np.array([[0.0, 1.0, -1.0]])
    out = ad.mish(ad.tensor(x))
    sp = np.logaddexp(0.0, x)
    assert np.allclose(out.data, x * np.tanh(sp))
    assert out.data[0, 0] == 0.0


def test_backward_requires_scalar():
    a = ad.parameter(np.ones((2, 2)))
    with pytest.raises(ValueError):
        ad.add(a, a).backward()


def test_gradient_accumulates_on_reuse():
    a = ad.parameter(np.array([[2.0]]))
    out = ad.add(ad.mul(a, a), a)  # a^2 + a -> d/da = 2a + 1 = 5
    out.backward(np.ones((1, 1)))
    assert a.grad[0, 0] == 5.0


def test_no_grad_for_plain_tensors():
    a = ad.tensor(np.ones((2, 2)))
    b = ad.parameter(np.ones((2, 2)))
    out = ad.sum_all(ad.mul(a, b))
    out.backward()
    assert a.grad is None and b.grad is not None
