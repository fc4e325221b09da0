import numpy as np
import pytest

from mmcl.autodiff import (Parameter, Tensor, concat, cosine_similarity, grad_check,
                           logsumexp_rows, softmax, zero_grads)
from mmcl.errors import ContractError, DegenerateInputError, DimensionError, DomainError
from mmcl.optim import SGD, Adam


def test_matmul_identity():
    a = np.arange(4.0).reshape(2, 2)
    out = Tensor(np.eye(2)) @ Tensor(a)
    np.testing.assert_array_equal(out.values, a)


def test_matmul_hand_case():
    out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
    np.testing.assert_array_equal(out.values, [[3.0], [7.0]])


def test_matmul_shape_mismatch_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 3)))


def test_matmul_gradient_vs_finite_differences():
    rng = np.random.default_rng(0)
    a = Tensor(rng.standard_normal((3, 4)))
    b = Tensor(rng.standard_normal((4, 2)))
    err = grad_check(lambda: ((a @ b) * (a @ b)).sum(), [a, b])
    assert err < 1e-6


def test_elementwise_analytic_points():
    assert Tensor(0.0).sigmoid().item() == 0.5
    assert Tensor(0.0).tanh().item() == 0.0
    assert Tensor(1.0).log().item() == 0.0
    assert Tensor(0.0).exp().item() == 1.0


def test_log_domain_error():
    with pytest.raises(DomainError):
        Tensor([1.0, -2.0]).log()
    with pytest.raises(DomainError):
        Tensor([0.0]).log()


def test_mul_gradient():
    rng = np.random.default_rng(1)
    a = Tensor(rng.standard_normal((2, 3)))
    b = Tensor(rng.standard_normal((2, 3)))
    err = grad_check(lambda: (a * b).sum(), [a, b])
    assert err < 1e-6


@pytest.mark.parametrize("op", ["sigmoid", "tanh", "exp", "softplus", "sqrt"])
def test_unary_gradients(op):
    rng = np.random.default_rng(2)
    x = Tensor(np.abs(rng.standard_normal((2, 3))) + 0.5)
    err = grad_check(lambda: getattr(x, op)().sum(), x)
    assert err < 1e-6


def test_softmax_uniform():
    out = softmax(Tensor(np.zeros(5)))
    np.testing.assert_allclose(out.values, np.full(5, 0.2), rtol=0, atol=1e-15)


def test_softmax_overflow_stability():
    out = softmax(Tensor([1000.0, 0.0]))
    assert np.all(np.isfinite(out.values))
    assert out.values[0] == pytest.approx(1.0)
    assert out.values[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_sums_to_one_and_permutation_equivariant():
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.standard_normal(6)
        out = softmax(Tensor(x)).values
        assert abs(out.sum() - 1.0) <= 1e-12
        perm = rng.permutation(6)
        np.testing.assert_allclose(softmax(Tensor(x[perm])).values, out[perm], atol=1e-15)


def test_softmax_empty_rejected():
    with pytest.raises(DimensionError):
        softmax(Tensor(np.zeros(0)))


def test_softmax_gradient():
    rng = np.random.default_rng(4)
    x = Tensor(rng.standard_normal(5))
    w = rng.standard_normal(5)
    err = grad_check(lambda: (softmax(x) * Tensor(w)).sum(), x)
    assert err < 1e-6


def test_cosine_similarity_values():
    assert cosine_similarity(Tensor([1.0, 0.0]), Tensor([1.0, 0.0])).item() == pytest.approx(1.0)
    assert cosine_similarity(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item() == pytest.approx(0.0)
    assert cosine_similarity(Tensor([1.0, 1.0]), Tensor([1.0, 0.0])).item() == pytest.approx(1 / np.sqrt(2))


def test_cosine_similarity_symmetric_scale_invariant():
    rng = np.random.default_rng(5)
    a, b = rng.standard_normal(4), rng.standard_normal(4)
    s1 = cosine_similarity(Tensor(a), Tensor(b)).item()
    s2 = cosine_similarity(Tensor(b), Tensor(a)).item()
    s3 = cosine_similarity(Tensor(2 * a), Tensor(b)).item()
    assert abs(s1 - s2) <= 1e-12
    assert abs(s1 - s3) <= 1e-12
    assert -1.0 <= s1 <= 1.0


def test_cosine_similarity_zero_norm():
    with pytest.raises(DegenerateInputError):
        cosine_similarity(Tensor([0.0, 0.0]), Tensor([1.0, 0.0]))


def test_backward_sum_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_square():
    x = Tensor([3.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [6.0])


def test_backward_rejects_non_scalar():
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        (x * x).backward()


def test_backward_composite_graph_matches_finite_differences():
    rng = np.random.default_rng(6)
    x = Tensor(rng.standard_normal((3, 3)))
    w = Tensor(rng.standard_normal((3, 2)))

    def f():
        h = (x @ w).tanh()
        return (h.sigmoid() * h.exp()).mean() + logsumexp_rows(x).sum()

    assert grad_check(f, [x, w], h=1e-5) < 1e-5


def test_backward_accumulates_until_reset():
    x = Tensor([2.0], requires_grad=True)
    x.sum().backward()
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0])  # two passes accumulate
    x.zero_grad()
    assert x.grad is None


def test_shared_parameter_accumulates_across_terms():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = x.sum() + (x * x).sum()
    loss.backward()
    np.testing.assert_allclose(x.grad, [3.0, 5.0])


def test_grad_check_linear_is_exact():
    x = Tensor(np.random.default_rng(7).standard_normal(4))
    assert grad_check(lambda: x.sum(), x) < 1e-10


def test_logsumexp_rows_matches_naive():
    rng = np.random.default_rng(8)
    s = rng.standard_normal((4, 5)) * 3
    out = logsumexp_rows(Tensor(s)).values
    np.testing.assert_allclose(out, np.log(np.exp(s).sum(axis=1)), rtol=1e-14)


def test_concat_round_trip_and_gradient():
    rng = np.random.default_rng(9)
    parts = [Tensor(rng.standard_normal((3, w))) for w in (2, 4, 1)]
    out = concat(parts, axis=1)
    assert out.shape == (3, 7)
    np.testing.assert_array_equal(out.values[:, 2:6], parts[1].values)
    err = grad_check(lambda: (concat(parts, axis=1) * concat(parts, axis=1)).sum(), parts)
    assert err < 1e-6


def test_broadcast_gradients():
    rng = np.random.default_rng(10)
    a = Tensor(rng.standard_normal((3, 4)))
    b = Tensor(rng.standard_normal((1, 4)))
    c = Tensor(rng.standard_normal(()))
    assert grad_check(lambda: ((a + b) * c).sum(), [a, b, c]) < 1e-6


def test_forward_outputs_finite_on_finite_inputs():
    rng = np.random.default_rng(11)
    x = Tensor(rng.uniform(-10, 10, size=(5, 5)))
    for out in (x.sigmoid(), x.tanh(), x.softplus(), (x * x).sqrt(), x.exp()):
        assert np.all(np.isfinite(out.values))


def test_primitive_gradients_on_gaussian_inputs():
    rng = np.random.default_rng(12)
    for _ in range(5):
        x = Tensor(rng.standard_normal((2, 3)))
        y = Tensor(rng.standard_normal((2, 3)))
        assert grad_check(lambda: (x * y - x / (y * y + 3.0)).sigmoid().sum(), [x, y]) < 1e-5


def test_sgd_descends_quadratic():
    p = Parameter("w", np.array([5.0, -3.0]))
    opt = SGD([p], lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        loss = (p.tensor * p.tensor).sum()
        loss.backward()
        opt.step()
    assert np.abs(p.values).max() < 1e-6


def test_adam_descends_quadratic():
    p = Parameter("w", np.array([5.0, -3.0]))
    opt = Adam([p], lr=0.1)
    target = Tensor([1.0, 2.0])
    for _ in range(500):
        opt.zero_grad()
        diff = p.tensor - target
        (diff * diff).sum().backward()
        opt.step()
    np.testing.assert_allclose(p.values, [1.0, 2.0], atol=1e-3)


def test_zero_grads():
    p = Parameter("w", np.ones(2))
    p.tensor.sum().backward()
    assert p.grad is not None
    zero_grads([p])
    assert p.grad is None
