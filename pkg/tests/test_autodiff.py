import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from famadapt.nn import autodiff as ad
from famadapt.nn.autodiff import Tensor

from _util import check_block

rng = np.random.default_rng(0)


def grad_error(build, *shapes, positive=False):
    """Max relative FD error over every input of ``build(*tensors) -> scalar Tensor``."""
    arrays = [rng.normal(size=s) for s in shapes]
    if positive:
        arrays = [np.abs(a) + 0.5 for a in arrays]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    out.backward()
    worst = 0.0
    for t in tensors:
        def f():
            with ad.no_grad():
                return float(build(*[Tensor(x.data) for x in tensors]).data)
        worst = max(worst, check_block(f, t.data, t.grad, rng))
    return worst


def weighted(x):
    w = np.random.default_rng(1).normal(size=x.shape)
    return ad.sum(ad.mul(x, Tensor(w)))


@pytest.mark.parametrize("name,build,shapes", [
    ("add_broadcast", lambda a, b: weighted(a + b), [(3, 4), (4,)]),
    ("sub", lambda a, b: weighted(a - b), [(2, 3), (2, 1)]),
    ("mul_broadcast", lambda a, b: weighted(a * b), [(3, 4), (1, 4)]),
    ("matmul", lambda a, b: weighted(a @ b), [(3, 4), (4, 5)]),
    ("batched_matmul", lambda a, b: weighted(a @ b), [(2, 3, 4), (2, 4, 2)]),
    ("matmul_vec", lambda a, b: weighted(a @ b), [(3, 4), (4,)]),
    ("transpose", lambda a: weighted(ad.transpose(a, (2, 0, 1))), [(2, 3, 4)]),
    ("swapaxes", lambda a: weighted(ad.swapaxes(a, 0, 2)), [(2, 3, 4)]),
    ("reshape", lambda a: weighted(ad.reshape(a, (6, 2))), [(3, 4)]),
    ("sum_axis", lambda a: weighted(ad.sum(a, axis=1, keepdims=True)), [(3, 4)]),
    ("mean", lambda a: weighted(ad.mean(a, axis=0)), [(3, 4)]),
    ("exp", lambda a: weighted(ad.exp(a)), [(3, 4)]),
    ("gelu", lambda a: weighted(ad.gelu(a)), [(3, 4)]),
    ("softmax", lambda a: weighted(ad.softmax(a, axis=-1)), [(3, 5)]),
    ("layer_norm", lambda x, g, b: weighted(ad.layer_norm(x, g, b)), [(3, 6), (6,), (6,)]),
    ("concat", lambda a, b: weighted(ad.concat([a, b], axis=1)), [(2, 3), (2, 2)]),
    ("neg_pow", lambda a: weighted(-(a ** 2)), [(3, 3)]),
])
def test_op_gradients(name, build, shapes):
    assert grad_error(build, *shapes) < 1e-6


def test_log_gradient():
    assert grad_error(lambda a: weighted(ad.log(a)), (3, 4), positive=True) < 1e-6


def test_relu_gradient_away_from_kink():
    x = Tensor(np.array([-2.0, -0.5, 0.5, 3.0]), requires_grad=True)
    ad.sum(ad.relu(x)).backward()
    np.testing.assert_array_equal(x.grad, [0, 0, 1, 1])


def test_embedding_and_gather_accumulate_repeats():
    w = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    ids = np.array([[1, 1, 4]])
    ad.sum(ad.embedding(w, ids)).backward()
    np.testing.assert_array_equal(w.grad[:, 0], [0, 2, 0, 0, 1])
    a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    ad.sum(ad.gather(a, (np.array([0, 0, 1]), np.array([2, 2, 0])))).backward()
    assert a.grad[0, 2, 0] == 2 and a.grad[1, 0, 0] == 1 and a.grad.sum() == 12


def test_cross_entropy_matches_oracle_and_gradient():
    logits = rng.normal(size=(4, 6))
    targets = np.array([0, 5, 2, 2])
    weights = np.array([True, False, True, True])
    t = Tensor(logits.copy(), requires_grad=True)
    loss = ad.cross_entropy(t, targets, weights)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    expected = -np.mean([logp[i, targets[i]] for i in range(4) if weights[i]])
    assert abs(float(loss.data) - expected) < 1e-12
    loss.backward()
    err = check_block(lambda: float(ad.cross_entropy(Tensor(t.data), targets, weights).data),
                      t.data, t.grad, rng)
    assert err < 1e-7


def test_cross_entropy_rejects_empty_selection():
    with pytest.raises(ValueError):
        ad.cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 1]), np.array([False, False]))


def test_no_grad_builds_no_graph():
    a = Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        out = a * 2.0
    assert not out.requires_grad and out._parents == ()


def test_shared_subexpression_accumulates():
    a = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    b = a * a
    ad.sum(b + b).backward()
    np.testing.assert_allclose(a.grad, 4 * a.data)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 6)),
              elements=st.floats(-30, 30)))
def test_softmax_rows_are_distributions(x):
    p = ad.softmax(Tensor(x), axis=-1).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
