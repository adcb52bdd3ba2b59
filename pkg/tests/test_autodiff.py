"""Finite-difference verification of every autodiff primitive."""

import numpy as np
import pytest

from midflow import autodiff as ad

from oracles import finite_diff_grad, rel_err

TOL = 1e-5


def check_primitive(build, *leaf_shapes, seed=0, tol=TOL, low=-1.0, high=1.0):
    """FD-check gradients of scalar-valued `build(*tensors)` for each leaf."""
    rng = np.random.default_rng(seed)
    leaves = [rng.uniform(low, high, s) for s in leaf_shapes]
    for i in range(len(leaves)):
        ts = [ad.Tensor(x) for x in leaves]
        out = build(*ts)
        ad.backward(out)
        analytic = ts[i].grad

        def f(x, i=i):
            args = [ad.Tensor(x if j == i else leaves[j]) for j in range(len(leaves))]
            return float(build(*args).data)

        numeric = finite_diff_grad(f, leaves[i])
        assert analytic is not None
        assert rel_err(analytic, numeric) < tol, f"leaf {i}: rel err {rel_err(analytic, numeric)}"


def test_add_mul_broadcast_grad():
    check_primitive(
        lambda a, b: ad.mean_all(ad.mul(ad.add(a, b), a)),
        (2, 3, 4, 4),
        (2, 1, 4, 4),
    )


def test_operator_overloads():
    a = ad.Tensor(np.full((2, 2), 3.0))
    out = ad.mean_all((a * 2 - 1.0) / 2 + (-a))
    ad.backward(out)
    assert np.allclose(out.data, (3.0 * 2 - 1) / 2 - 3.0)
    assert np.allclose(a.grad, (2 / 2 - 1) / 4)


def test_absolute_sigmoid_prelu_clip_grads():
    check_primitive(lambda x: ad.mean_all(ad.absolute(x)), (1, 2, 5, 5), seed=1)
    check_primitive(lambda x: ad.mean_all(ad.sigmoid(x)), (1, 2, 5, 5), seed=2)
    check_primitive(
        lambda x, a: ad.mean_all(ad.prelu(x, a)), (2, 3, 4, 4), (3,), seed=3
    )
    # keep values away from the clamp kinks at exactly 0 and 1
    check_primitive(
        lambda x: ad.mean_all(ad.clip01(x)), (1, 2, 5, 5), seed=4, low=-0.8, high=1.8
    )


def test_concat_crop_pad_grads():
    check_primitive(
        lambda a, b: ad.mean_all(ad.mul(ad.concat([a, b], axis=1), 1.5)),
        (2, 2, 3, 3),
        (2, 4, 3, 3),
        seed=5,
    )
    check_primitive(lambda x: ad.mean_all(x[:, :, 1:3, :2]), (1, 2, 4, 4), seed=6)
    check_primitive(lambda x: ad.mean_all(ad.mul(ad.pad_replicate(x, 2), 0.7)), (2, 2, 3, 4), seed=7)


def test_pad_replicate_values():
    x = np.arange(6, dtype=np.float64).reshape(1, 1, 2, 3)
    out = ad.pad_replicate(ad.Tensor(x), 1).data
    assert out.shape == (1, 1, 4, 5)
    assert out[0, 0, 0, 0] == x[0, 0, 0, 0]
    assert out[0, 0, -1, -1] == x[0, 0, -1, -1]
    assert np.array_equal(out[0, 0, 1:3, 1:4], x[0, 0])


@pytest.mark.parametrize(
    "cin,cout,k,stride,pad,hw",
    [(2, 3, 3, 1, 1, 5), (3, 4, 7, 2, 3, 8), (2, 5, 3, 2, 1, 6), (1, 2, 4, 1, 0, 5)],
)
def test_conv2d_grad(cin, cout, k, stride, pad, hw):
    check_primitive(
        lambda x, w, b: ad.mean_all(ad.mul(ad.conv2d(x, w, b, stride, pad), 1.3)),
        (2, cin, hw, hw),
        (cout, cin, k, k),
        (cout,),
        seed=11,
        tol=1e-4,
    )


def test_conv2d_shapes():
    x = ad.Tensor(np.zeros((1, 3, 16, 16)))
    w = ad.Tensor(np.zeros((8, 3, 7, 7)))
    b = ad.Tensor(np.zeros(8))
    assert ad.conv2d(x, w, b, stride=2, padding=3).shape == (1, 8, 8, 8)
    w3 = ad.Tensor(np.zeros((8, 3, 3, 3)))
    assert ad.conv2d(x, w3, b, stride=1, padding=1).shape == (1, 8, 16, 16)


def test_conv_transpose2d_grad_and_shape():
    x = ad.Tensor(np.zeros((1, 3, 5, 4)))
    w = ad.Tensor(np.zeros((3, 6, 4, 4)))
    b = ad.Tensor(np.zeros(6))
    assert ad.conv_transpose2d(x, w, b, stride=2, padding=1).shape == (1, 6, 10, 8)
    check_primitive(
        lambda x, w, b: ad.mean_all(ad.mul(ad.conv_transpose2d(x, w, b), 0.9)),
        (2, 2, 3, 3),
        (2, 3, 4, 4),
        (3,),
        seed=12,
        tol=1e-4,
    )


def test_conv_transpose_matches_manual_upsample():
    # single input pixel spreads the 4x4 kernel (cropped by padding 1)
    x = np.zeros((1, 1, 2, 2))
    x[0, 0, 0, 0] = 1.0
    w = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    out = ad.conv_transpose2d(ad.Tensor(x), ad.Tensor(w), ad.Tensor(np.zeros(1))).data
    assert out.shape == (1, 1, 4, 4)
    assert np.array_equal(out[0, 0, :3, :3], w[0, 0, 1:, 1:])


def test_warp_grad():
    check_primitive(
        lambda s, f: ad.mean_all(ad.mul(ad.warp_bilinear(s, f), 1.1)),
        (1, 2, 5, 5),
        (1, 2, 5, 5),
        seed=13,
        tol=1e-4,
    )


def test_interp_bilinear_grad():
    gy = np.array([[0.3, 0.3], [1.7, 1.7]])
    gx = np.array([[0.2, 1.6], [0.2, 1.6]])
    check_primitive(
        lambda s: ad.mean_all(ad.mul(ad.interp_bilinear(s, gx, gy), 2.0)),
        (2, 3, 4, 4),
        seed=14,
    )


def test_mean_sum_grads():
    check_primitive(lambda x: ad.mean_all(x), (2, 3, 2, 2), seed=15)
    check_primitive(lambda x: ad.mul(ad.sum_all(x), 0.25), (2, 3, 2, 2), seed=16)


def test_backward_accumulates_shared_nodes():
    x = ad.Tensor(np.array([2.0]))
    y = ad.add(ad.mul(x, x), ad.mul(x, 3.0))  # x^2 + 3x -> dy/dx = 2x + 3
    ad.backward(ad.sum_all(y))
    assert np.allclose(x.grad, 7.0)


def test_float32_graph_stays_float32():
    x = ad.Tensor(np.ones((1, 2, 4, 4), dtype=np.float32))
    w = ad.Tensor(np.ones((3, 2, 3, 3), dtype=np.float32))
    b = ad.Tensor(np.zeros(3, dtype=np.float32))
    out = ad.conv2d(x, w, b, padding=1)
    assert out.dtype == np.float32
    ad.backward(ad.mean_all(out))
    assert x.grad.dtype == np.float32
