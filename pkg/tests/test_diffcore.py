import numpy as np
import pytest

from imda import diffcore as dc


def mlp_nll_graph(rng, n=4, din=3, hidden=5, classes=2, with_dropout=False):
    """Random 2-layer net with NLL, plus a small linear term in every
    parameter so no gradient coordinate sits at the central-difference
    noise floor (the probe computes f to ~1e-16, so coordinates whose true
    gradient is ~1e-6 would be dominated by roundoff, not by backward)."""
    x = dc.const(rng.standard_normal((n, din)))
    w1 = dc.param(rng.standard_normal((din, hidden)))
    b1 = dc.param(rng.standard_normal(hidden))
    w2 = dc.param(rng.standard_normal((hidden, classes)))
    b2 = dc.param(rng.standard_normal(classes))
    h = dc.relu(dc.affine(x, w1, b1))
    if with_dropout:
        h = dc.dropout(h, 0.3)
    out = dc.log_softmax(dc.affine(h, w2, b2))
    onehot = np.zeros((n, classes))
    onehot[np.arange(n), rng.integers(0, classes, n)] = 1.0
    root = dc.masked_mean(out, -onehot)
    for p in (w1, b1, w2, b2):
        root = dc.add(root, dc.scale(dc.mean(p), 0.05))
    return root


class TestForward:
    def test_affine_identity(self):
        out = dc.affine(dc.const([[2.0, 3.0]]), dc.param(np.eye(2)), dc.param(np.zeros(2)))
        assert np.array_equal(dc.forward(out), [[2.0, 3.0]])

    def test_relu_definition(self):
        assert np.array_equal(dc.forward(dc.relu(dc.const([[-1.0, 2.0]]))), [[0.0, 2.0]])

    def test_log_softmax_symmetry(self):
        out = dc.forward(dc.log_softmax(dc.const([[0.0, 0.0]])))
        assert np.allclose(out, -np.log(2.0), atol=1e-15)

    def test_input_feed_and_shape_check(self):
        x = dc.input_node("x", (2, 3))
        root = dc.relu(x)
        with pytest.raises(dc.GraphShapeError, match="x"):
            dc.forward(root, {"x": np.zeros((3, 2))})
        dc.forward(root, {"x": np.zeros((2, 3))})

    def test_shape_mismatch_names_node(self):
        bad = dc.affine(dc.const(np.zeros((2, 3))), dc.param(np.zeros((4, 2))),
                        dc.param(np.zeros(2)), name="layer0")
        with pytest.raises(dc.GraphShapeError, match="layer0"):
            dc.forward(bad)

    def test_non_finite_rejected(self):
        with pytest.raises(dc.GraphShapeError):
            dc.const([[np.inf]])


class TestBackward:
    def test_mean_relu_gradient(self):
        x = dc.param([[-1.0, 2.0]])
        root = dc.mean(dc.relu(x))
        dc.forward(root)
        grads = dc.backward(root)
        assert np.array_equal(grads[x], [[0.0, 0.5]])

    def test_backward_before_forward_errors(self):
        root = dc.mean(dc.param([[1.0]]))
        with pytest.raises(dc.BackwardBeforeForwardError):
            dc.backward(root)

    def test_reversal_negates_plain_gradient(self):
        rng = np.random.default_rng(7)
        vals = rng.standard_normal((3, 4))
        p1, p2 = dc.param(vals), dc.param(vals)
        plain = dc.mean(dc.relu(p1))
        reversed_ = dc.mean(dc.relu(dc.neg_grad(p2, lam=1.0)))
        dc.forward(plain), dc.forward(reversed_)
        g1 = dc.backward(plain)[p1]
        g2 = dc.backward(reversed_)[p2]
        assert np.array_equal(g2, -g1)

    def test_reversal_forward_is_identity(self):
        rng = np.random.default_rng(8)
        vals = rng.standard_normal((5, 3))
        assert np.array_equal(dc.forward(dc.neg_grad(dc.const(vals), lam=2.5)), vals)

    def test_reversal_scales_by_lambda(self):
        p = dc.param([[1.0, -2.0, 3.0]])
        root = dc.mean(dc.neg_grad(p, lam=2.0))
        dc.forward(root)
        g = dc.backward(root)[p]
        assert np.allclose(g, -2.0 / 3.0 * np.ones((1, 3)))

    def test_shared_subgraph_accumulates(self):
        # y = mean(h + h) must give twice the gradient of mean(h)
        p = dc.param([[1.0, 2.0]])
        h = dc.relu(p)
        root = dc.mean(dc.add(h, h))
        dc.forward(root)
        g = dc.backward(root)[p]
        assert np.array_equal(g, [[1.0, 1.0]])

    def test_random_two_layer_matches_finite_difference(self):
        worst = 0.0
        for seed in range(20):
            root = mlp_nll_graph(np.random.default_rng(seed))
            worst = max(worst, dc.finite_diff_check(root, step=1e-6))
        assert worst < 1e-5


class TestFiniteDiffCheck:
    def test_linear_scalar_is_exact(self):
        p = dc.param([[1.0, 2.0, 3.0]])
        root = dc.mean(dc.scale(p, 4.0))
        assert dc.finite_diff_check(root) < 1e-9

    def test_quadratic_with_coarse_step(self):
        rng = np.random.default_rng(3)
        p = dc.param(rng.standard_normal((2, 3)))
        root = dc.mean(dc.square(p))
        assert dc.finite_diff_check(root, step=1e-5) < 1e-7

    def test_three_layer_mlp_with_nll(self):
        rng = np.random.default_rng(11)
        x = dc.const(rng.standard_normal((5, 4)))
        sizes = [(4, 8), (8, 6), (6, 3)]
        h = x
        for i, (fi, fo) in enumerate(sizes):
            h = dc.affine(h, dc.param(rng.standard_normal((fi, fo)) * 0.7),
                          dc.param(rng.standard_normal(fo) * 0.1))
            if i < len(sizes) - 1:
                h = dc.relu(h)
        out = dc.log_softmax(h)
        onehot = np.zeros((5, 3))
        onehot[np.arange(5), rng.integers(0, 3, 5)] = 1.0
        root = dc.masked_mean(out, -onehot)
        assert dc.finite_diff_check(root) < 1e-5

    def test_non_scalar_output_errors(self):
        p = dc.param([[1.0, 2.0]])
        root = dc.relu(p)
        with pytest.raises(dc.NonScalarOutputError):
            dc.finite_diff_check(root)

    def test_dropout_mask_frozen_for_probes(self):
        rng = np.random.default_rng(5)
        root = mlp_nll_graph(rng, with_dropout=True)
        # first forward draws the mask, probes reuse it
        dc.forward(root, rng=np.random.default_rng(99))
        assert dc.finite_diff_check(root) < 1e-5


class TestAllOpKinds:
    def test_every_differentiable_kind_against_central_differences(self):
        worst = 0.0
        for seed in range(30):
            rng = np.random.default_rng(seed)
            x = dc.param(rng.standard_normal((3, 4)))
            w = dc.param(rng.standard_normal((4, 4)) * 0.5)
            b = dc.param(rng.standard_normal(4) * 0.2)
            h = dc.affine(x, w, b)
            h = dc.relu(h)
            h = dc.mask(h, rng.integers(0, 2, (3, 4)).astype(float))
            h = dc.add(h, dc.matmul(x, dc.transpose(dc.scale(w, 0.5))))
            h = dc.square(h)
            h = dc.log_softmax(h)
            part = dc.masked_mean(h, rng.standard_normal((3, 4)))
            root = dc.add(dc.mean(h), dc.scale(part, 0.3))
            worst = max(worst, dc.finite_diff_check(root))
        assert worst < 1e-5


class TestParameterVector:
    def test_flatten_unflatten_identity(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            arrays = [(f"w{i}", rng.standard_normal((rng.integers(1, 5), rng.integers(1, 5))))
                      for i in range(3)]
            arrays.append(("b", rng.standard_normal(4)))
            vec = dc.ParameterVector.from_arrays(arrays)
            back = vec.unflatten()
            for name, arr in arrays:
                assert np.array_equal(back[name], arr)

    def test_views_alias_flat_buffer(self):
        vec = dc.ParameterVector.from_arrays([("w", np.ones((2, 2)))])
        vec.values[0] = 5.0
        assert vec.view("w")[0, 0] == 5.0

    def test_sq_norm_non_negative(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            vec = dc.ParameterVector.from_arrays([("w", rng.standard_normal((3, 3)))])
            assert vec.sq_norm() >= 0.0

    def test_replaced_checks_length(self):
        vec = dc.ParameterVector.from_arrays([("w", np.ones((2, 2)))])
        with pytest.raises(dc.GraphShapeError):
            vec.replaced(np.zeros(3))
