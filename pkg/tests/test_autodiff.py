import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kgalign.autodiff import GroupMap, SparseMatrix, Tape, grad_check
from kgalign.errors import NumericalError, ShapeError, StructuralError


def tape64():
    return Tape(np.float64)


# -- SparseMatrix ----------------------------------------------------------

def test_sparse_rejects_duplicates():
    with pytest.raises(StructuralError):
        SparseMatrix(2, 2, [0, 0], [1, 1], [1.0, 2.0])


def test_sparse_rejects_out_of_range():
    with pytest.raises(StructuralError):
        SparseMatrix(2, 2, [3], [0], [1.0])


def test_sparse_rejects_nonfinite():
    with pytest.raises(StructuralError):
        SparseMatrix(2, 2, [0], [0], [np.inf])


def test_sparse_dense_roundtrip(rng):
    dense = (rng.random((6, 4)) < 0.4) * rng.normal(size=(6, 4))
    sp = SparseMatrix.from_dense(dense)
    np.testing.assert_array_equal(sp.to_dense(), dense)


def test_sparse_dump_coo(tmp_path):
    sp = SparseMatrix(2, 3, [0, 1], [2, 0], [1.5, -2.0])
    path = tmp_path / "m.coo"
    sp.dump_coo(path)
    lines = path.read_text().splitlines()
    assert lines == ["0 2 1.5", "1 0 -2.0"]


# -- forward semantics -----------------------------------------------------

def test_spmm_identity(rng):
    t = tape64()
    x = t.var(rng.normal(size=(5, 3)))
    out = t.spmm(SparseMatrix.identity(5), x)
    np.testing.assert_array_equal(out.value, x.value)


def test_spmm_path_graph_row_sums():
    # unnormalized path adjacency times a ones-vector gives row sums
    dense = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    t = tape64()
    ones = t.var(np.ones((3, 1)))
    out = t.spmm(SparseMatrix.from_dense(dense), ones)
    np.testing.assert_allclose(out.value[:, 0], dense.sum(axis=1))


def test_spmm_matches_dense_matmul(rng):
    for _ in range(30):
        dense = (rng.random((20, 20)) < 0.2) * rng.normal(size=(20, 20))
        x = rng.normal(size=(20, 7))
        t = tape64()
        out = t.spmm(SparseMatrix.from_dense(dense), t.var(x))
        np.testing.assert_allclose(out.value, dense @ x, atol=1e-12)


def test_spmm_shape_error():
    t = tape64()
    with pytest.raises(ShapeError):
        t.spmm(SparseMatrix.identity(3), t.var(np.zeros((4, 2))))


def test_relu_and_sigmoid_pointwise():
    t = tape64()
    out = t.relu(t.var(np.array([[-2.0, 3.0]])))
    np.testing.assert_array_equal(out.value, [[0.0, 3.0]])
    sig = t.sigmoid(t.var(np.array([[0.0]])))
    assert sig.value[0, 0] == 0.5


def test_sigmoid_saturation_is_stable():
    t = tape64()
    out = t.sigmoid(t.var(np.array([[-800.0, 800.0]])))
    assert np.all(np.isfinite(out.value))
    np.testing.assert_allclose(out.value, [[0.0, 1.0]], atol=1e-300)


def test_l1_rowdist_identity_rows(rng):
    x = rng.normal(size=(4, 6))
    t = tape64()
    out = t.l1_rowdist(t.var(x), [0, 1, 2, 3], [0, 1, 2, 3])
    np.testing.assert_array_equal(out.value, np.zeros((4, 1)))


def test_l1_rowdist_values(rng):
    x = rng.normal(size=(5, 3))
    t = tape64()
    out = t.l1_rowdist(t.var(x), [0, 2], [1, 4])
    expect = [np.abs(x[0] - x[1]).sum(), np.abs(x[2] - x[4]).sum()]
    np.testing.assert_allclose(out.value[:, 0], expect)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-10, 10)))
def test_l1_metric_axioms(x):
    t = tape64()
    node = t.var(x)
    d01 = t.l1_rowdist(node, [0], [1]).value[0, 0]
    d10 = t.l1_rowdist(node, [1], [0]).value[0, 0]
    d02 = t.l1_rowdist(node, [0], [2]).value[0, 0]
    d12 = t.l1_rowdist(node, [1], [2]).value[0, 0]
    assert d01 >= 0
    assert d01 == d10
    assert d02 <= d01 + d12 + 1e-9


def test_groupmap_mean_and_sum(rng):
    x = rng.normal(size=(5, 3))
    gm = GroupMap([[0, 2], [1], [3, 4]], n_rows=5)
    t = tape64()
    node = t.var(x)
    mean = t.mean_rows(node, gm)
    total = t.sum_rows_by_group(node, gm)
    np.testing.assert_allclose(mean.value[0], (x[0] + x[2]) / 2)
    np.testing.assert_allclose(mean.value[1], x[1])
    np.testing.assert_allclose(total.value[2], x[3] + x[4])


def test_groupmap_empty_group_sum_is_zero_mean_is_error(rng):
    x = rng.normal(size=(3, 2))
    gm = GroupMap([[0, 1], []], n_rows=3)
    t = tape64()
    node = t.var(x)
    total = t.sum_rows_by_group(node, gm)
    np.testing.assert_array_equal(total.value[1], [0.0, 0.0])
    with pytest.raises(StructuralError):
        t.mean_rows(node, gm)


def test_concat_and_gather(rng):
    a = rng.normal(size=(3, 2))
    b = rng.normal(size=(3, 4))
    t = tape64()
    cat = t.concat_cols(t.var(a), t.var(b))
    assert cat.shape == (3, 6)
    np.testing.assert_array_equal(cat.value[:, :2], a)
    picked = t.gather_rows(cat, [2, 0, 0])
    np.testing.assert_array_equal(picked.value[1], cat.value[0])


def test_forward_replay_is_bit_identical(rng):
    x = rng.normal(size=(4, 4))
    w = rng.normal(size=(4, 2))

    def build():
        t = tape64()
        out = t.relu(t.matmul(t.var(x), t.var(w)))
        return out.value

    a, b = build(), build()
    np.testing.assert_array_equal(a, b)


def test_float32_mode():
    t = Tape(np.float32)
    out = t.add(t.var(np.ones((2, 2))), t.var(np.ones((2, 2))))
    assert out.value.dtype == np.float32


# -- gradients -------------------------------------------------------------

def test_grad_quadratic_form_closed_form(rng):
    m = rng.normal(size=(4, 4))
    x = rng.normal(size=(4, 1))

    def f(t, nodes):
        (xn,) = nodes
        mn = t.const(m)
        return t.sum_all(t.mul(xn, t.matmul(mn, xn)))

    t = tape64()
    xn = t.var(x)
    loss = f(t, [xn])
    t.backward(loss)
    np.testing.assert_allclose(xn.grad, (m + m.T) @ x, rtol=1e-12)
    report = grad_check(f, [x], eps=1e-6, tol=1e-7)
    assert report.passed, report


def test_grad_constant_function(rng):
    def f(t, nodes):
        return t.sum_all(t.const(np.ones((2, 2))))

    report = grad_check(f, [np.ones((3, 2))], eps=1e-6, tol=1e-10)
    assert report.passed
    assert report.max_rel_error == 0.0


def test_grad_spmm_small(rng):
    dense = (rng.random((5, 5)) < 0.5) * rng.normal(size=(5, 5))
    sparse = SparseMatrix.from_dense(dense)
    target = rng.normal(size=(5, 4))

    def f(t, nodes):
        (b,) = nodes
        diff = t.sub(t.spmm(sparse, b), t.const(target))
        return t.sum_all(t.mul(diff, diff))

    report = grad_check(f, [rng.normal(size=(5, 4))], eps=1e-6, tol=1e-6)
    assert report.passed, report


def test_grad_every_primitive_combined(rng):
    """One expression touching each primitive op, against central differences."""
    gm = GroupMap([[0, 1], [2], [3, 4, 5]], n_rows=6)
    idx_left = np.array([0, 1, 2])
    idx_right = np.array([3, 4, 5])
    sparse = SparseMatrix.from_dense((rng.random((6, 6)) < 0.5) * rng.normal(size=(6, 6)))

    def f(t, nodes):
        x, w, row = nodes
        h = t.relu(t.matmul(t.spmm(sparse, x), w))
        h = t.sigmoid(t.add_row(h, row))
        h = t.mul(h, t.scalar_minus(1.0, h))
        h = t.add(h, x)
        pooled = t.concat_cols(t.mean_rows(h, gm), t.sum_rows_by_group(h, gm))
        dist = t.l1_rowdist(h, idx_left, idx_right)
        gathered = t.gather_rows(dist, [0, 0, 1, 2])
        return t.add(
            t.sum_all(t.mul_scalar(pooled, 0.5)),
            t.sum_all(t.add_scalar(gathered, 0.25)),
        )

    inputs = [rng.normal(size=(6, 3)), rng.normal(size=(3, 3)), rng.normal(size=(1, 3))]
    report = grad_check(f, inputs, eps=1e-6, tol=1e-6)
    assert report.passed, report


def test_relu_subgradient_zero_at_kink():
    t = tape64()
    x = t.var(np.array([[0.0, -1.0, 2.0]]))
    loss = t.sum_all(t.relu(x))
    t.backward(loss)
    np.testing.assert_array_equal(x.grad, [[0.0, 0.0, 1.0]])


def test_l1_subgradient_zero_at_equal_coordinates():
    t = tape64()
    x = t.var(np.array([[1.0, 2.0], [1.0, 5.0]]))
    loss = t.sum_all(t.l1_rowdist(x, [0], [1]))
    t.backward(loss)
    # first coordinate identical: subgradient 0 there
    np.testing.assert_array_equal(x.grad, [[0.0, -1.0], [0.0, 1.0]])


def test_gradient_accumulates_over_reuse(rng):
    t = tape64()
    x = t.var(np.array([[2.0]]))
    loss = t.sum_all(t.mul(x, x))  # d(x^2)/dx = 2x
    t.backward(loss)
    np.testing.assert_allclose(x.grad, [[4.0]])


def test_first_nonfinite_names_the_op():
    t = tape64()
    x = t.var(np.array([[1e308]]))
    with np.errstate(over="ignore"):
        bad = t.mul(x, x, name="overflowing_square")
        t.sum_all(bad)
    with pytest.raises(NumericalError, match="overflowing_square"):
        t.check_finite()


def test_backward_requires_scalar(rng):
    t = tape64()
    x = t.var(rng.normal(size=(2, 2)))
    with pytest.raises(ShapeError):
        t.backward(x)
