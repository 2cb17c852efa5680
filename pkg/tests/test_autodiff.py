import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from videoqa import autodiff as ad
from videoqa.autodiff import Tape, Tensor
from videoqa.errors import ContractError, DimensionError


def grad_tensor(values):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


# ---------------------------------------------------------------------------
# forward oracles


def test_affine_identity():
    w = Tensor(np.eye(2))
    out = ad.affine(w, Tensor([3.0, -1.0]), Tensor([0.0, 0.0]))
    np.testing.assert_array_equal(out.values, [3.0, -1.0])


def test_affine_zero_map():
    w = Tensor(np.zeros((2, 3)))
    out = ad.affine(w, Tensor([9.0, 8.0, 7.0]), Tensor([5.0, 7.0]))
    np.testing.assert_array_equal(out.values, [5.0, 7.0])


def test_affine_hand_oracle():
    # [[1,2],[3,4]] @ (1,1) + (0,1) worked by hand: (1*1+2*1, 3*1+4*1+1)
    out = ad.affine(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([1.0, 1.0]), Tensor([0.0, 1.0]))
    np.testing.assert_array_equal(out.values, [3.0, 8.0])


def test_affine_shape_mismatch_names_operands():
    with pytest.raises(DimensionError, match=r"affine.*\(2, 2\).*\(3,\)"):
        ad.affine(Tensor(np.eye(2)), Tensor([1.0, 2.0, 3.0]), Tensor([0.0, 0.0]))


def test_tanh_zero_and_saturation():
    np.testing.assert_array_equal(ad.tanh_map(Tensor([0.0, 0.0])).values, [0.0, 0.0])
    assert abs(ad.tanh_map(Tensor([20.0])).values[0] - 1.0) < 1e-9


def test_tanh_reference_value():
    # independent evaluation through exp: (e^x - e^-x) / (e^x + e^-x)
    x = 0.5
    ref = (math.exp(x) - math.exp(-x)) / (math.exp(x) + math.exp(-x))
    assert abs(ad.tanh_map(Tensor([x])).values[0] - ref) < 1e-9
    assert abs(ref - 0.462117157) < 1e-9


def test_softmax_symmetry_and_shift():
    np.testing.assert_allclose(ad.softmax_vec(Tensor([0.0, 0.0])).values, [0.5, 0.5], rtol=0, atol=0)
    for c in (-7.0, 0.0, 123.456):
        np.testing.assert_allclose(
            ad.softmax_vec(Tensor([c, c, c, c])).values, [0.25] * 4, rtol=0, atol=1e-15)


def test_softmax_closed_form():
    out = ad.softmax_vec(Tensor([math.log(1), math.log(2), math.log(3)]))
    np.testing.assert_allclose(out.values, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)


def test_softmax_empty_rejected():
    with pytest.raises(DimensionError):
        ad.softmax_vec(Tensor(np.zeros(0)))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.floats(-30, 30))
@settings(max_examples=100, deadline=None)
def test_softmax_contract_properties(vals, shift):
    y = ad.softmax_vec(Tensor(vals)).values
    assert np.all(y > 0) and np.all(y <= 1)
    assert abs(y.sum() - 1.0) <= 1e-12
    y2 = ad.softmax_vec(Tensor(np.asarray(vals) + shift)).values
    np.testing.assert_allclose(y, y2, atol=1e-12)


def test_hadamard_cases():
    a = Tensor([2.0, 3.0])
    np.testing.assert_array_equal(ad.hadamard(a, Tensor([1.0, 1.0])).values, a.values)
    np.testing.assert_array_equal(ad.hadamard(a, Tensor([0.0, 0.0])).values, [0.0, 0.0])
    np.testing.assert_array_equal(ad.hadamard(a, Tensor([4.0, -1.0])).values, [8.0, -3.0])
    with pytest.raises(DimensionError, match="hadamard"):
        ad.hadamard(a, Tensor([1.0, 2.0, 3.0]))


def test_mean_rows_cases():
    np.testing.assert_array_equal(ad.mean_rows(Tensor([[4.0, 5.0]])).values, [4.0, 5.0])
    np.testing.assert_array_equal(
        ad.mean_rows(Tensor([[4.0, 5.0], [4.0, 5.0]])).values, [4.0, 5.0])
    np.testing.assert_array_equal(
        ad.mean_rows(Tensor([[1.0, 3.0], [3.0, 5.0]])).values, [2.0, 4.0])
    with pytest.raises(DimensionError):
        ad.mean_rows(Tensor(np.zeros((0, 3))))


def test_concat_cases():
    np.testing.assert_array_equal(ad.concat(Tensor([1.0]), Tensor([2.0])).values, [1.0, 2.0])
    np.testing.assert_array_equal(ad.concat(Tensor(np.zeros(0)), Tensor([5.0])).values, [5.0])
    np.testing.assert_array_equal(
        ad.concat(Tensor([1.0, 2.0]), Tensor([3.0])).values, [1.0, 2.0, 3.0])


def test_embed_lookup_cases():
    table = Tensor(np.arange(10, dtype=np.float64).reshape(5, 2))
    np.testing.assert_array_equal(ad.embed_lookup(table, 0).values, [0.0, 1.0])
    rows = np.repeat(np.arange(5, dtype=np.float64)[:, None], 2, axis=1)
    np.testing.assert_array_equal(ad.embed_lookup(Tensor(rows), 3).values, [3.0, 3.0])
    with pytest.raises(IndexError, match="token id 5"):
        ad.embed_lookup(table, 5)


def test_embed_lookup_gradient_accumulates():
    table = grad_tensor(np.ones((4, 2)))
    with Tape() as tape:
        a = ad.embed_lookup(table, 1)
        b = ad.embed_lookup(table, 1)
        total = ad.sum_all(ad.add(a, b))
    tape.backward(total)
    np.testing.assert_array_equal(table.grad[1], [2.0, 2.0])
    np.testing.assert_array_equal(table.grad[0], [0.0, 0.0])


def test_cross_entropy_cases():
    out = ad.cross_entropy(Tensor([1.0, 1.0, 1.0, 1.0]), 2)
    assert abs(out.values[0] - math.log(4)) < 1e-12
    out = ad.cross_entropy(Tensor([30.0, 0.0]), 0)
    assert abs(out.values[0]) < 1e-9
    # closed form: -ln(e / (e + 1))
    out = ad.cross_entropy(Tensor([1.0, 0.0]), 0)
    assert abs(out.values[0] - (-math.log(math.e / (math.e + 1)))) < 1e-12
    with pytest.raises(IndexError):
        ad.cross_entropy(Tensor([1.0, 0.0]), 2)
    with pytest.raises(DimensionError):
        ad.cross_entropy(Tensor([1.0]), 0)


# ---------------------------------------------------------------------------
# backward semantics


def test_backward_identity():
    x = grad_tensor([7.0])
    with Tape() as tape:
        y = ad.sum_all(x)
    tape.backward(y)
    np.testing.assert_array_equal(x.grad, [1.0])


def test_backward_bilinearity():
    a = grad_tensor([1.0, 2.0, 3.0])
    b = Tensor([4.0, 5.0, 6.0])
    with Tape() as tape:
        t = ad.sum_all(ad.hadamard(a, b))
    tape.backward(t)
    np.testing.assert_array_equal(a.grad, b.values)


def test_backward_requires_scalar_root():
    x = grad_tensor([1.0, 2.0])
    with Tape() as tape:
        y = ad.tanh_map(x)
    with pytest.raises(ContractError, match="shape"):
        tape.backward(y)


def test_backward_twice_forbidden():
    x = grad_tensor([1.0])
    with Tape() as tape:
        y = ad.sum_all(x)
    tape.backward(y)
    with pytest.raises(ContractError, match="already ran"):
        tape.backward(y)


def test_backward_without_tape_rejected():
    y = ad.sum_all(Tensor([1.0]))
    with pytest.raises(ContractError, match="not attached"):
        ad.backward(y)


def test_fanout_accumulation_matches_two_path_construction():
    # shared-tensor form: x feeds two ops
    x = grad_tensor([1.5, -2.0])
    w = Tensor([[0.5, 1.0], [2.0, -1.0]])
    b = Tensor([0.0, 0.0])
    with Tape() as tape:
        shared = ad.add(ad.affine(w, x, b), ad.tanh_map(x))
        loss = ad.sum_all(shared)
    tape.backward(loss)
    fanout_grad = x.grad.copy()

    # split form: two independent copies, one per path
    x1 = grad_tensor([1.5, -2.0])
    x2 = grad_tensor([1.5, -2.0])
    with Tape() as tape:
        loss = ad.sum_all(ad.add(ad.affine(w, x1, b), ad.tanh_map(x2)))
    tape.backward(loss)
    np.testing.assert_allclose(fanout_grad, x1.grad + x2.grad, atol=0)


def test_ops_pure_given_same_inputs():
    rng = np.random.default_rng(0)
    v = rng.normal(size=6)
    first = ad.softmax_vec(ad.tanh_map(Tensor(v))).values
    second = ad.softmax_vec(ad.tanh_map(Tensor(v))).values
    np.testing.assert_array_equal(first, second)


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_op_chains_on_finite_inputs_stay_finite(seed):
    rng = np.random.default_rng(seed)
    x = grad_tensor(rng.normal(0, 5, 4))
    w = Tensor(rng.normal(0, 5, (4, 4)))
    b = Tensor(rng.normal(0, 5, 4))
    with Tape() as tape:
        h = ad.tanh_map(ad.affine(w, x, b))
        h = ad.hadamard(ad.sigmoid_map(h), ad.softmax_vec(h))
        out = ad.cross_entropy(ad.concat(h, ad.tanh_map(x)), int(rng.integers(0, 8)))
    tape.backward(out)
    assert np.isfinite(out.values).all()
    assert np.isfinite(x.grad).all()


def test_inference_mode_has_no_grad_and_empty_tape():
    x = Tensor([1.0, 2.0])
    y = ad.tanh_map(x)
    assert y.grad is None and y.tape is None
    with Tape() as tape:
        z = ad.tanh_map(x)  # no differentiable input: nothing recorded
        assert len(tape) == 0 and z.grad is None


def test_nested_tape_rejected():
    with Tape():
        with pytest.raises(ContractError, match="already active"):
            with Tape():
                pass


# ---------------------------------------------------------------------------
# gradient checks

def _weighted(op, rng_shape, seed):
    rng = np.random.default_rng(seed)
    weights = Tensor(rng.normal(size=rng_shape))
    return lambda t: ad.sum_all(ad.hadamard(op(t), weights))


def test_grad_check_linear_is_exact():
    # power-of-two epsilon and small integers keep every float op exact
    report = ad.grad_check(ad.sum_all, Tensor([1.0, 2.0]), eps=0.5, tol=1e-12)
    assert report.max_rel_error == 0.0 and report.passed


def test_grad_check_cross_entropy_affine_chain():
    rng = np.random.default_rng(3)
    w = Tensor(rng.normal(0, 0.5, (3, 4)))
    b = Tensor(rng.normal(0, 0.5, 3))

    def f(x):
        return ad.cross_entropy(ad.affine(w, x, b), 1)

    report = ad.grad_check(f, Tensor(rng.normal(0, 0.5, 4)), eps=1e-5, tol=1e-6)
    assert report.passed, str(report)


def test_grad_check_detects_nondeterminism():
    calls = [0]

    def flaky(x):
        calls[0] += 1
        return ad.add(ad.sum_all(x), Tensor([float(calls[0])]))

    with pytest.raises(ContractError, match="not deterministic"):
        ad.grad_check(flaky, Tensor([1.0]))


def test_grad_check_requires_scalar_f():
    with pytest.raises(ContractError, match="scalar"):
        ad.grad_check(ad.tanh_map, Tensor([1.0, 2.0]))


CASES = []


def case(name):
    def reg(fn):
        CASES.append(pytest.param(fn, id=name))
        return fn
    return reg


@case("affine_w")
def _affine_w(rng):
    x, b = Tensor(rng.normal(size=3)), Tensor(rng.normal(size=2))
    return (lambda t: ad.affine(t, x, b)), Tensor(rng.normal(size=(2, 3))), (2,)


@case("affine_x")
def _affine_x(rng):
    w, b = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=2))
    return (lambda t: ad.affine(w, t, b)), Tensor(rng.normal(size=3)), (2,)


@case("affine_b")
def _affine_b(rng):
    w, x = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=3))
    return (lambda t: ad.affine(w, x, t)), Tensor(rng.normal(size=2)), (2,)


@case("add")
def _add(rng):
    other = Tensor(rng.normal(size=4))
    return (lambda t: ad.add(t, other)), Tensor(rng.normal(size=4)), (4,)


@case("hadamard")
def _hadamard(rng):
    other = Tensor(rng.normal(size=4))
    return (lambda t: ad.hadamard(t, other)), Tensor(rng.normal(size=4)), (4,)


@case("tanh")
def _tanh(rng):
    return ad.tanh_map, Tensor(rng.normal(size=4)), (4,)


@case("sigmoid")
def _sigmoid(rng):
    return ad.sigmoid_map, Tensor(rng.normal(size=4)), (4,)


@case("softmax")
def _softmax(rng):
    return ad.softmax_vec, Tensor(rng.normal(size=5)), (5,)


@case("mean_rows")
def _mean_rows(rng):
    return ad.mean_rows, Tensor(rng.normal(size=(3, 4))), (4,)


@case("concat")
def _concat(rng):
    other = Tensor(rng.normal(size=2))
    return (lambda t: ad.concat(t, other)), Tensor(rng.normal(size=3)), (5,)


@case("stack_rows")
def _stack_rows(rng):
    r2 = Tensor(rng.normal(size=3))
    return (lambda t: ad.stack_rows([t, r2])), Tensor(rng.normal(size=3)), (2, 3)


@case("vecmat_x")
def _vecmat_x(rng):
    m = Tensor(rng.normal(size=(3, 4)))
    return (lambda t: ad.vecmat(t, m)), Tensor(rng.normal(size=3)), (4,)


@case("vecmat_m")
def _vecmat_m(rng):
    x = Tensor(rng.normal(size=3))
    return (lambda t: ad.vecmat(x, t)), Tensor(rng.normal(size=(3, 4))), (4,)


@case("embed_lookup")
def _embed(rng):
    return (lambda t: ad.embed_lookup(t, 2)), Tensor(rng.normal(size=(4, 3))), (3,)


@case("slice_reshape")
def _slice(rng):
    return (lambda t: ad.slice_reshape(t, 1, (2, 2))), Tensor(rng.normal(size=6)), (2, 2)


@case("sum_all")
def _sum(rng):
    return (lambda t: ad.stack_rows([ad.sum_all(t)])), Tensor(rng.normal(size=(2, 3))), (1, 1)


@case("cross_entropy")
def _ce(rng):
    return (lambda t: ad.stack_rows([ad.cross_entropy(t, 1)])), Tensor(rng.normal(size=4)), (1, 1)


@pytest.mark.parametrize("build", CASES)
def test_every_op_passes_grad_check_on_random_inputs(build):
    # 100 random small inputs per op at tol 1e-6
    for trial in range(100):
        rng = np.random.default_rng(1000 + trial)
        op, x0, out_shape = build(rng)
        weights = Tensor(np.random.default_rng(2000 + trial).normal(size=out_shape))

        def f(t):
            o = op(t)
            w = weights if o.values.ndim == 1 else weights
            prod = ad.hadamard(o, w)
            return ad.sum_all(prod)

        report = ad.grad_check(f, x0, eps=1e-5, tol=1e-6)
        assert report.passed, f"trial {trial}: {report}"
