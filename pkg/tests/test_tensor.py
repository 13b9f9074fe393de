import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatt.errors import TensorMismatchError
from flatt.tensor import (
    Tensor, TensorType, contract, linear_combine, random_tensor, tensor_product,
)

AT = (0.5, -0.25)


def vec(c, at=AT):
    return Tensor.vector(c, at)


def test_tensor_product_examples():
    t = tensor_product(vec([1, 0]), Tensor.covector([1, 0], AT))
    assert t.ttype == TensorType(1, 1)
    assert t.components.tolist() == [[1, 0], [0, 0]]
    assert tensor_product(Tensor.scalar(3, AT), vec([0, 2])).components.tolist() == [0, 6]
    outer = tensor_product(vec([1, 2]), vec([3, 4]))
    assert outer.ttype == TensorType(2, 0)
    assert outer.components.tolist() == [[3, 4], [6, 8]]


def test_tensor_product_keeps_variance_blocks():
    a = Tensor.of_type(1, 1, np.arange(4.0).reshape(2, 2), AT)
    b = Tensor.of_type(1, 1, np.arange(4.0, 8.0).reshape(2, 2), AT)
    t = tensor_product(a, b)
    assert t.ttype == TensorType(2, 2)
    # components ordered (i1, i2, j1, j2)
    want = np.einsum("ac,bd->abcd", a.components, b.components)
    np.testing.assert_array_equal(t.components, want)


def test_tensor_product_mismatches():
    with pytest.raises(TensorMismatchError):
        tensor_product(vec([1, 0]), vec([1, 0], at=(0.0, 0.0)))
    with pytest.raises(TensorMismatchError):
        tensor_product(vec([1, 0]), Tensor.vector([1, 0], AT, frame_tag="adapted"))


def test_contract_examples():
    assert contract(Tensor.of_type(1, 1, np.eye(3), (0, 0, 0)), 1, 1).value() == 3.0
    assert contract(Tensor.of_type(1, 1, [[1, 2], [3, 4]], AT), 1, 1).value() == 5.0


def test_contract_brute_force():
    rng = np.random.default_rng(0)
    T = random_tensor(rng, 2, 1, (0.0, 0.0, 0.0))
    got = contract(T, 2, 1).components
    want = [sum(T.components[i, k, k] for k in range(3)) for i in range(3)]
    np.testing.assert_allclose(got, want, atol=1e-15)


def test_contract_slot_validation():
    T = Tensor.of_type(1, 1, np.eye(2), AT)
    for up, dn in ((0, 1), (2, 1), (1, 2)):
        with pytest.raises(TensorMismatchError):
            contract(T, up, dn)
    with pytest.raises(TensorMismatchError):
        contract(vec([1, 0]), 1, 1)


def test_linear_combine_examples():
    assert linear_combine(1, vec([1, 0]), 1, vec([0, 1])).components.tolist() == [1, 1]
    assert linear_combine(0, vec([1, 5]), 0, vec([2, 1])).components.tolist() == [0, 0]
    assert linear_combine(2, vec([1, 2]), -1, vec([3, 4])).components.tolist() == [-1, 0]
    with pytest.raises(TensorMismatchError):
        linear_combine(1, vec([1, 0]), 1, Tensor.covector([1, 0], AT))


def test_dual_pairing_is_kronecker():
    n = 3
    at = (0.0,) * n
    for i in range(n):
        for j in range(n):
            e_i = Tensor.covector(np.eye(n)[i], at)
            e_j = Tensor.vector(np.eye(n)[j], at)
            assert contract(tensor_product(e_i, e_j), 1, 1).value() == float(i == j)


def test_invariants_enforced():
    with pytest.raises(TensorMismatchError):
        Tensor(TensorType(1, 1), 2, np.zeros(3), AT)
    with pytest.raises(ValueError):
        Tensor.vector([np.nan, 0], AT)
    with pytest.raises(ValueError):
        TensorType(-1, 0)
    t = vec([1, 2])
    with pytest.raises(ValueError):
        t.components[0] = 5.0


def test_json_round_trip():
    rng = np.random.default_rng(5)
    t = random_tensor(rng, 1, 2, AT)
    data = json.loads(t.to_json())
    assert set(data) == {"p", "q", "n", "at", "frame", "components"}
    assert len(data["components"]) == 8
    back = Tensor.from_json(t.to_json())
    assert back.ttype == t.ttype and back.at == t.at
    np.testing.assert_array_equal(back.components, t.components)


types = st.tuples(st.integers(0, 2), st.integers(0, 2))


@settings(max_examples=60, deadline=None)
@given(types, types, st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_tensor_product_is_bilinear(ta, tc, lam, mu, seed):
    rng = np.random.default_rng(seed)
    a, b = random_tensor(rng, *ta, AT), random_tensor(rng, *ta, AT)
    c = random_tensor(rng, *tc, AT)
    left = tensor_product(linear_combine(lam, a, mu, b), c)
    right = linear_combine(lam, tensor_product(a, c), mu, tensor_product(b, c))
    np.testing.assert_allclose(left.components, right.components, atol=1e-12)


def test_random_tensor_range_and_determinism():
    a = random_tensor(np.random.default_rng(9), 2, 2, AT)
    b = random_tensor(np.random.default_rng(9), 2, 2, AT)
    np.testing.assert_array_equal(a.components, b.components)
    assert np.all(np.abs(a.components) <= 1.0)
