import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qudit_rsp.core import (
    BasisError,
    DimensionError,
    Operator,
    StateVector,
    apply,
    computational_basis,
    fidelity,
    gram_deviation,
    kron,
    measure_in_basis,
    tensor,
)

SX = Operator([[0, 1], [1, 0]], "X")


def ket(dim, k):
    return StateVector.basis(dim, k)


def test_tensor_is_big_endian():
    assert np.allclose(tensor(ket(2, 0), ket(2, 0)).amps, [1, 0, 0, 0])
    assert np.allclose(tensor(ket(2, 1), ket(2, 0)).amps, [0, 0, 1, 0])
    a, b = 0.6, 0.8j
    assert np.allclose(tensor(StateVector([a, b]), ket(2, 1)).amps, [0, a, 0, b])


def test_apply_identity_and_flip():
    s = StateVector([0.6, 0.8])
    assert np.allclose(apply(Operator.identity(2), s, [0], (2,)).amps, s.amps)
    assert np.allclose(apply(SX, ket(2, 0), [0], (2,)).amps, [0, 1])


def test_apply_on_second_factor_matches_kron():
    rng = np.random.default_rng(1)
    s = StateVector(rng.normal(size=12) + 1j * rng.normal(size=12))
    M = Operator(rng.normal(size=(4, 4)))
    out = apply(M, s, [1], (3, 4))
    assert np.allclose(out.amps, kron(Operator.identity(3), M).matrix @ s.amps)


def test_apply_rejects_mismatched_dims():
    with pytest.raises(DimensionError):
        apply(SX, ket(4, 0), [0], (3,))


def test_state_vector_is_read_only():
    s = ket(3, 1)
    with pytest.raises(ValueError):
        s.amps[0] = 1.0


def test_measure_certain_outcome():
    outs = measure_in_basis(ket(2, 0), 0, (2,), computational_basis(2))
    assert outs[0].probability == pytest.approx(1.0)
    assert outs[1].is_null
    assert np.allclose(outs[1].post_state.amps, 0)


def test_measure_rejects_non_orthonormal_basis():
    with pytest.raises(BasisError):
        measure_in_basis(ket(2, 0), 0, (2,), [ket(2, 0), ket(2, 0)])


def test_measure_rejects_unnormalized_state():
    with pytest.raises(ValueError):
        measure_in_basis(StateVector([1.0, 1.0]), 0, (2,), computational_basis(2))


def test_measure_bell_pair_first_factor():
    bell = StateVector(np.array([1, 0, 0, 1]) / math.sqrt(2))
    outs = measure_in_basis(bell, 0, (2, 2), computational_basis(2))
    assert [o.probability for o in outs] == pytest.approx([0.5, 0.5])
    assert np.allclose(outs[1].post_state.amps, [0, 1])


def test_fidelity_basics():
    s = StateVector([0.6, 0.8j])
    assert fidelity(s, s) == pytest.approx(1.0)
    assert fidelity(ket(2, 0), ket(2, 1)) == 0.0
    assert fidelity(s, StateVector(np.exp(0.7j) * s.amps)) == pytest.approx(1.0)


def test_gram_deviation_examples():
    assert gram_deviation(computational_basis(5)) == 0.0
    assert gram_deviation([ket(2, 0), ket(2, 0)]) == pytest.approx(1.0)


# -- properties ---------------------------------------------------------------

reals = st.floats(-1.0, 1.0, allow_nan=False)


def _vec(parts):
    v = np.array(parts[0::2]) + 1j * np.array(parts[1::2])
    n = np.linalg.norm(v)
    return None if n < 1e-3 else StateVector(v / n)


@st.composite
def states(draw, dim):
    v = _vec(draw(st.lists(reals, min_size=2 * dim, max_size=2 * dim)))
    return v if v is not None else ket(dim, 0)


@st.composite
def unitaries(draw, dim):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return Operator(Q * (np.diag(R) / np.abs(np.diag(R))))


@settings(max_examples=60, deadline=None)
@given(states(3), states(4), unitaries(4))
def test_apply_preserves_norm(u, v, U):
    out = apply(U, tensor(u, v), [1], (3, 4))
    assert out.norm() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(states(6), unitaries(3))
def test_measurement_probabilities_complete(s, U):
    basis = [StateVector(U.matrix[:, k]) for k in range(3)]
    outs = measure_in_basis(s, 1, (2, 3), basis)
    assert math.fsum(o.probability for o in outs) == pytest.approx(1.0, abs=1e-12)
    for o in outs:
        if not o.is_null:
            assert o.post_state.norm() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(states(2), states(3), states(2))
def test_tensor_associative(a, b, c):
    assert np.allclose(tensor(tensor(a, b), c).amps, tensor(a, tensor(b, c)).amps)


@settings(max_examples=60, deadline=None)
@given(states(4), states(4))
def test_fidelity_symmetric_and_bounded(u, v):
    f = fidelity(u, v)
    assert f == pytest.approx(fidelity(v, u), abs=1e-14)
    assert -1e-15 <= f <= 1 + 1e-12


@settings(max_examples=40, deadline=None)
@given(unitaries(4), unitaries(2))
def test_kron_of_unitaries_is_unitary(U, V):
    assert kron(U, V).is_unitary()
