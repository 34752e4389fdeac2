import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qudit_rsp.core import StateVector, apply, computational_basis, gram_deviation, measure_in_basis, tensor
from qudit_rsp.protocols import (
    ChannelSpec,
    SpecError,
    TargetSpec,
    basis_matrix,
    branch_states,
    channel_state,
    correction,
    fallback_state,
    filter_unitary,
    measurement_basis,
    phase_encoding,
    random_channel,
    random_target,
    run_exact,
    run_sampled,
    success_probability,
    tabulated_correction,
    target_state,
    with_ancilla,
)

# Basis vectors written out level by level: entry k is (sign, amplitude index).
# Row j lists the coefficients of |0>, |1>, ... in basis vector j.
BASIS_4 = [
    "+0 +1 +2 +3",
    "-1 +0 -3 +2",
    "-2 +3 +0 -1",
    "-3 -2 +1 +0",
]
BASIS_8 = [
    "+0 +1 +2 +3 +4 +5 +6 +7",
    "-1 +0 -3 +2 -5 +4 +7 -6",
    "-2 +3 +0 -1 -6 -7 +4 +5",
    "-3 -2 +1 +0 -7 +6 -5 +4",
    "-4 +5 +6 +7 +0 -1 -2 -3",
    "-5 -4 +7 -6 +1 +0 +3 -2",
    "-6 -7 -4 +5 +2 -3 +0 +1",
    "-7 +6 -5 -4 +3 +2 -1 +0",
]


def written_basis(rows, amps, phases):
    out = []
    for row in rows:
        v = [int(tok[0] + "1") * amps[int(tok[1:])] * np.exp(1j * phases[k])
             for k, tok in enumerate(row.split())]
        out.append(np.array(v))
    return out


# -- specs ---------------------------------------------------------------------

def test_target_state_examples():
    assert np.allclose(target_state(TargetSpec((1, 0, 0, 0))).amps, [1, 0, 0, 0])
    assert np.allclose(target_state(TargetSpec((0.5,) * 4)).amps, [0.5] * 4)
    s = TargetSpec((0.6, 0.8, 0.0), level=3)
    assert s.dim == 4 and target_state(s).amps[3] == 0


@pytest.mark.parametrize("kwargs, msg", [
    ({"amps": (0.6, 0.6, 0.3, 0.3)}, "sum of squared"),
    ({"amps": (0.5,) * 4, "phases": (0.1, 0, 0, 0)}, "level 0"),
    ({"amps": (0.5,) * 4, "level": 3}, "above level"),
    ({"amps": (1.0,) + (0.0,) * 8}, "level must be"),
])
def test_target_spec_rejects(kwargs, msg):
    with pytest.raises(SpecError, match=msg):
        TargetSpec(**kwargs)


def test_channel_state_examples():
    s4 = channel_state(ChannelSpec.maximal(4)).amps
    assert np.allclose(s4[[0, 5, 10, 15]], 0.5) and np.count_nonzero(s4) == 4
    s8 = channel_state(ChannelSpec.maximal(8)).amps
    assert np.allclose(s8[np.arange(8) * 9], 1 / (2 * math.sqrt(2)))


@pytest.mark.parametrize("schmidt", [(1, 0, 0, 0), (0.4, 0.5, math.sqrt(0.59), 0), (0.1, 0.2, 0.3, math.sqrt(0.86))])
def test_channel_spec_rejects(schmidt):
    with pytest.raises(SpecError):
        ChannelSpec.partial(schmidt)


def test_maximal_channel_needs_equal_weights():
    with pytest.raises(SpecError):
        ChannelSpec(tuple(math.sqrt(x) for x in (0.4, 0.3, 0.2, 0.1)), "maximal")


def test_phase_encoding_examples():
    assert np.allclose(phase_encoding(TargetSpec((0.5,) * 4)).matrix, np.eye(4))
    enc = phase_encoding(TargetSpec((0.5,) * 4, (0, math.pi / 2, 0, 0)))
    assert np.allclose(np.diag(enc.matrix), [1, -1, 1, 1])


def test_encoded_pair_carries_doubled_phases():
    th = (0.0, 0.3, 1.1, 2.0)
    t = TargetSpec((0.5,) * 4, th)
    out = apply(phase_encoding(t), channel_state(ChannelSpec.maximal(4)), [0], (4, 4)).amps
    assert np.allclose(out[[0, 5, 10, 15]], 0.5 * np.exp(2j * np.array(th)))


# -- basis -----------------------------------------------------------------------

@pytest.mark.parametrize("dim, rows", [(4, BASIS_4), (8, BASIS_8)])
def test_basis_matches_written_vectors(dim, rows, rng):
    for _ in range(50):
        t = random_target(dim, rng)
        want = written_basis(rows, t.amps, t.phases)
        got = measurement_basis(t)
        for w, g in zip(want, got):
            assert np.allclose(g.amps, w, atol=1e-14)


def test_basis_element_zero_is_target(rng):
    t = random_target(8, rng)
    assert np.array_equal(measurement_basis(t)[0].amps, target_state(t).amps)


def test_uniform_basis_vector_one():
    assert np.allclose(measurement_basis(TargetSpec((0.5,) * 4))[1].amps, [-0.5, 0.5, -0.5, 0.5])


def test_basis_matrix_of_a_basis_state_is_identity():
    assert np.allclose(basis_matrix(TargetSpec((1, 0, 0, 0))).matrix, np.eye(4))


@pytest.mark.parametrize("dim", [4, 8])
def test_basis_matrix_orthogonal(dim, rng):
    for _ in range(100):
        T = basis_matrix(random_target(dim, rng)).matrix
        assert np.max(np.abs(T @ T.T - np.eye(dim))) <= 1e-12


# -- corrections and filter ------------------------------------------------------

@pytest.mark.parametrize("dim", [4, 8])
def test_corrections_map_onto_basis_zero(dim, rng):
    for _ in range(100):
        vs = measurement_basis(random_target(dim, rng, real=True))
        for j in range(1, dim):
            C = correction(dim, j)
            assert C.is_unitary()
            assert np.max(np.abs((C @ vs[j]).amps - vs[0].amps)) <= 1e-12


def test_four_level_corrections_equal_the_tabulated_ones():
    for j in (1, 2, 3):
        assert np.array_equal(correction(4, j).matrix, tabulated_correction(4, j).matrix)


def test_first_correction_squares_to_minus_identity():
    V = correction(4, 1).matrix
    assert np.allclose(V @ V, -np.eye(4))


def test_correction_index_checked():
    with pytest.raises(SpecError):
        correction(4, 4)
    with pytest.raises(SpecError):
        correction(5, 1)


def test_filter_for_uniform_weights():
    W = filter_unitary(ChannelSpec.maximal(4)).matrix
    assert np.allclose(W[:8, :8], np.diag([1, 1, 1, 1, -1, -1, -1, -1]))
    assert np.allclose(W[8:, 8:], np.eye(8))


@pytest.mark.parametrize("dim", [4, 8])
def test_filter_unitary_and_action(dim, rng):
    for _ in range(50):
        ch, t = random_channel(dim, rng), random_target(dim, rng)
        W = filter_unitary(ch)
        assert W.dim == dim * dim
        assert W.is_unitary()
        out = (W @ with_ancilla(branch_states(ch, t)[0])).amps
        assert np.max(np.abs(out[:dim] - ch.smallest * target_state(t).amps)) <= 1e-12


def test_ancilla_zero_joint_probability_is_smallest_weight_squared():
    a = tuple(math.sqrt(x) for x in (0.4, 0.3, 0.2, 0.1))
    ch, t = ChannelSpec.partial(a), TargetSpec((0.5,) * 4, (0, 0.4, 0.8, 1.2))
    runs = {(r.alice_outcome, r.bob_ancilla_outcome): r for r in run_exact(ch, t)}
    assert runs[(0, 0)].joint_probability == pytest.approx(0.1, abs=1e-12)


# -- runs --------------------------------------------------------------------------

@pytest.mark.parametrize("dim, real, expected", [
    (4, False, 0.25), (8, False, 0.125), (4, True, 1.0), (8, True, 1.0),
])
def test_maximal_channel_success(dim, real, expected, rng):
    t = random_target(dim, rng, real=real)
    runs = run_exact(ChannelSpec.maximal(dim), t, real)
    assert success_probability(runs) == pytest.approx(expected, abs=1e-12)
    assert all(r.fidelity == pytest.approx(1.0, abs=1e-10) for r in runs if r.success)
    assert math.fsum(r.joint_probability for r in runs) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("dim", [4, 8])
@pytest.mark.parametrize("real", [False, True])
def test_partial_channel_success(dim, real, rng):
    ch = random_channel(dim, rng)
    runs = run_exact(ch, random_target(dim, rng, real=real), real)
    expected = (dim if real else 1) * ch.smallest ** 2
    assert success_probability(runs) == pytest.approx(expected, abs=1e-12)


def test_corrections_only_on_successful_ancilla(rng):
    ch = random_channel(4, rng)
    for r in run_exact(ch, random_target(4, rng, real=True), True):
        assert bool(r.corrections_applied) == (r.alice_outcome > 0 and r.bob_ancilla_outcome == 0)


def test_real_subspace_needs_real_target(rng):
    with pytest.raises(SpecError):
        run_exact(ChannelSpec.maximal(4), random_target(4, rng), True)


def test_dimension_mismatch_rejected(rng):
    with pytest.raises(SpecError):
        run_exact(ChannelSpec.maximal(8), random_target(4, rng))


def test_fallback_degenerate_for_near_maximal_channel():
    assert fallback_state(ChannelSpec.partial((0.5,) * 4), TargetSpec((0.5,) * 4)).is_null
    near = ChannelSpec.partial(tuple(np.array([0.5 + 1e-9, 0.5, 0.5, 0.5 - 1e-9]) / math.sqrt(1 + 4e-18)))
    raw = np.sqrt(np.array(near.schmidt) ** 2 - near.smallest ** 2)
    assert np.max(raw) < 1e-4


def test_fallback_matches_protocol_branch(rng):
    ch, t = random_channel(4, rng), random_target(4, rng)
    runs = {(r.alice_outcome, r.bob_ancilla_outcome): r for r in run_exact(ch, t)}
    assert np.max(np.abs(runs[(0, 1)].final_state.amps - fallback_state(ch, t).amps)) <= 1e-12


def test_fallback_support_excludes_last_level(rng):
    fb = fallback_state(random_channel(8, rng), random_target(8, rng))
    assert fb.amps[7] == 0 and np.count_nonzero(fb.amps[:7]) == 7


# -- sampling ----------------------------------------------------------------------

def test_sampling_is_deterministic_and_worker_independent(rng):
    ch, t = random_channel(8, rng), random_target(8, rng, real=True)
    a = run_sampled(ch, t, True, 50_000, seed=99)
    b = run_sampled(ch, t, True, 50_000, seed=99)
    c = run_sampled(ch, t, True, 50_000, seed=99, workers=4)
    assert a == b == c
    assert run_sampled(ch, t, True, 50_000, seed=100) != a


def test_sampled_success_frequency_maximal_4d(rng):
    n = 100_000
    res = run_sampled(ChannelSpec.maximal(4), random_target(4, rng), False, n, seed=5)
    sigma = math.sqrt(0.25 * 0.75 / n)
    assert abs(res.successes / n - 0.25) <= 5 * sigma


def test_sampled_failure_frequency_partial_8d(rng):
    n = 100_000
    ch = random_channel(8, rng)
    res = run_sampled(ch, random_target(8, rng, real=True), True, n, seed=6)
    p_fail = 1 - 8 * ch.smallest ** 2
    sigma = math.sqrt(p_fail * (1 - p_fail) / n)
    assert abs((n - res.successes) / n - p_fail) <= 5 * sigma


# -- properties ----------------------------------------------------------------------

@st.composite
def specs(draw, dim):
    seed = draw(st.integers(0, 2**32 - 1))
    level = draw(st.integers(dim // 2 + 1, dim))
    real = draw(st.booleans())
    r = np.random.default_rng(seed)
    return random_channel(dim, r), random_target(dim, r, real=real, level=level), real


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([4, 8]).flatmap(specs))
def test_branch_probabilities_sum_to_one(case):
    ch, t, real = case
    runs = run_exact(ch, t, real)
    assert math.fsum(r.joint_probability for r in runs) == pytest.approx(1.0, abs=1e-12)
    assert all(r.joint_probability >= 0 for r in runs)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([4, 8]).flatmap(specs))
def test_pair_expands_over_the_basis(case):
    ch, t, _ = case
    n = ch.dim
    lhs = apply(phase_encoding(t), channel_state(ch), [0], (n, n)).amps
    rhs = sum(tensor(v, b).amps for v, b in zip(measurement_basis(t), branch_states(ch, t)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([4, 8]).flatmap(specs))
def test_basis_gram_deviation_small(case):
    _, t, _ = case
    assert gram_deviation(measurement_basis(t)) <= 1e-12
