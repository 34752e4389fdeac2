"""Remote preparation of 4- and 8-level equatorial states.

Alice holds the classical description of the target. She imprints doubled
phases on her half of the shared pair, measures it in a basis built from the
target's real amplitudes, and sends the outcome index to Bob. Bob keeps the
state (outcome 0) or, when every phase is zero, rotates it back with a fixed
signed permutation. Over a non-maximally entangled pair Bob first runs an
ancilla-assisted filter that equalises the Schmidt weights, succeeding when
the ancilla reads 0.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (
    TOL_NORM,
    TOL_NULL_PROB,
    Operator,
    StateVector,
    apply,
    computational_basis,
    fidelity,
    measure_in_basis,
    tensor,
)

log = logging.getLogger(__name__)

NATIVE_DIMS = (4, 8)
TWO_PI = 2.0 * math.pi
SUCCESS_TOL = 1e-10
TOL_ORDER = 1e-12
SAMPLE_CHUNK = 8192

# Signed, 1-based amplitude indices of the orthogonal basis designs: entry
# (r, c) of the basis matrix is sign * amps[|k| - 1]. Column 0 is the target.
_DESIGN = {
    4: np.array([
        [1, -2, -3, -4],
        [2, 1, 4, -3],
        [3, -4, 1, 2],
        [4, 3, -2, 1],
    ]),
    8: np.array([
        [1, -2, -3, -4, -5, -6, -7, -8],
        [2, 1, 4, -3, 6, -5, -8, 7],
        [3, -4, 1, 2, 7, 8, -5, -6],
        [4, 3, -2, 1, 8, -7, 6, -5],
        [5, -6, -7, -8, 1, 2, 3, 4],
        [6, 5, -8, 7, -2, 1, -4, 3],
        [7, 8, 5, -6, -3, 4, 1, -2],
        [8, -7, 6, 5, -4, -3, 2, 1],
    ]),
}


class SpecError(ValueError):
    """Invalid target or channel description."""


def native_dim(level: int) -> int:
    if not 3 <= level <= 8:
        raise SpecError(f"level must be in 3..8, got {level}")
    return 4 if level <= 4 else 8


@dataclass(frozen=True)
class TargetSpec:
    """Equatorial target: real amplitudes and phases, phase 0 pinned to zero.

    ``amps`` may be given with ``level`` entries; it is zero-padded to the
    native dimension (4 or 8). ``phases`` defaults to all zeros and is
    reduced modulo 2*pi.
    """

    amps: tuple[float, ...]
    phases: tuple[float, ...] | None = None
    level: int | None = None

    def __post_init__(self) -> None:
        amps = [float(a) for a in self.amps]
        level = len(amps) if self.level is None else int(self.level)
        n = native_dim(level)
        if len(amps) > n:
            raise SpecError(f"{len(amps)} amplitudes given for a {n}-dim target")
        amps += [0.0] * (n - len(amps))
        if any(a != 0.0 for a in amps[level:]):
            raise SpecError(f"amplitudes above level {level} must vanish")
        total = math.fsum(a * a for a in amps)
        if abs(total - 1.0) > TOL_NORM:
            raise SpecError(f"sum of squared amplitudes is {total:.15g}, expected 1")

        phases = [0.0] * n if self.phases is None else [float(t) for t in self.phases]
        if len(phases) > n:
            raise SpecError(f"{len(phases)} phases given for a {n}-dim target")
        phases += [0.0] * (n - len(phases))
        if phases[0] != 0.0:
            raise SpecError("phase of level 0 is fixed to 0")
        phases = [t % TWO_PI for t in phases]

        object.__setattr__(self, "amps", tuple(amps))
        object.__setattr__(self, "phases", tuple(phases))
        object.__setattr__(self, "level", level)

    @property
    def dim(self) -> int:
        return len(self.amps)

    @property
    def is_real(self) -> bool:
        return all(t == 0.0 for t in self.phases)


@dataclass(frozen=True)
class ChannelSpec:
    """Schmidt coefficients of the shared pair ``sum_k a_k |kk>``.

    Coefficients must be positive and non-increasing. ``kind='maximal'``
    additionally requires them all equal to ``1/sqrt(dim)``.
    """

    schmidt: tuple[float, ...]
    kind: str = "partial"

    def __post_init__(self) -> None:
        a = tuple(float(x) for x in self.schmidt)
        if len(a) not in NATIVE_DIMS:
            raise SpecError(f"channel dim must be 4 or 8, got {len(a)}")
        if self.kind not in ("maximal", "partial"):
            raise SpecError(f"unknown channel kind {self.kind!r}")
        total = math.fsum(x * x for x in a)
        if abs(total - 1.0) > TOL_NORM:
            raise SpecError(f"sum of squared Schmidt coefficients is {total:.15g}, expected 1")
        if any(x <= 0.0 for x in a):
            raise SpecError("Schmidt coefficients must be strictly positive")
        if any(a[k + 1] > a[k] + TOL_ORDER for k in range(len(a) - 1)):
            raise SpecError("Schmidt coefficients must be non-increasing")
        if self.kind == "maximal":
            uniform = 1.0 / math.sqrt(len(a))
            if any(abs(x - uniform) > TOL_NORM for x in a):
                raise SpecError("maximal channel needs equal coefficients 1/sqrt(dim)")
        object.__setattr__(self, "schmidt", a)

    @classmethod
    def maximal(cls, dim: int) -> "ChannelSpec":
        return cls((1.0 / math.sqrt(dim),) * dim, "maximal")

    @classmethod
    def partial(cls, schmidt: Sequence[float]) -> "ChannelSpec":
        return cls(tuple(schmidt), "partial")

    @property
    def dim(self) -> int:
        return len(self.schmidt)

    @property
    def smallest(self) -> float:
        return self.schmidt[-1]


@dataclass(frozen=True)
class ProtocolRun:
    """One branch of a protocol execution."""

    alice_outcome: int
    bob_ancilla_outcome: int | None
    corrections_applied: tuple[str, ...]
    final_state: StateVector
    success: bool
    joint_probability: float
    fidelity: float


# -- construction ----------------------------------------------------------

def target_state(spec: TargetSpec) -> StateVector:
    amps = np.asarray(spec.amps) * np.exp(1j * np.asarray(spec.phases))
    return StateVector(amps)


def channel_state(spec: ChannelSpec) -> StateVector:
    """``sum_k a_k |k>_A |k>_B`` with Alice's particle as the slow index."""
    n = spec.dim
    amps = np.zeros(n * n, dtype=complex)
    amps[np.arange(n) * (n + 1)] = spec.schmidt
    return StateVector(amps)


def phase_encoding(spec: TargetSpec) -> Operator:
    return Operator(np.diag(np.exp(2j * np.asarray(spec.phases))), "phase-encoding")


def _design_matrix(amps: Sequence[float]) -> np.ndarray:
    pattern = _DESIGN[len(amps)]
    return np.sign(pattern) * np.asarray(amps, dtype=float)[np.abs(pattern) - 1]


def basis_matrix(spec: TargetSpec) -> Operator:
    """Real orthogonal matrix whose columns are the phase-free measurement vectors."""
    return Operator(_design_matrix(spec.amps), f"basis-{spec.dim}")


def measurement_basis(spec: TargetSpec) -> list[StateVector]:
    """Alice's basis; vector 0 is the target itself."""
    T = _design_matrix(spec.amps)
    phases = np.exp(1j * np.asarray(spec.phases))
    return [StateVector(phases * T[:, i]) for i in range(spec.dim)]


def branch_states(channel: ChannelSpec, target: TargetSpec) -> list[StateVector]:
    """Bob's sub-normalized conditional states; their squared norms sum to 1.

    After phase encoding the pair equals ``sum_i basis_i (x) branch_i``.
    """
    a = np.asarray(channel.schmidt)
    return [StateVector(a * v.amps) for v in measurement_basis(target)]


def _derived_correction(dim: int, j: int) -> np.ndarray:
    # Probe the design with unit amplitude vectors: column j is a signed
    # permutation of the amplitudes, so its inverse maps it onto column 0.
    P = np.zeros((dim, dim))
    for m in range(dim):
        col = _design_matrix(np.eye(dim)[m])[:, j]
        k = int(np.flatnonzero(col)[0])
        P[m, k] = col[k]
    return P


_I2 = np.eye(2)
_O2 = np.zeros((2, 2))
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]])
_SZ = np.diag([1.0, -1.0]).astype(complex)


def _tabulated() -> dict[tuple[int, int], np.ndarray]:
    b = np.block
    mY = -1j * _SY
    return {
        (4, 1): np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=complex),
        (4, 2): np.array([[0, 0, 1, 0], [0, 0, 0, -1], [-1, 0, 0, 0], [0, 1, 0, 0]], dtype=complex),
        (4, 3): np.array([[0, 0, 0, 1], [0, 0, 1, 0], [0, -1, 0, 0], [-1, 0, 0, 0]], dtype=complex),
        (8, 1): b([[mY, _O2, _O2, _O2], [_O2, mY, _O2, _O2], [_O2, _O2, mY, _O2], [_O2, _O2, _O2, -mY]]),
        (8, 2): b([[_O2, -_SZ, _O2, _O2], [_SZ, _O2, _O2, _O2], [_O2, _O2, _O2, -_I2], [_O2, _O2, _I2, _O2]]),
        (8, 3): b([[_O2, -_SX, _O2, _O2], [_SX, _O2, _O2, _O2], [_O2, _O2, _O2, mY], [_O2, _O2, mY, _O2]]),
        (8, 4): b([[_O2, _O2, -_SZ, _O2], [_O2, _O2, _O2, _I2], [_SZ, _O2, _O2, _O2], [_O2, -_I2, _O2, _O2]]),
        (8, 5): b([[_O2, _O2, -_SX, _O2], [_O2, _O2, _O2, -mY], [_SX, _O2, _O2, _O2], [_O2, -mY, _O2, _O2]]),
        (8, 6): b([[_O2, _O2, _O2, -_I2], [_O2, _O2, -_SZ, _O2], [_O2, _SZ, _O2, _O2], [_I2, _O2, _O2, _O2]]),
        (8, 7): b([[_O2, _O2, _O2, -_SY], [_O2, _O2, -_SX, _O2], [_O2, _SX, _O2, _O2], [mY, _O2, _O2, _O2]]),
    }


_TABULATED = _tabulated()


def _check_outcome(dim: int, j: int) -> None:
    if dim not in NATIVE_DIMS:
        raise SpecError(f"dim must be 4 or 8, got {dim}")
    if not 1 <= j <= dim - 1:
        raise SpecError(f"outcome index must be in 1..{dim - 1}, got {j}")


def tabulated_correction(dim: int, j: int) -> Operator:
    """The feed-forward matrix exactly as published, kept for auditing.

    Several of the published 8-level matrices map basis vector ``j`` to
    ``-basis_0`` and one has a misprinted block; see ``qudit_rsp.audit``.
    """
    _check_outcome(dim, j)
    return Operator(_TABULATED[(dim, j)], f"tabulated-{dim}-{j}")


def correction(dim: int, j: int) -> Operator:
    """Feed-forward unitary mapping basis vector ``j`` to basis vector 0.

    Derived from the basis design itself (a signed permutation), so it holds
    for every real amplitude vector. For ``dim=4`` it coincides with the
    tabulated matrices entrywise.
    """
    _check_outcome(dim, j)
    return Operator(_derived_correction(dim, j), f"correction-{dim}-{j}")


def filter_unitary(spec: ChannelSpec) -> Operator:
    """Ancilla-assisted Schmidt-weight equaliser on the ``ancilla (x) B`` register.

    The ancilla is a ``dim``-level system and the slow index, so basis
    ``|a b>`` sits at ``a * dim + b``. Only ancilla levels 0 and 1 mix; the
    rest is the identity.
    """
    a = np.asarray(spec.schmidt)
    if np.any(a <= 0.0):
        raise SpecError("filter needs every Schmidt coefficient > 0")
    n = spec.dim
    ratio = spec.smallest / a
    leak = np.sqrt(np.clip(1.0 - ratio**2, 0.0, None))
    W = np.eye(n * n, dtype=complex)
    W[:n, :n] = np.diag(ratio)
    W[:n, n:2 * n] = np.diag(leak)
    W[n:2 * n, :n] = np.diag(leak)
    W[n:2 * n, n:2 * n] = -np.diag(ratio)
    return Operator(W, f"filter-{n}")


def with_ancilla(bob: StateVector, ancilla_dim: int | None = None) -> StateVector:
    """``|0>_a (x) bob`` in the ancilla-first ordering used by ``filter_unitary``."""
    return tensor(StateVector.basis(ancilla_dim or bob.dim, 0), bob)


def fallback_state(channel: ChannelSpec, target: TargetSpec) -> StateVector:
    """Residual lower-dimensional state left when the filter fails on outcome 0.

    Normalized; if every coefficient already equals the smallest one there
    is nothing left and the zero vector is returned (``is_null`` is True).
    """
    a = np.asarray(channel.schmidt)
    leak = np.sqrt(np.clip(a**2 - channel.smallest**2, 0.0, None))
    amps = leak * target_state(target).amps
    s = StateVector(amps)
    return s if s.is_null else s.normalize()


# -- execution ---------------------------------------------------------------

def _check_pair(channel: ChannelSpec, target: TargetSpec, real_subspace: bool) -> None:
    if channel.dim != target.dim:
        raise SpecError(f"channel dim {channel.dim} != target dim {target.dim}")
    if real_subspace and not target.is_real:
        raise SpecError("real_subspace requires every phase to be zero")


def _alice_outcomes(channel: ChannelSpec, target: TargetSpec):
    n = channel.dim
    shared = apply(phase_encoding(target), channel_state(channel), [0], (n, n))
    return measure_in_basis(shared, 0, (n, n), measurement_basis(target))


def _finish(alice: int, ancilla: int | None, state: StateVector, real_subspace: bool,
            goal: StateVector, prob: float) -> ProtocolRun:
    applied: tuple[str, ...] = ()
    if real_subspace and alice > 0 and ancilla in (None, 0):
        op = correction(goal.dim, alice)
        state = op @ state
        applied = (op.name,)
    f = fidelity(goal, state)
    return ProtocolRun(alice, ancilla, applied, state, f >= 1.0 - SUCCESS_TOL, prob, f)


def run_exact(channel: ChannelSpec, target: TargetSpec,
              real_subspace: bool = False) -> list[ProtocolRun]:
    """Enumerate every branch with its exact joint probability.

    Maximal channel: Alice's outcome alone decides the branch. Partial
    channel: Bob filters whatever he received, reads the ancilla, and only
    on ancilla 0 applies the correction. Branches with probability below
    ``TOL_NULL_PROB`` are omitted.
    """
    _check_pair(channel, target, real_subspace)
    goal = target_state(target)
    n = channel.dim
    runs = []
    for out in _alice_outcomes(channel, target):
        if out.is_null:
            continue
        if channel.kind == "maximal":
            runs.append(_finish(out.outcome_index, None, out.post_state,
                                real_subspace, goal, out.probability))
            continue
        filtered = filter_unitary(channel) @ with_ancilla(out.post_state)
        for anc in measure_in_basis(filtered, 0, (n, n), computational_basis(n)):
            if anc.is_null:
                continue
            runs.append(_finish(out.outcome_index, anc.outcome_index, anc.post_state,
                                real_subspace, goal, out.probability * anc.probability))
    return runs


def success_probability(runs: Iterable[ProtocolRun]) -> float:
    return math.fsum(r.joint_probability for r in runs if r.success)


BranchKey = tuple[int, int | None]


@dataclass(frozen=True)
class SampledRun:
    trials: int
    seed: int
    counts: dict[BranchKey, int] = field(default_factory=dict)
    successes: int = 0

    def frequency(self, key: BranchKey) -> float:
        return self.counts.get(key, 0) / self.trials


def _branch_table(channel, target):
    """Alice probabilities plus, per Alice outcome, conditional ancilla probabilities."""
    n = channel.dim
    alice = _alice_outcomes(channel, target)
    p_alice = np.array([o.probability for o in alice])
    if channel.kind == "maximal":
        return p_alice / p_alice.sum(), None
    W = filter_unitary(channel)
    cond = []
    for o in alice:
        if o.is_null:
            cond.append(np.eye(n)[0])
            continue
        anc = measure_in_basis(W @ with_ancilla(o.post_state), 0, (n, n), computational_basis(n))
        q = np.array([x.probability for x in anc])
        cond.append(q / q.sum())
    return p_alice / p_alice.sum(), np.array(cond)


def _sample_chunk(seed: int, chunk: int, size: int, p_alice, p_anc) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))
    n = len(p_alice)
    alice = rng.choice(n, size=size, p=p_alice)
    if p_anc is None:
        return np.bincount(alice, minlength=n).reshape(n, 1)
    table = np.zeros((n, n), dtype=np.int64)
    for a in range(n):
        hits = int(np.count_nonzero(alice == a))
        if hits:
            table[a] = np.bincount(rng.choice(n, size=hits, p=p_anc[a]), minlength=n)
    return table


def run_sampled(channel: ChannelSpec, target: TargetSpec, real_subspace: bool,
                trials: int, seed: int, workers: int = 1) -> SampledRun:
    """Monte Carlo replay of the protocol: sample Alice, then Bob's ancilla.

    Trials are cut into fixed chunks of ``SAMPLE_CHUNK`` and chunk ``k`` draws
    from its own stream ``(seed, k)``, so the histogram depends on ``seed``
    only, never on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _check_pair(channel, target, real_subspace)
    p_alice, p_anc = _branch_table(channel, target)
    sizes = [SAMPLE_CHUNK] * (trials // SAMPLE_CHUNK)
    if trials % SAMPLE_CHUNK:
        sizes.append(trials % SAMPLE_CHUNK)

    jobs = [(seed, k, size, p_alice, p_anc) for k, size in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tables = list(pool.map(lambda job: _sample_chunk(*job), jobs))
    else:
        tables = [_sample_chunk(*job) for job in jobs]
    table = np.sum(tables, axis=0)

    success = {(r.alice_outcome, r.bob_ancilla_outcome): r.success
               for r in run_exact(channel, target, real_subspace)}
    counts: dict[BranchKey, int] = {}
    for a in range(table.shape[0]):
        for k in range(table.shape[1]):
            if table[a, k]:
                counts[(a, None if p_anc is None else k)] = int(table[a, k])
    wins = sum(c for key, c in counts.items() if success.get(key, False))
    return SampledRun(trials, seed, dict(sorted(counts.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0))), wins)


# -- random specs ------------------------------------------------------------

def random_target(dim: int, rng: np.random.Generator, real: bool = False,
                  level: int | None = None) -> TargetSpec:
    level = dim if level is None else level
    amps = rng.normal(size=level)
    amps /= np.linalg.norm(amps)
    phases = None
    if not real:
        phases = np.concatenate([[0.0], rng.uniform(0.0, TWO_PI, size=dim - 1)])
        phases[level:] = 0.0
    return TargetSpec(tuple(amps), None if phases is None else tuple(phases), level)


def random_channel(dim: int, rng: np.random.Generator, floor: float = 0.05) -> ChannelSpec:
    a = np.sort(rng.uniform(floor, 1.0, size=dim))[::-1]
    a /= np.linalg.norm(a)
    return ChannelSpec.partial(tuple(a))
