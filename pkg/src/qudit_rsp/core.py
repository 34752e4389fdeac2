"""Dense state vectors and operators on qudits and their tensor products.

Composite index convention is big-endian: in ``tensor(u, v)`` the left factor
is the slow (most significant) index, so amplitude ``(i, j)`` sits at
``i * v.dim + j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

TOL_NORM = 1e-12
TOL_UNITARY = 1e-12
TOL_BASIS = 1e-10
TOL_NULL_PROB = 1e-15
TOL_NEGATIVE_PROB = 1e-12


class DimensionError(ValueError):
    """Raised when operand dimensions do not line up."""


class BasisError(ValueError):
    """Raised when a measurement basis is not orthonormal."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state (possibly sub-normalized) of a ``dim``-level system."""

    amps: np.ndarray

    def __post_init__(self) -> None:
        amps = np.array(self.amps, dtype=complex).reshape(-1)
        if amps.size == 0:
            raise DimensionError("state vector must have at least one amplitude")
        object.__setattr__(self, "amps", _frozen(amps))

    @classmethod
    def basis(cls, dim: int, k: int) -> "StateVector":
        if not 0 <= k < dim:
            raise DimensionError(f"basis index {k} out of range for dim {dim}")
        amps = np.zeros(dim, dtype=complex)
        amps[k] = 1.0
        return cls(amps)

    @property
    def dim(self) -> int:
        return self.amps.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    @property
    def normalized(self) -> bool:
        return abs(self.norm() - 1.0) <= TOL_NORM

    @property
    def is_null(self) -> bool:
        """True for the zero vector (null measurement branches, degenerate states)."""
        return self.norm() ** 2 < TOL_NULL_PROB

    def normalize(self) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.amps / n)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def __len__(self) -> int:
        return self.dim

    def __getitem__(self, k):
        return self.amps[k]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amps, dtype=dtype)

    def __repr__(self) -> str:
        return f"StateVector(dim={self.dim}, amps={np.array2string(self.amps, precision=4)})"


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix; rows index outputs, columns index inputs."""

    matrix: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"operator must be square, got shape {m.shape}")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def identity(cls, dim: int, name: str = "I") -> "Operator":
        return cls(np.eye(dim), name)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m @ m.conj().T - np.eye(self.dim))))

    def is_unitary(self, tol: float = TOL_UNITARY) -> bool:
        return self.unitarity_error() <= tol

    def dagger(self) -> "Operator":
        return Operator(self.matrix.conj().T, f"{self.name}^dag" if self.name else "")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            if other.dim != self.dim:
                raise DimensionError(f"cannot compose dims {self.dim} and {other.dim}")
            return Operator(self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            if other.dim != self.dim:
                raise DimensionError(f"operator dim {self.dim} != state dim {other.dim}")
            return StateVector(self.matrix @ other.amps)
        return NotImplemented

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Operator{label}(dim={self.dim})"


@dataclass(frozen=True)
class MeasurementOutcome:
    outcome_index: int
    probability: float
    post_state: StateVector

    @property
    def is_null(self) -> bool:
        """Outcome that (numerically) never occurs; its post-state is the zero vector."""
        return self.probability < TOL_NULL_PROB


def tensor(u: StateVector, v: StateVector) -> StateVector:
    """Kronecker product with ``u`` as the most significant factor."""
    return StateVector(np.kron(u.amps, v.amps))


def kron(*ops: Operator) -> Operator:
    out = np.eye(1, dtype=complex)
    for op in ops:
        out = np.kron(out, op.matrix)
    return Operator(out)


def _check_dims(state_dim: int, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims) or int(np.prod(dims)) != state_dim:
        raise DimensionError(f"subsystem dims {dims} do not multiply to {state_dim}")
    return dims


def apply(M: Operator, s: StateVector, targets: Sequence[int] | int = (0,),
          dims: Sequence[int] | None = None) -> StateVector:
    """Apply ``M`` to the listed subsystems of ``s`` (identity elsewhere).

    ``M`` is indexed big-endian over ``targets`` in the order given, so
    ``apply(M, s, [1, 0], dims)`` treats subsystem 1 as the slow index of ``M``.
    """
    if dims is None:
        dims = (s.dim,)
    dims = _check_dims(s.dim, dims)
    if isinstance(targets, (int, np.integer)):
        targets = (int(targets),)
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets) or any(not 0 <= t < len(dims) for t in targets):
        raise DimensionError(f"invalid target list {targets} for {len(dims)} subsystems")
    target_dim = int(np.prod([dims[t] for t in targets]))
    if M.dim != target_dim:
        raise DimensionError(f"operator dim {M.dim} != target dim {target_dim}")

    rest = [k for k in range(len(dims)) if k not in targets]
    psi = s.amps.reshape(dims).transpose(list(targets) + rest)
    moved_shape = psi.shape
    psi = M.matrix @ psi.reshape(target_dim, -1)
    psi = psi.reshape(moved_shape).transpose(np.argsort(list(targets) + rest))
    return StateVector(psi.reshape(-1))


def gram_deviation(vs: Sequence[StateVector]) -> float:
    """Max-norm distance of the Gram matrix of ``vs`` from the identity."""
    if not vs:
        return 0.0
    dim = vs[0].dim
    if any(v.dim != dim for v in vs):
        raise DimensionError("all vectors must share one dimension")
    V = np.column_stack([v.amps for v in vs])
    G = V.conj().T @ V
    return float(np.max(np.abs(G - np.eye(len(vs)))))


def measure_in_basis(s: StateVector, subsystem: int, dims: Sequence[int],
                     basis: Sequence[StateVector]) -> list[MeasurementOutcome]:
    """Projective measurement of one subsystem of a normalized pure state.

    Returns one outcome per basis vector, in basis order. The post-state lives
    on the remaining subsystems (in their original order) and is normalized;
    outcomes below ``TOL_NULL_PROB`` carry the zero vector instead.
    """
    dims = _check_dims(s.dim, dims)
    if not 0 <= subsystem < len(dims):
        raise DimensionError(f"subsystem {subsystem} out of range")
    if not s.normalized:
        raise ValueError(f"state norm {s.norm():.15g} is not 1 within {TOL_NORM}")
    d = dims[subsystem]
    if any(b.dim != d for b in basis):
        raise DimensionError(f"basis vectors must have dim {d}")
    dev = gram_deviation(basis)
    if dev > TOL_BASIS:
        raise BasisError(f"basis Gram deviation {dev:.3e} exceeds {TOL_BASIS}")

    psi = np.moveaxis(s.amps.reshape(dims), subsystem, 0).reshape(d, -1)
    B = np.column_stack([b.amps for b in basis])
    branches = B.conj().T @ psi

    outcomes = []
    for k, branch in enumerate(branches):
        p = float(np.vdot(branch, branch).real)
        if p < -TOL_NEGATIVE_PROB:
            raise ArithmeticError(f"negative probability {p} for outcome {k}")
        p = min(max(p, 0.0), 1.0)
        if p < TOL_NULL_PROB:
            post = StateVector(np.zeros_like(branch))
        else:
            post = StateVector(branch / np.sqrt(p))
        outcomes.append(MeasurementOutcome(k, p, post))
    return outcomes


def computational_basis(dim: int) -> list[StateVector]:
    return [StateVector.basis(dim, k) for k in range(dim)]


def fidelity(u: StateVector, v: StateVector) -> float:
    """``|<u|v>|^2`` for normalized states."""
    if u.dim != v.dim:
        raise DimensionError(f"dims differ: {u.dim} vs {v.dim}")
    return float(abs(np.vdot(u.amps, v.amps)) ** 2)
