"""Linear-optical layer: beam splitters, MZI blocks, triangular meshes, VBS
concentration and the imperfect-block fidelity model.

Two-mode blocks act on modes ``(j, i)`` with ``j < i``; the lower mode is the
block's first row/column. Every block matrix here is the phase-stripped form
``[[e^{i phi} sin t, cos t], [e^{i phi} cos t, -sin t]]`` unless the name says
otherwise; the physical block carries an extra ``i e^{i theta}``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import TOL_NULL_PROB, Operator, StateVector
from .protocols import ChannelSpec, SpecError, channel_state

TWO_PI = 2.0 * math.pi
TOL_DECOMPOSE = 1e-10
_ZERO = 1e-14
DEFAULT_PANELS = 1024
MIN_PANELS = 64

# Pass-through setting: sin = -1, cos = 0, phase pi gives the 2x2 identity.
IDENTITY_SETTING = (1.5 * math.pi, math.pi)


def _wrap(angle: float) -> float:
    a = float(angle) % TWO_PI
    return 0.0 if a == TWO_PI else a


# -- elementary components ---------------------------------------------------

def bs() -> Operator:
    """Lossless 50:50 beam splitter."""
    return Operator(np.array([[1, 1j], [1j, 1]]) / math.sqrt(2), "BS")


def ps(phase: float) -> Operator:
    """Phase shifter on the first mode."""
    return Operator(np.diag([np.exp(1j * phase), 1.0]), "PS")


def mzi(theta: float) -> Operator:
    """Mach-Zehnder interferometer with internal phase ``2*theta`` (prefactor kept)."""
    s, c = math.sin(theta), math.cos(theta)
    return Operator(1j * np.exp(1j * theta) * np.array([[s, c], [c, -s]]), "MZI")


def block_phase(theta: float) -> complex:
    """Overall phase the physical block carries on top of the stripped form."""
    return 1j * np.exp(1j * theta)


def block_T_stripped(phi: float, theta: float) -> Operator:
    s, c = math.sin(theta), math.cos(theta)
    e = np.exp(1j * phi)
    return Operator(np.array([[e * s, c], [e * c, -s]]), "T")


def block_T(phi: float, theta: float) -> Operator:
    """Physical block: external phase ``phi`` on the first input, then the MZI."""
    return Operator(block_phase(theta) * block_T_stripped(phi, theta).matrix, "T")


# -- meshes ------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    i: int
    j: int
    theta: float
    phi: float

    def __post_init__(self) -> None:
        if not 0 <= self.j < self.i:
            raise ValueError(f"block needs 0 <= j < i, got i={self.i}, j={self.j}")
        object.__setattr__(self, "theta", _wrap(self.theta))
        object.__setattr__(self, "phi", _wrap(self.phi))


def alternate_setting(theta: float, phi: float) -> tuple[float, float]:
    """The other (theta, phi) nulling the same entry.

    Its block equals the original with the first output row negated, a sign
    that the following layers or the output diagonal absorb.
    """
    return _wrap(math.pi - theta), _wrap(phi + math.pi)


def embed_block(dim: int, b: Block) -> Operator:
    if b.i >= dim:
        raise ValueError(f"block modes ({b.i}, {b.j}) out of range for dim {dim}")
    M = np.eye(dim, dtype=complex)
    M[np.ix_([b.j, b.i], [b.j, b.i])] = block_T_stripped(b.phi, b.theta).matrix
    return Operator(M, f"T{b.i}{b.j}")


@dataclass(frozen=True)
class MeshPlan:
    """Triangular mesh: ``blocks`` in the order light meets them, then ``diag``.

    ``reconstruct`` multiplies ``global_phase * diag(diag) * B_last ... B_first``.
    ``diag`` is +-1 for real orthogonal targets and unit-modulus in general.
    """

    dim: int
    blocks: tuple[Block, ...]
    diag: tuple[complex, ...]
    global_phase: complex = 1.0

    def to_text(self) -> str:
        lines = [f"mesh {self.dim}"]
        lines += [f"T {b.i} {b.j} {b.theta:.17g} {b.phi:.17g}" for b in self.blocks]
        lines.append("D " + " ".join(_fmt_complex(d) for d in self.diag))
        g = complex(self.global_phase)
        lines.append(f"phase {g.real:.17g} {g.imag:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MeshPlan":
        dim = None
        blocks, diag, phase = [], None, 1.0
        for lineno, raw in enumerate(text.splitlines(), 1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag == "mesh":
                    dim = int(parts[1])
                elif tag == "T":
                    blocks.append(Block(int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4])))
                elif tag == "D":
                    diag = tuple(complex(p) for p in parts[1:])
                elif tag == "phase":
                    phase = complex(float(parts[1]), float(parts[2]))
                else:
                    raise ValueError(f"unknown record {tag!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"mesh line {lineno}: {exc}") from None
        if dim is None:
            raise ValueError("missing 'mesh <dim>' header")
        if diag is None:
            diag = (1.0,) * dim
        if len(diag) != dim:
            raise ValueError(f"D has {len(diag)} entries, expected {dim}")
        return cls(dim, tuple(blocks), diag, phase)


def _fmt_complex(z: complex) -> str:
    z = complex(z)
    if z.imag == 0.0:
        return f"{z.real:.17g}"
    return f"{z.real:.17g}{z.imag:+.17g}j"


def reconstruct(plan: MeshPlan) -> Operator:
    M = np.eye(plan.dim, dtype=complex)
    for b in plan.blocks:
        M = embed_block(plan.dim, b).matrix @ M
    M = np.diag(plan.diag) @ M
    return Operator(plan.global_phase * M, "mesh")


def decompose(U, dim: int | None = None) -> MeshPlan:
    """Triangular (Reck-order) factorisation of a unitary.

    Nulls the last row right to left, then the next row up, by multiplying
    with inverse blocks on the right. The first nulling block is the first
    one light meets. Canonical angles have ``theta`` in ``[0, pi/2]``; an
    entry that is already zero gets the pass-through setting instead.
    """
    V = np.array(getattr(U, "matrix", U), dtype=complex)
    n = V.shape[0] if dim is None else dim
    if V.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix, got {V.shape}")
    err = float(np.max(np.abs(V @ V.conj().T - np.eye(n))))
    if err > TOL_DECOMPOSE:
        raise ValueError(f"matrix is not unitary (deviation {err:.3e})")

    blocks = []
    for i in range(n - 1, 0, -1):
        for j in range(i - 1, -1, -1):
            rj, ri = V[i, j], V[i, i]
            if abs(rj) <= _ZERO:
                theta, phi = IDENTITY_SETTING
            else:
                theta = math.atan2(abs(ri), abs(rj))
                phi = np.angle(rj) - np.angle(-ri) if abs(ri) > _ZERO else 0.0
            b = Block(i, j, theta, phi)
            V = V @ embed_block(n, b).matrix.conj().T
            blocks.append(b)

    d = np.diag(V) / np.abs(np.diag(V))
    g = _clean(d[0])
    diag = tuple(_clean(x) for x in d / d[0])
    return MeshPlan(n, tuple(blocks), diag, g)


def _clean(z: complex) -> complex:
    z = complex(z)
    if abs(z.imag) <= _ZERO:
        return complex(z.real, 0.0)
    return z


# -- imperfect components ----------------------------------------------------

@dataclass(frozen=True)
class ImperfectionParams:
    epsilon: float = 0.0
    dtheta: float = 0.0
    dphi: float = 0.0

    def __post_init__(self) -> None:
        if not self.epsilon > -1.0:
            raise ValueError("epsilon must exceed -1")


def imperfect_bs(epsilon: float) -> Operator:
    t = 1.0 + epsilon
    return Operator(np.array([[t, 1j], [1j, t]]) / math.sqrt(epsilon**2 + 2 * epsilon + 2), "BS~")


def imperfect_block(phi: float, theta: float, p: ImperfectionParams) -> Operator:
    """Block built from unbalanced splitters and offset phases (prefactor included).

    Each normalized unbalanced splitter is still unitary, so this is too; the
    imperfection shows up as a wrong rotation, not as loss. At ``p == 0`` it
    equals ``block_T``.
    """
    t = 1.0 + p.epsilon
    e2 = np.exp(2j * (theta - p.dtheta))
    ef = np.exp(1j * (phi - p.dphi))
    M = np.array([
        [(t * t * e2 - 1.0) * ef, 1j * t * (e2 + 1.0)],
        [1j * t * (e2 + 1.0) * ef, t * t - e2],
    ]) / (t * t + 1.0)
    return Operator(M, "T~")


def _output_states(phi, theta, p, alpha):
    chi = np.stack([np.cos(alpha), np.sin(alpha)])
    ideal = block_T(phi, theta).matrix @ chi
    real = imperfect_block(phi, theta, p).matrix @ chi
    return ideal, real


def average_fidelity(phi: float, theta: float, p: ImperfectionParams,
                     panels: int = DEFAULT_PANELS, normalize: bool = True) -> float:
    """Input-averaged overlap between the ideal and imperfect block outputs.

    Inputs are ``cos a |0> + sin a |1>`` over one full period; the composite
    trapezoid rule on a periodic integrand reduces to an equal-weight sum.
    With ``normalize=False`` the imperfect output is used as is; for the
    (unitary) imperfect block both agree to rounding.
    """
    if panels < MIN_PANELS:
        raise ValueError(f"panels must be >= {MIN_PANELS}")
    alpha = TWO_PI * np.arange(panels) / panels
    ideal, real = _output_states(phi, theta, p, alpha)
    overlap = np.abs(np.sum(ideal.conj() * real, axis=0)) ** 2
    if normalize:
        overlap = overlap / np.sum(np.abs(real) ** 2, axis=0)
    return float(np.mean(overlap))


def fidelity_surface(epsilons: Sequence[float], deltas: Sequence[float],
                     theta: float = math.pi / 3, phi: float = 0.0,
                     panels: int = DEFAULT_PANELS, workers: int = 1,
                     normalize: bool = True) -> np.ndarray:
    """Average fidelity on an (epsilon, delta) grid with ``dtheta = dphi = delta``.

    Row ``k`` belongs to ``epsilons[k]``.
    """
    points = [(e, d) for e in epsilons for d in deltas]

    def one(pt):
        e, d = pt
        return average_fidelity(phi, theta, ImperfectionParams(e, d, d), panels, normalize)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, points))
    else:
        values = [one(pt) for pt in points]
    return np.array(values).reshape(len(epsilons), len(deltas))


# -- VBS concentration -------------------------------------------------------

@dataclass(frozen=True)
class VbsPlan:
    """Variable-reflectivity splitters on Bob's modes ``0 .. dim-2``."""

    dim: int
    reflectivities: tuple[float, ...]
    leakage: tuple[float, ...]
    success_probability: float

    @property
    def thetas(self) -> tuple[float, ...]:
        """Block angles whose first-mode reflection amplitude equals each reflectivity."""
        return tuple(math.asin(min(r, 1.0)) for r in self.reflectivities)


def vbs_concentrate(spec: ChannelSpec, detector_efficiency: float | None = None):
    """Concentrate a partial pair into the maximal one with ``dim - 1`` VBSs.

    Simulates the single photon B over its ``dim`` signal modes plus one
    loss mode per VBS; a click in any loss mode is a failure. Returns
    ``(plan, post-selected AB state, success probability)``. The optional
    ``detector_efficiency`` scales the success probability only.
    """
    a = np.asarray(spec.schmidt)
    if np.any(a <= 0.0):
        raise SpecError("every Schmidt coefficient must be > 0")
    n = spec.dim
    a_min = spec.smallest
    refl = a_min / a[:-1]
    leak = np.sqrt(np.clip(a[:-1] ** 2 - a_min**2, 0.0, None))

    # Alice mode x (signal modes of B, then loss modes 0'..(n-2)').
    psi = np.zeros((n, 2 * n - 1))
    psi[np.arange(n), np.arange(n)] = a
    for k, r in enumerate(refl):
        t = math.sqrt(max(1.0 - r * r, 0.0))
        vbs = np.array([[r, -t], [t, r]])
        psi[:, [k, n + k]] = psi[:, [k, n + k]] @ vbs.T
    kept = psi[:, :n]
    p_success = float(np.sum(kept**2))
    if p_success < TOL_NULL_PROB:
        raise ArithmeticError("concentration never succeeds")
    state = StateVector(kept.reshape(-1) / math.sqrt(p_success))

    plan_p = n * a_min**2
    if detector_efficiency is not None:
        plan_p *= detector_efficiency
        p_success *= detector_efficiency
    plan = VbsPlan(n, tuple(float(r) for r in refl), tuple(float(x) for x in leak), plan_p)
    return plan, state, p_success


def maximal_state(dim: int) -> StateVector:
    return channel_state(ChannelSpec.maximal(dim))
