"""Invariant suite behind ``qudit-rsp check``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import apply, gram_deviation, tensor
from .optical import ImperfectionParams, average_fidelity, decompose, reconstruct, vbs_concentrate
from .protocols import (
    ChannelSpec,
    basis_matrix,
    branch_states,
    channel_state,
    correction,
    filter_unitary,
    measurement_basis,
    phase_encoding,
    random_channel,
    random_target,
    run_exact,
    run_sampled,
    success_probability,
    target_state,
    with_ancilla,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _basis(rng, draws):
    worst = 0.0
    for dim in (4, 8):
        for _ in range(draws):
            s = random_target(dim, rng)
            T = basis_matrix(s).matrix
            worst = max(worst, gram_deviation(measurement_basis(s)),
                        float(np.max(np.abs(T @ T.T - np.eye(dim)))))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def _completeness(rng, draws):
    worst = 0.0
    for dim in (4, 8):
        for _ in range(draws):
            B = np.column_stack([v.amps for v in measurement_basis(random_target(dim, rng))])
            worst = max(worst, float(np.max(np.abs(B @ B.conj().T - np.eye(dim)))))
    return worst <= 1e-12, f"max |sum |b><b| - I| {worst:.2e}"


def _corrections(rng, draws):
    worst = 0.0
    for dim in (4, 8):
        for _ in range(draws):
            vs = measurement_basis(random_target(dim, rng, real=True))
            for j in range(1, dim):
                C = correction(dim, j)
                worst = max(worst, C.unitarity_error(),
                            float(np.max(np.abs((C @ vs[j]).amps - vs[0].amps))))
    return worst <= 1e-12, f"max residual {worst:.2e}"


def _filters(rng, draws):
    worst = 0.0
    for dim in (4, 8):
        for _ in range(draws):
            ch, t = random_channel(dim, rng), random_target(dim, rng)
            W = filter_unitary(ch)
            out = W @ with_ancilla(branch_states(ch, t)[0])
            want = ch.smallest * target_state(t).amps
            worst = max(worst, W.unitarity_error(), float(np.max(np.abs(out.amps[:dim] - want))))
    return worst <= 1e-12, f"max residual {worst:.2e}"


def _expansion(rng, draws):
    worst = 0.0
    for dim in (4, 8):
        for _ in range(draws):
            ch, t = random_channel(dim, rng), random_target(dim, rng)
            lhs = apply(phase_encoding(t), channel_state(ch), [0], (dim, dim)).amps
            rhs = sum(tensor(v, b).amps for v, b in zip(measurement_basis(t), branch_states(ch, t)))
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst <= 1e-12, f"max residual {worst:.2e}"


def _protocols(rng, draws):
    worst = 0.0
    for dim in (4, 8):
        for _ in range(draws):
            ch = random_channel(dim, rng)
            for channel in (ChannelSpec.maximal(dim), ch):
                for real in (False, True):
                    t = random_target(dim, rng, real=real)
                    runs = run_exact(channel, t, real)
                    expect = (dim if real else 1) * channel.smallest**2
                    worst = max(worst, abs(math.fsum(r.joint_probability for r in runs) - 1.0),
                                abs(success_probability(runs) - expect))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def _mesh(rng, draws):
    worst = 0.0
    for dim in (4, 8):
        for _ in range(draws):
            Q, R = np.linalg.qr(rng.normal(size=(dim, dim)))
            Q = Q * np.sign(np.diag(R))
            worst = max(worst, float(np.max(np.abs(reconstruct(decompose(Q)).matrix - Q))))
    return worst <= 1e-10, f"max round-trip error {worst:.2e}"


def _ideal_fidelity(rng, draws):
    worst = 0.0
    for _ in range(draws):
        theta, phi = rng.uniform(0, 2 * math.pi, size=2)
        worst = max(worst, abs(average_fidelity(phi, theta, ImperfectionParams()) - 1.0))
    return worst <= 1e-9, f"max |F - 1| {worst:.2e}"


def _concentration(rng, draws):
    worst = 0.0
    for dim in (4, 8):
        for _ in range(draws):
            ch = random_channel(dim, rng)
            _, _, p = vbs_concentrate(ch)
            runs = run_exact(ch, random_target(dim, rng, real=True), True)
            worst = max(worst, abs(p - success_probability(runs)))
    return worst <= 1e-12, f"max gap {worst:.2e}"


def _sampling(rng, draws):
    worst = 0.0
    for dim in (4, 8):
        ch = random_channel(dim, rng)
        t = random_target(dim, rng, real=True)
        trials = 20_000
        sampled = run_sampled(ch, t, True, trials, int(rng.integers(2**31)))
        for r in run_exact(ch, t, True):
            sigma = math.sqrt(r.joint_probability * (1 - r.joint_probability) / trials)
            freq = sampled.frequency((r.alice_outcome, r.bob_ancilla_outcome))
            worst = max(worst, abs(freq - r.joint_probability) / max(sigma, 1e-300))
    return worst <= 5.0, f"max deviation {worst:.2f} sigma"


CHECKS: dict[str, Callable] = {
    "basis orthonormality": _basis,
    "basis completeness": _completeness,
    "correction identity": _corrections,
    "filter unitarity and action": _filters,
    "pair expansion identity": _expansion,
    "protocol probabilities": _protocols,
    "mesh round trip": _mesh,
    "ideal block fidelity": _ideal_fidelity,
    "concentration equivalence": _concentration,
    "sampling consistency": _sampling,
}


def run_checks(draws: int = 100, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, fn in CHECKS.items():
        passed, detail = fn(rng, draws)
        results.append(CheckResult(name, bool(passed), detail))
    return results
