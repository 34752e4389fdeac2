"""Command-line front end.

    qudit-rsp run <config.yaml>
    qudit-rsp sweep <config.yaml>
    qudit-rsp decompose <matrix-file> -o <mesh-file>
    qudit-rsp check [--report PATH]

Exit codes: 0 success, 2 invalid input, 3 numerical invariant violated.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .core import gram_deviation
from .optical import DEFAULT_PANELS, MIN_PANELS, decompose, fidelity_surface, reconstruct, vbs_concentrate
from .protocols import (
    ChannelSpec,
    SpecError,
    TargetSpec,
    basis_matrix,
    measurement_basis,
    run_exact,
    run_sampled,
    success_probability,
)

log = logging.getLogger("qudit_rsp")

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT = 0, 2, 3
MODES = ("rsp-exact", "rsp-sample", "basis-check", "decompose", "fidelity-sweep", "concentrate")
TOL_SUM = 1e-12


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    epsilons: tuple[float, ...]
    deltas: tuple[float, ...]
    theta: float = math.pi / 3
    phi: float = 0.0
    panels: int = DEFAULT_PANELS
    workers: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    target: TargetSpec | None = None
    channel: ChannelSpec | None = None
    real_subspace: bool = False
    trials: int = 100_000
    seed: int | None = None
    workers: int = 1
    sweep: SweepGrid | None = None
    transform: str = "analyzer"
    output_path: str | None = None
    extras: dict[str, Any] = field(default_factory=dict)


# -- config parsing ----------------------------------------------------------

def _floats(value, name, errors) -> list[float] | None:
    if not isinstance(value, (list, tuple)) or not value:
        errors.append(f"{name}: expected a non-empty list of numbers")
        return None
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        errors.append(f"{name}: entries must be numbers")
        return None


def _int(section, key, name, errors, default=None, minimum=None):
    value = section.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        errors.append(f"{name}: expected an integer, got {value!r}")
        return None
    if minimum is not None and value < minimum:
        errors.append(f"{name}: must be >= {minimum}, got {value}")
        return None
    return value


def _parse_target(raw, errors) -> TargetSpec | None:
    if not isinstance(raw, dict):
        errors.append("target: expected a mapping")
        return None
    amps = _floats(raw.get("amps"), "target.amps", errors)
    phases = raw.get("phases")
    if phases is not None:
        phases = _floats(phases, "target.phases", errors)
    level = _int(raw, "level", "target.level", errors)
    if amps is None:
        return None
    total = math.fsum(a * a for a in amps)
    if abs(total - 1.0) > 1e-12:
        errors.append(f"target.amps: squared amplitudes sum to {total:.15g}, expected 1")
        return None
    try:
        return TargetSpec(tuple(amps), None if phases is None else tuple(phases), level)
    except SpecError as exc:
        errors.append(f"target: {exc}")
        return None


def _parse_channel(raw, errors) -> ChannelSpec | None:
    if not isinstance(raw, dict):
        errors.append("channel: expected a mapping")
        return None
    kind = raw.get("kind", "partial")
    if kind == "maximal":
        dim = _int(raw, "dim", "channel.dim", errors)
        if dim is None:
            errors.append("channel.dim: required for a maximal channel")
            return None
        if dim not in (4, 8):
            errors.append(f"channel.dim: must be 4 or 8, got {dim}")
            return None
        return ChannelSpec.maximal(dim)
    if kind != "partial":
        errors.append(f"channel.kind: unknown kind {kind!r}")
        return None
    a = _floats(raw.get("schmidt"), "channel.schmidt", errors)
    if a is None:
        return None
    total = math.fsum(x * x for x in a)
    if abs(total - 1.0) > 1e-12:
        errors.append(f"channel.schmidt: squared coefficients sum to {total:.15g}, expected 1")
        return None
    try:
        return ChannelSpec.partial(tuple(a))
    except SpecError as exc:
        errors.append(f"channel.schmidt: {exc}")
        return None


def _parse_axis(raw, name, errors) -> tuple[float, ...] | None:
    if not isinstance(raw, dict):
        errors.append(f"{name}: expected a mapping with min, max, steps")
        return None
    try:
        lo, hi = float(raw.get("min", 0.0)), float(raw["max"])
    except (KeyError, TypeError, ValueError):
        errors.append(f"{name}: min/max must be numbers (max is required)")
        return None
    steps = _int(raw, "steps", f"{name}.steps", errors, minimum=1)
    if steps is None:
        if "steps" not in raw:
            errors.append(f"{name}.steps: required")
        return None
    if hi < lo:
        errors.append(f"{name}: max {hi} is below min {lo}")
        return None
    return tuple(float(x) for x in np.linspace(lo, hi, steps))


def _parse_sweep(raw, errors) -> SweepGrid | None:
    if not isinstance(raw, dict):
        errors.append("sweep: expected a mapping")
        return None
    eps = _parse_axis(raw.get("epsilon"), "sweep.epsilon", errors)
    delta = _parse_axis(raw.get("delta"), "sweep.delta", errors)
    panels = _int(raw, "panels", "sweep.panels", errors, DEFAULT_PANELS, MIN_PANELS)
    workers = _int(raw, "workers", "sweep.workers", errors, 1, 1)
    try:
        theta = float(raw.get("theta", math.pi / 3))
        phi = float(raw.get("phi", 0.0))
    except (TypeError, ValueError):
        errors.append("sweep.theta/phi: must be numbers")
        return None
    if eps is not None and any(e <= -1.0 for e in eps):
        errors.append("sweep.epsilon: values must exceed -1")
        return None
    if eps is None or delta is None or panels is None or workers is None:
        return None
    return SweepGrid(eps, delta, theta, phi, panels, workers)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML experiment config, reporting every error found."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"config: not valid YAML ({exc})"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config: top level must be a mapping"])

    errors: list[str] = []
    mode = raw.get("mode")
    if mode not in MODES:
        errors.append(f"mode: unknown mode {mode!r}; expected one of {', '.join(MODES)}")

    target = _parse_target(raw["target"], errors) if "target" in raw else None
    channel = _parse_channel(raw["channel"], errors) if "channel" in raw else None
    sweep = _parse_sweep(raw["sweep"], errors) if "sweep" in raw else None
    real = raw.get("real_subspace", False)
    if not isinstance(real, bool):
        errors.append("real_subspace: expected true or false")
        real = False
    trials = _int(raw, "trials", "trials", errors, 100_000, 1)
    seed = _int(raw, "seed", "seed", errors, None, 0)
    workers = _int(raw, "workers", "workers", errors, 1, 1)
    transform = raw.get("transform", "analyzer")
    if transform not in ("analyzer", "basis"):
        errors.append(f"transform: expected 'analyzer' or 'basis', got {transform!r}")
    output = raw.get("output_path")
    if output is not None and not isinstance(output, str):
        errors.append("output_path: expected a string")

    needs = {
        "rsp-exact": ("target", "channel"),
        "rsp-sample": ("target", "channel", "seed"),
        "basis-check": ("target",),
        "decompose": ("target",),
        "fidelity-sweep": ("sweep",),
        "concentrate": ("channel",),
    }.get(mode, ())
    for key in needs:
        if key not in raw:
            errors.append(f"{key}: required for mode {mode}")
    if mode in ("rsp-exact", "rsp-sample") and target is not None and channel is not None:
        if target.dim != channel.dim:
            errors.append(f"channel: dim {channel.dim} does not match target dim {target.dim}")
        if real and not target.is_real:
            errors.append("real_subspace: requires every target phase to be zero")
    if mode == "concentrate" and channel is not None and channel.kind != "partial":
        errors.append("channel.kind: concentration needs a partial channel")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(mode, target, channel, real, trials or 100_000, seed,
                            workers or 1, sweep, transform, output)


# -- execution ---------------------------------------------------------------

def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InvariantViolation(message)


def _run_exact(cfg: ExperimentConfig) -> dict:
    runs = run_exact(cfg.channel, cfg.target, cfg.real_subspace)
    total = math.fsum(r.joint_probability for r in runs)
    _require(abs(total - 1.0) <= TOL_SUM, f"branch probabilities sum to {total!r}")
    agg = success_probability(runs)
    _require(abs(agg - math.fsum(r.joint_probability for r in runs if r.success)) <= TOL_SUM,
             "aggregate disagrees with success branches")
    return {
        "branches": [{
            "alice_outcome": r.alice_outcome,
            "ancilla_outcome": r.bob_ancilla_outcome,
            "corrections": list(r.corrections_applied),
            "joint_probability": r.joint_probability,
            "success": r.success,
            "fidelity": r.fidelity,
        } for r in runs],
        "aggregate_success_probability": agg,
    }


def _run_sample(cfg: ExperimentConfig) -> dict:
    res = run_sampled(cfg.channel, cfg.target, cfg.real_subspace, cfg.trials, cfg.seed, cfg.workers)
    _require(sum(res.counts.values()) == cfg.trials, "histogram does not cover every trial")
    exact = {(r.alice_outcome, r.bob_ancilla_outcome): r for r in
             run_exact(cfg.channel, cfg.target, cfg.real_subspace)}
    _require(set(res.counts) <= set(exact), "sampled a branch with zero exact probability")
    return {
        "trials": cfg.trials,
        "seed": cfg.seed,
        "branches": [{
            "alice_outcome": key[0],
            "ancilla_outcome": key[1],
            "count": res.counts.get(key, 0),
            "frequency": res.frequency(key),
            "exact_probability": r.joint_probability,
            "success": r.success,
        } for key, r in exact.items()],
        "success_frequency": res.successes / cfg.trials,
        "aggregate_success_probability": success_probability(exact.values()),
    }


def _run_basis_check(cfg: ExperimentConfig) -> dict:
    basis = measurement_basis(cfg.target)
    T = basis_matrix(cfg.target).matrix
    gram = gram_deviation(basis)
    orth = float(np.max(np.abs(T @ T.T - np.eye(cfg.target.dim))))
    _require(gram <= 1e-12 and orth <= 1e-12, f"basis not orthonormal ({gram:.2e}, {orth:.2e})")
    return {"gram_deviation": gram, "orthogonality_error": orth, "dim": cfg.target.dim}


def _run_decompose(cfg: ExperimentConfig) -> tuple[dict, str]:
    T = basis_matrix(cfg.target).matrix
    U = T.T if cfg.transform == "analyzer" else T
    plan = decompose(U)
    err = float(np.max(np.abs(reconstruct(plan).matrix - U)))
    _require(err <= 1e-10, f"mesh round trip error {err:.2e}")
    return {"transform": cfg.transform, "round_trip_error": err, "blocks": len(plan.blocks)}, plan.to_text()


def _run_sweep(cfg: ExperimentConfig) -> tuple[dict, list[tuple[float, float, float]]]:
    g = cfg.sweep
    F = fidelity_surface(g.epsilons, g.deltas, g.theta, g.phi, g.panels, g.workers)
    _require(bool(np.all((F >= 0.0) & (F <= 1.0 + 1e-9))), "average fidelity outside [0, 1]")
    rows = [(e, d, float(F[a, b])) for a, e in enumerate(g.epsilons) for b, d in enumerate(g.deltas)]
    summary = {"theta": g.theta, "phi": g.phi, "panels": g.panels, "points": len(rows),
               "min_avg_fidelity": float(F.min()), "max_avg_fidelity": float(F.max())}
    return summary, rows


def _run_concentrate(cfg: ExperimentConfig) -> dict:
    plan, state, p = vbs_concentrate(cfg.channel)
    _require(abs(p - plan.success_probability) <= TOL_SUM, "simulated and planned success differ")
    return {"reflectivities": list(plan.reflectivities), "leakage": list(plan.leakage),
            "aggregate_success_probability": p, "planned_success_probability": plan.success_probability}


def execute(cfg: ExperimentConfig) -> tuple[dict, list[Path]]:
    """Run one config; returns the result record and the files written."""
    start = time.perf_counter()
    text_out: str | None = None
    rows = None
    if cfg.mode == "rsp-exact":
        payload = _run_exact(cfg)
    elif cfg.mode == "rsp-sample":
        payload = _run_sample(cfg)
    elif cfg.mode == "basis-check":
        payload = _run_basis_check(cfg)
    elif cfg.mode == "decompose":
        payload, text_out = _run_decompose(cfg)
    elif cfg.mode == "fidelity-sweep":
        payload, rows = _run_sweep(cfg)
    else:
        payload = _run_concentrate(cfg)
    record = {"mode": cfg.mode, **payload, "timing_seconds": time.perf_counter() - start}

    written: list[Path] = []
    if cfg.output_path:
        out = Path(cfg.output_path)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "result.json"
        path.write_text(dump_record(record))
        written.append(path)
        if text_out is not None:
            (out / "mesh.txt").write_text(text_out)
            written.append(out / "mesh.txt")
        if rows is not None:
            write_csv(out / "fidelity.csv", rows)
            written.append(out / "fidelity.csv")
    return record, written


def dump_record(record: dict) -> str:
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


def write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", "delta", "avg_fidelity"])
        for e, d, f in rows:
            w.writerow([repr(float(e)), repr(float(d)), repr(float(f))])


# -- matrix files ------------------------------------------------------------

def _complex_token(tok: str) -> complex:
    t = tok.strip()
    if t.endswith("i"):
        t = t[:-1] + "j"
    return complex(t)


def read_matrix(text: str) -> np.ndarray:
    """Matrix file: ``dim`` on line 1, then ``dim`` rows of ``re+imi`` entries."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty matrix file")
    try:
        dim = int(lines[0].strip())
    except ValueError:
        raise ValueError(f"first line must be the dimension, got {lines[0]!r}") from None
    if len(lines) - 1 != dim:
        raise ValueError(f"expected {dim} rows, found {len(lines) - 1}")
    M = np.zeros((dim, dim), dtype=complex)
    for r, line in enumerate(lines[1:]):
        toks = line.split()
        if len(toks) != dim:
            raise ValueError(f"row {r}: expected {dim} entries, found {len(toks)}")
        try:
            M[r] = [_complex_token(t) for t in toks]
        except ValueError:
            raise ValueError(f"row {r}: unparseable entry in {line!r}") from None
    return M


def format_matrix(M: np.ndarray) -> str:
    lines = [str(M.shape[0])]
    for row in M:
        lines.append(" ".join(f"{z.real:.17g}{z.imag:+.17g}i" for z in np.asarray(row, dtype=complex)))
    return "\n".join(lines) + "\n"


# -- entry point -------------------------------------------------------------

def _cmd_run(args, force_mode: str | None = None) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        if force_mode is not None:
            raw = yaml.safe_load(text)
            if isinstance(raw, dict) and raw.get("mode", force_mode) != force_mode:
                raise ConfigError([f"mode: '{force_mode}' command got mode {raw['mode']!r}"])
            if isinstance(raw, dict):
                raw["mode"] = force_mode
                text = yaml.safe_dump(raw)
        cfg = parse_config(text)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if args.output:
        cfg = ExperimentConfig(**{**cfg.__dict__, "output_path": args.output})
    try:
        record, written = execute(cfg)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    sys.stdout.write(dump_record(record))
    for p in written:
        log.info("wrote %s", p)
    return EXIT_OK


def _cmd_decompose(args) -> int:
    try:
        M = read_matrix(Path(args.matrix).read_text(encoding="utf-8"))
        plan = decompose(M)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    err = float(np.max(np.abs(reconstruct(plan).matrix - M)))
    if err > 1e-10:
        print(f"invariant violated: round trip error {err:.2e}", file=sys.stderr)
        return EXIT_INVARIANT
    text = plan.to_text()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_check(args) -> int:
    from .audit import render_report
    from .checks import run_checks

    results = run_checks(args.draws, args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    if args.report:
        Path(args.report).write_text(render_report(args.audit_draws))
        print(f"audit report written to {args.report}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qudit-rsp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config")
    run.add_argument("-o", "--output", help="output directory (overrides output_path)")

    sweep = sub.add_parser("sweep", help="average-fidelity sweep from a config")
    sweep.add_argument("config")
    sweep.add_argument("-o", "--output", help="output directory (overrides output_path)")

    dec = sub.add_parser("decompose", help="factor a unitary matrix file into a mesh")
    dec.add_argument("matrix")
    dec.add_argument("-o", "--output", help="mesh file (default: stdout)")

    chk = sub.add_parser("check", help="run the invariant suite")
    chk.add_argument("--draws", type=int, default=100)
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--report", help="write the transcription audit here")
    chk.add_argument("--audit-draws", type=int, default=1000)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "sweep":
        return _cmd_run(args, "fidelity-sweep")
    if args.command == "decompose":
        return _cmd_decompose(args)
    return _cmd_check(args)


if __name__ == "__main__":
    sys.exit(main())
