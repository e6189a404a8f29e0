"""Command-line front end.

Exit codes: 0 success, 1 input or domain error, 2 infeasible or unstable,
3 internal solver failure. JSON goes to standard output with every float
written to 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .design import check_feasible, design_for_performance, minimize_sensitivity
from .empirical import bound_vs_empirical_report, simulate_observer, simulate_plant
from .errors import (
    BoundViolationError,
    ConvergenceError,
    DimensionError,
    DomainError,
    InfeasibleError,
    NonFiniteError,
    ObserverError,
    StabilityError,
)
from .linalg import as_vector, is_nonnegative, matrix_from_json
from .mechanism import NoiseSpec, PrivacyParams, calibrate, kappa
from .sensitivity import AdjacencyParams, ObserverSpec, l2_sensitivity_bound_squared

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def format_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits; non-finite floats become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {format_json(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(format_json(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + format_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _read_json(path: str, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DomainError(f"{what}: cannot read {path} ({exc.strerror})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(f"{what}: malformed JSON in {path} ({exc})") from None


def load_system(path: str, *, positive: bool = True):
    """Read ``{"name", "A", "C"}`` with A and C in the matrix format."""
    obj = _read_json(path, "system")
    if not isinstance(obj, dict) or "A" not in obj or "C" not in obj:
        raise DomainError("system: expected an object with A and C matrices")
    A = matrix_from_json(obj["A"], "A")
    C = matrix_from_json(obj["C"], "C")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"system: A must be square, got {A.shape}")
    if C.shape[1] != n:
        raise DimensionError(f"system: C must have {n} columns, got {C.shape}")
    if positive and not (is_nonnegative(A) and is_nonnegative(C)):
        raise DomainError("system: A and C must be entrywise nonnegative")
    return A, C, str(obj.get("name", Path(path).stem))


def load_gain(path: str, A, C):
    L = matrix_from_json(_read_json(path, "gain"), "L")
    if L.shape != (A.shape[0], C.shape[0]):
        raise DimensionError(f"gain: L must be {A.shape[0]}x{C.shape[0]}, got {L.shape}")
    return L


def _parse_vector(text: str, name: str):
    try:
        values = json.loads(text) if text.strip().startswith("[") else \
            [float(t) for t in text.split(",")]
    except ValueError:
        raise DomainError(f"{name}: expected comma-separated numbers or a JSON list") from None
    return as_vector(values, name)


def _adjacency(args) -> AdjacencyParams:
    return AdjacencyParams(args.K, args.alpha)


def trajectory_csv(x, z, zhat) -> str:
    n = x.dim
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step"] + [f"x_{i + 1}" for i in range(n)]
                    + [f"z_{i + 1}" for i in range(n)] + [f"zhat_{i + 1}" for i in range(n)])
    for k in range(x.steps):
        row = np.concatenate([x.values[k], z.values[k], zhat.values[k]])
        writer.writerow([k] + [format(float(v), ".17g") for v in row])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    A, C, name = load_system(args.system, positive=False)
    L = load_gain(args.gain, A, C)
    adj = _adjacency(args)
    verdict = check_feasible(A, C, L)
    sens = None
    if verdict.contraction:
        rep = l2_sensitivity_bound_squared(ObserverSpec(A, C, L), adj)
        sens = {
            "N": rep.N,
            "l2_bound_squared": rep.l2_bound_squared,
            "l2_bound": rep.l2_bound,
            "l1_bound": rep.l1_bound,
            "H_value": rep.H_value,
            "L_norm": rep.L_norm,
        }
    out = {
        "system": name,
        "K": adj.K,
        "alpha": adj.alpha,
        "feasibility": {
            "lc_nonneg": verdict.lc_nonneg,
            "a_minus_lc_nonneg": verdict.a_minus_lc_nonneg,
            "contraction": verdict.contraction,
            "N": verdict.N,
            "feasible": verdict.feasible,
        },
        "sensitivity": sens,
    }
    print(format_json(out))
    return EXIT_OK if verdict.feasible else EXIT_INFEASIBLE


def _run_design(A, C, args):
    if args.fix_performance is not None:
        return design_for_performance(A, C, args.fix_performance, args.alpha, args.K,
                                      seed=args.seed)
    return minimize_sensitivity(A, C, _adjacency(args), args.grid, args.refine_tol,
                                seed=args.seed)


def cmd_design(args) -> int:
    A, C, name = load_system(args.system)
    _adjacency(args)
    result = _run_design(A, C, args)
    print(format_json({"system": name, **result.to_dict()}))
    return EXIT_SOLVER if result.status == "max-iter" else EXIT_OK


def cmd_calibrate(args) -> int:
    priv = PrivacyParams(args.epsilon, args.delta)
    spec = calibrate(priv, args.delta_G, args.dim, args.seed)
    print(format_json({
        "kappa": kappa(priv),
        "sigma": spec.sigma,
        "epsilon": priv.epsilon,
        "delta": priv.delta,
        "delta_G": args.delta_G,
    }))
    return EXIT_OK


def _noise_for(spec: ObserverSpec, args) -> NoiseSpec | None:
    if args.sigma is not None:
        return NoiseSpec(args.sigma, spec.n, args.seed)
    if args.epsilon is None or args.delta is None:
        return None
    bound = l2_sensitivity_bound_squared(spec, _adjacency(args)).l2_bound
    if bound == 0.0:
        return None
    return calibrate(PrivacyParams(args.epsilon, args.delta), bound, spec.n, args.seed)


def cmd_simulate(args) -> int:
    A, C, _ = load_system(args.system, positive=False)
    L = load_gain(args.gain, A, C)
    spec = ObserverSpec(A, C, L)
    x0 = _parse_vector(args.x0, "x0")
    z0 = _parse_vector(args.z0, "z0") if args.z0 else np.zeros(spec.n)
    x, y = simulate_plant(A, C, x0, args.steps)
    z = simulate_observer(spec, y, z0)
    noise = _noise_for(spec, args)
    zhat = simulate_observer(spec, y, z0, noise) if noise is not None else z
    _emit(trajectory_csv(x, z, zhat), args.out)
    return EXIT_OK


def cmd_empirical(args) -> int:
    A, C, name = load_system(args.system, positive=False)
    L = load_gain(args.gain, A, C)
    report = bound_vs_empirical_report(ObserverSpec(A, C, L), _adjacency(args),
                                       args.horizon, args.trials, args.seed)
    print(format_json({"system": name, "K": args.K, "alpha": args.alpha, **report.to_dict()}))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    A, C, name = load_system(args.system)
    args.fix_performance = None
    stage = "design"
    try:
        result = _run_design(A, C, args)
        stage = "calibrate"
        priv = PrivacyParams(args.epsilon, args.delta)
        k = kappa(priv)
        spec = ObserverSpec(A, C, result.L_opt)
        noise = None
        if result.bound_squared > 0.0:
            noise = calibrate(priv, math.sqrt(result.bound_squared), spec.n, args.seed)
        stage = "simulate"
        x0 = _parse_vector(args.x0, "x0")
        x, y = simulate_plant(A, C, x0, args.steps)
        z = simulate_observer(spec, y, np.zeros(spec.n))
        zhat = simulate_observer(spec, y, np.zeros(spec.n), noise) if noise else z
    except ObserverError as exc:
        raise type(exc)(f"{stage}: {exc}") from None

    text = trajectory_csv(x, z, zhat)
    if args.out:
        Path(args.out).write_text(text)
    summary = {
        "system": name,
        "design": result.to_dict(),
        "kappa": k,
        "sigma": noise.sigma if noise else 0.0,
        "epsilon": priv.epsilon,
        "delta": priv.delta,
        "delta_G": math.sqrt(result.bound_squared),
        "steps": args.steps,
        "csv_rows": x.steps,
        "final_estimation_error": float(np.linalg.norm(z.values[-1] - x.values[-1])),
        "csv": args.out,
    }
    summary_text = format_json(summary) + "\n"
    if args.summary:
        Path(args.summary).write_text(summary_text)
    sys.stdout.write(summary_text)
    return EXIT_OK if result.status != "max-iter" else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dp-observer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def adjacency(p):
        p.add_argument("--K", type=float, required=True, help="initial deviation magnitude")
        p.add_argument("--alpha", type=float, required=True, help="geometric decay in [0, 1)")

    p = sub.add_parser("analyze", help="feasibility and sensitivity bounds for a given gain")
    p.add_argument("--system", required=True)
    p.add_argument("--gain", required=True)
    adjacency(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("design", help="minimise the sensitivity bound over positive gains")
    p.add_argument("--system", required=True)
    adjacency(p)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--refine-tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fix-performance", type=float, default=None, metavar="ETA_N",
                   help="minimise ||L|| subject to ||A - LC|| <= ETA_N instead")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("calibrate", help="Gaussian mechanism noise level")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--delta-G", dest="delta_G", type=float, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="plant, observer and noisy release as CSV")
    p.add_argument("--system", required=True)
    p.add_argument("--gain", required=True)
    p.add_argument("--x0", required=True)
    p.add_argument("--z0", default=None)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--sigma", type=float, default=None, help="release noise std (overrides privacy flags)")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--K", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("empirical", help="empirical sensitivity against the closed-form bound")
    p.add_argument("--system", required=True)
    p.add_argument("--gain", required=True)
    adjacency(p)
    p.add_argument("--horizon", type=int, default=400)
    p.add_argument("--trials", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_empirical)

    p = sub.add_parser("pipeline", help="design, calibrate and simulate end to end")
    p.add_argument("--system", required=True)
    adjacency(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--x0", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--refine-tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="trajectory CSV path")
    p.add_argument("--summary", default=None, help="summary JSON path")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (StabilityError, InfeasibleError) as exc:
        print(format_json({"status": "infeasible", "error": str(exc)}))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConvergenceError, BoundViolationError, NonFiniteError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
