"""Command-line experiment runner.

Every command is determined by its flags (or ``--config`` file) and
``--seed``. Data goes out as CSV, single results as ``key=value`` lines;
floats are printed with 12 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import applications as apps
from .circuit import analytic_joint_distribution, state_traces
from .coefficients import (
    MODES,
    STANDARD,
    VARIANT,
    PolySpec,
    entropy_taylor_spec,
    load_spec,
)
from .errors import QSFError
from .sampler import baseline_generalized_swap, estimate, expected_copies_per_shot, sample_tally, write_shots
from .states import DensityMatrix, load_state, random_state
from .stateprep import (
    EXACT,
    HADAMARD,
    PQC,
    exact_prep,
    hadamard_prep,
    load_params,
    pqc_prep,
    save_params,
    train_pqc,
)

CONVERGENCE_COLUMNS = [
    "shots",
    "repeat",
    "estimate",
    "exact_truncated",
    "exact_full",
    "abs_error",
    "copies_consumed",
    "mode",
]
BASELINE_COLUMNS = [
    "method",
    "n",
    "budget",
    "repeats",
    "shots",
    "copies_consumed",
    "mse",
    "mean_variance",
    "copies_at_unit_mse",
]
DEFAULT_SCHEDULE = "100,1000,10000,100000,1000000"
METHODS = ("baseline", "qsf_pessimistic", "qsf_reuse")


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def summary_text(record: dict) -> str:
    return "".join(f"{k}={fmt(v)}\n" for k, v in record.items())


def csv_text(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row[c]) for c in columns])
    return buf.getvalue()


def _int_list(text: str) -> list[int]:
    return [int(float(tok)) for tok in text.split(",") if tok.strip()]


# --- state and prep sources ------------------------------------------------


def make_state(kind: str, d: int, seed: int, rank: int | None = None, path=None, diag=None) -> DensityMatrix:
    if path:
        return load_state(path)
    if diag:
        return DensityMatrix.from_diagonal([float(x) for x in diag.split(",")])
    if kind == "random":
        return random_state(d, rank, seed)
    if kind == "mixed":
        return DensityMatrix.maximally_mixed(d)
    if kind == "pure":
        return random_state(d, 1, seed)
    raise QSFError(f"unknown state kind {kind!r}")


def _state(args) -> DensityMatrix:
    seed = args.seed if args.state_seed is None else args.state_seed
    return make_state(args.state, args.d, seed, args.rank, args.state_file, args.diag)


def _sigma(args) -> DensityMatrix:
    seed = args.seed + 1 if args.sigma_seed is None else args.sigma_seed
    return make_state(args.sigma, args.d, seed, args.rank, args.sigma_file, args.sigma_diag)


def _prep(args, spec: PolySpec):
    kind = args.prep or (EXACT if spec.mode == STANDARD else HADAMARD)
    if (kind == HADAMARD) != (spec.mode == VARIANT):
        raise QSFError(f"--prep {kind} does not match --mode {spec.mode}")
    if kind == HADAMARD:
        return hadamard_prep(spec.n)
    if kind == EXACT:
        return exact_prep(spec.amplitudes())
    target = spec.amplitudes()
    if args.params_file:
        return pqc_prep(load_params(args.params_file), target)
    params, _ = train_pqc(target, args.layers, seed=args.seed, restarts=args.restarts)
    return pqc_prep(params, target)


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _shot_sink(args):
    if not args.dump_shots:
        return None
    return lambda batch: write_shots(batch, args.dump_shots)


# --- commands --------------------------------------------------------------


def cmd_estimate_poly(args) -> int:
    if not args.spec_file:
        raise QSFError("estimate-poly needs --spec-file")
    spec = load_spec(args.spec_file, args.mode)
    rho = _state(args)
    prep = _prep(args, spec)
    shots = args.shots or 100_000
    report = apps.estimate_polynomial(
        spec, rho, shots, args.seed, prep, args.method, args.workers, args.pessimistic, _shot_sink(args)
    )
    record = report.as_record()
    record["prep"] = prep.kind
    record["gamma"] = spec.gamma
    record["scale"] = spec.scale()
    _emit(args, summary_text(record))
    return 0


def cmd_entropy(args) -> int:
    rho = _state(args)
    prep = None
    if args.prep == PQC:
        order = args.degree
        if order is None:
            raise QSFError("--prep pqc needs an explicit --degree")
        prep = _prep(args, entropy_taylor_spec(order, args.mode or STANDARD))
    report = apps.estimate_entropy(
        rho,
        args.epsilon,
        args.delta,
        args.seed,
        order=args.degree,
        shots=args.shots,
        mode=args.mode or STANDARD,
        prep=prep,
        workers=args.workers,
        pessimistic=args.pessimistic,
        max_shots=args.max_shots,
        shot_sink=_shot_sink(args),
    )
    _emit(args, summary_text(report.as_record()))
    return 0


def cmd_fidelity(args) -> int:
    rho, sigma = _state(args), _sigma(args)
    report = apps.estimate_fidelity(
        rho,
        sigma,
        args.epsilon,
        args.delta,
        args.seed,
        order=args.degree,
        shots=args.shots,
        mode=args.mode or STANDARD,
        workers=args.workers,
        pessimistic=args.pessimistic,
        max_shots=args.max_shots,
        shot_sink=_shot_sink(args),
    )
    _emit(args, summary_text(report.as_record()))
    return 0


def cmd_maxeig(args) -> int:
    rho = _state(args)
    try:
        result = apps.max_eigenvalue(
            rho,
            tol=args.tol,
            degree=args.degree or 16,
            shots=args.shots or 100_000,
            width_cutoff=args.width_cutoff,
            seed=args.seed,
            probes=args.probes,
            workers=args.workers,
        )
    except QSFError as exc:
        raise QSFError(f"search failed: {exc}") from None
    record = {
        "beta": result.beta,
        "degenerate": result.degenerate,
        "terminated_by": result.terminated_by,
        "bracket_left": result.bracket[0],
        "bracket_right": result.bracket[1],
        "probes": result.probes,
        "lambda_max_exact": float(rho.eigenvalues[-1]),
    }
    text = summary_text(record) + "step,beta,o_beta,action\n" + "".join(f"{ln}\n" for ln in result.history_lines())
    _emit(args, text)
    return 0


def convergence_row(task) -> dict:
    """One (shots, repeat, mode) cell of a convergence sweep."""
    application, rho_m, sigma_m, degree, shots, repeat, mode, seed = task
    rho = DensityMatrix(rho_m)
    seed_key = [seed, shots, repeat, MODES.index(mode)]
    if application == "entropy":
        rep = apps.estimate_entropy(rho, 0.1, 0.05, seed_key, order=degree, shots=shots, mode=mode)
        value = rep.estimate
    else:
        rep = apps.estimate_fidelity(rho, DensityMatrix(sigma_m), 0.1, 0.05, seed_key, order=degree, shots=shots, mode=mode)
        value = rep.raw_estimate
    return {
        "shots": shots,
        "repeat": repeat,
        "estimate": value,
        "exact_truncated": rep.exact_value,
        "exact_full": rep.reference_value,
        "abs_error": abs(value - rep.exact_value),
        "copies_consumed": rep.copies.fresh_copies_total,
        "mode": mode,
    }


def _run_tasks(fn, tasks, workers: int) -> list:
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def convergence_rows(
    application: str,
    rho: DensityMatrix,
    sigma: DensityMatrix | None,
    degree: int,
    schedule: Sequence[int],
    repeats: int,
    seed: int,
    modes: Sequence[str] = MODES,
    workers: int = 1,
) -> list[dict]:
    if application not in ("entropy", "fidelity"):
        raise QSFError(f"unknown application {application!r}")
    sigma_m = None if sigma is None else np.array(sigma.matrix)
    tasks = [
        (application, np.array(rho.matrix), sigma_m, degree, shots, r, mode, seed)
        for shots in schedule
        for r in range(repeats)
        for mode in modes
    ]
    rows = _run_tasks(convergence_row, tasks, workers)
    return sorted(rows, key=lambda row: (row["shots"], row["repeat"], MODES.index(row["mode"])))


def mean_abs_error(rows: Sequence[dict]) -> dict[tuple[int, str], float]:
    groups: dict[tuple[int, str], list[float]] = {}
    for row in rows:
        groups.setdefault((row["shots"], row["mode"]), []).append(row["abs_error"])
    return {k: float(np.mean(v)) for k, v in sorted(groups.items())}


def cmd_convergence(args) -> int:
    rho = _state(args)
    sigma = _sigma(args) if args.application == "fidelity" else None
    rows = convergence_rows(
        args.application,
        rho,
        sigma,
        args.degree or 6,
        _int_list(args.schedule),
        args.repeats,
        args.seed,
        [args.mode] if args.mode else MODES,
        args.workers,
    )
    text = csv_text(CONVERGENCE_COLUMNS, rows)
    if args.out:
        Path(args.out).write_text(text)
        summary = {f"mean_abs_error_{mode}_{shots}": v for (shots, mode), v in mean_abs_error(rows).items()}
        sys.stdout.write(summary_text(summary))
    else:
        sys.stdout.write(text)
    return 0


def entropy_style_spec(n: int) -> PolySpec:
    """Spec with nonzero powers 1..n: the order-(n-1) entropy series, or tr(rho) for n = 1."""
    if n < 1:
        raise QSFError(f"n must be >= 1, got {n}")
    if n == 1:
        return PolySpec({1: 1.0})
    return entropy_taylor_spec(n - 1)


def baseline_cell(task) -> dict:
    """All repeats of one (method, n, budget) cell."""
    method, n, budget, repeats, rho_m, seed = task
    rho = DensityMatrix(rho_m)
    spec = entropy_style_spec(n)
    traces = state_traces(spec, rho)
    exact = spec.evaluate_traces(traces)
    if method == "baseline":
        shots = budget // sum(j for j, a in spec.alphas.items() if a != 0.0)
    elif method == "qsf_pessimistic":
        shots = budget // spec.degree
    else:
        shots = int(budget // expected_copies_per_shot(spec))
    if shots < 1:
        raise QSFError(f"budget {budget} too small for n={n}")
    errors, variances, copies = [], [], []
    dist = analytic_joint_distribution(spec, traces)
    for r in range(repeats):
        key = [seed, METHODS.index(method), n, budget, r]
        if method == "baseline":
            rep = baseline_generalized_swap(spec, rho, shots, key, traces)
        else:
            rep = estimate(sample_tally(dist, shots, key), spec, pessimistic=(method == "qsf_pessimistic"))
        errors.append((rep.estimate - exact) ** 2)
        variances.append(rep.std_error**2)
        copies.append(rep.copies.fresh_copies_total)
    mean_copies = float(np.mean(copies))
    mean_var = float(np.mean(variances))
    return {
        "method": method,
        "n": n,
        "budget": budget,
        "repeats": repeats,
        "shots": rep.shots,
        "copies_consumed": mean_copies,
        "mse": float(np.mean(errors)),
        "mean_variance": mean_var,
        "copies_at_unit_mse": mean_var * mean_copies,
    }


def baseline_rows(
    rho: DensityMatrix,
    degrees: Sequence[int],
    budgets: Sequence[int],
    repeats: int,
    seed: int,
    workers: int = 1,
) -> list[dict]:
    tasks = [(m, n, b, repeats, np.array(rho.matrix), seed) for m in METHODS for n in degrees for b in budgets]
    rows = _run_tasks(baseline_cell, tasks, workers)
    return sorted(rows, key=lambda row: (row["method"], row["n"], row["budget"]))


def matched_mse_ratios(rows: Sequence[dict], against: str = "qsf_reuse") -> dict[int, float]:
    """Baseline over QSF copies needed for equal MSE, from the plug-in variances.

    Both estimators have variance proportional to 1/copies, so copies at a
    target MSE m are (variance * copies) / m; m cancels in the ratio. Values
    are averaged over the budgets.
    """
    unit: dict[tuple[str, int], list[float]] = {}
    for row in rows:
        unit.setdefault((row["method"], row["n"]), []).append(row["copies_at_unit_mse"])
    out = {}
    for (method, n), vals in sorted(unit.items()):
        if method != "baseline":
            continue
        qsf = float(np.mean(unit[(against, n)]))
        base = float(np.mean(vals))
        out[n] = base / qsf if qsf > 0 else (1.0 if base == 0 else math.inf)
    return out


def cmd_compare_baselines(args) -> int:
    rho = _state(args)
    rows = baseline_rows(rho, _int_list(args.degrees), _int_list(args.budgets), args.repeats, args.seed, args.workers)
    text = csv_text(BASELINE_COLUMNS, rows)
    if args.out:
        Path(args.out).write_text(text)
        summary = {f"matched_mse_ratio_n{n}": v for n, v in matched_mse_ratios(rows).items()}
        summary.update({f"matched_mse_ratio_pessimistic_n{n}": v for n, v in matched_mse_ratios(rows, "qsf_pessimistic").items()})
        sys.stdout.write(summary_text(summary))
    else:
        sys.stdout.write(text)
    return 0


def cmd_train_prep(args) -> int:
    if args.spec_file:
        spec = load_spec(args.spec_file)
    else:
        spec = entropy_taylor_spec(args.degree or 6)
    target = spec.amplitudes()
    params, infidelity = train_pqc(target, args.layers, seed=args.seed, restarts=args.restarts)
    if args.params_out:
        save_params(params, args.params_out)
    record = {"layers": params.layers, "qubits": params.qubits, "infidelity": infidelity}
    _emit(args, summary_text(record))
    return 0


# --- parser ----------------------------------------------------------------

COMMANDS = {
    "estimate-poly": cmd_estimate_poly,
    "entropy": cmd_entropy,
    "fidelity": cmd_fidelity,
    "maxeig": cmd_maxeig,
    "convergence": cmd_convergence,
    "compare-baselines": cmd_compare_baselines,
    "train-prep": cmd_train_prep,
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; flags override its values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shots", type=int)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--d", type=int, default=2, help="state dimension for generated states")
    p.add_argument("--degree", type=int, help="truncation order or polynomial degree")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--prep", choices=(EXACT, PQC, HADAMARD))
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--prep-params", "--params-file", dest="params_file", help="trained PQC parameter file")
    p.add_argument("--state", default="random", choices=("random", "mixed", "pure"))
    p.add_argument("--state-seed", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--diag", help="comma-separated diagonal state, e.g. 0.7,0.3")
    p.add_argument("--state-file")
    p.add_argument("--spec-file")
    p.add_argument("--out")
    p.add_argument("--dump-shots")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--pessimistic", action="store_true", help="charge the whole copy register per shot")


def _two_state(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", default="random", choices=("random", "mixed", "pure"))
    p.add_argument("--sigma-seed", type=int)
    p.add_argument("--sigma-diag")
    p.add_argument("--sigma-file")


def _precision(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--max-shots", type=int, default=apps.DEFAULT_MAX_SHOTS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsflab", description="QSF estimation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}
    for name in COMMANDS:
        p = sub.add_parser(name)
        _common(p)
        subs[name] = p
    subs["estimate-poly"].add_argument("--method", choices=("analytic", "full"), default="analytic")
    _precision(subs["entropy"])
    _precision(subs["fidelity"])
    _two_state(subs["fidelity"])
    _two_state(subs["convergence"])
    subs["convergence"].add_argument("--application", choices=("entropy", "fidelity"), default="entropy")
    subs["convergence"].add_argument("--schedule", default=DEFAULT_SCHEDULE, help="comma-separated shot counts")
    subs["compare-baselines"].add_argument("--degrees", default="2,4,8")
    subs["compare-baselines"].add_argument("--budgets", default="100000,1000000")
    maxeig = subs["maxeig"]
    maxeig.add_argument("--tol", type=float)
    maxeig.add_argument("--width-cutoff", type=float, default=2.0**-8)
    maxeig.add_argument("--probes", choices=(apps.EXACT_PROBES, apps.SAMPLED_PROBES), default=apps.SAMPLED_PROBES)
    subs["train-prep"].add_argument("--params-out")
    return parser


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise QSFError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        config = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(set(config) - set(known))
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        for key, value in config.items():
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                config[key] = value.lower() in ("1", "true", "yes")
        sub.set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (QSFError, ArithmeticError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
