"""Command-line pipeline: simulate -> detect -> evaluate, plus sweep and bench.

Exit codes: 0 success/converged, 2 usage or generation error, 3 numerical
divergence or non-convergence, 4 I/O or file-integrity error.  Outputs are
deterministic for fixed flags and seeds, and primary files are written
atomically (write-temp-then-rename) with no timestamps in their bodies.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    build_matrix,
    load_ratings,
    load_result,
    save_result,
    write_text_atomic,
)
from .errors import (
    CheckpointFormatError,
    CheckpointIntegrityError,
    DivergenceError,
    GenerationError,
    NumericalError,
    ParameterError,
    RatingFormatError,
    RatingRangeError,
    StateError,
)
from .evaluate import (
    DEFAULT_DETECTORS,
    label_users,
    report_to_dict,
    score,
    sweep_spam_ratio,
    sweep_to_csv,
)
from .simulate import (
    AttackSpec,
    attack_manifest,
    corrupt_cells,
    inject_profile_attacks,
    make_clean_dataset,
    mixed_attack,
    observe,
    verify_unorganized,
)
from .solver import (
    default_config,
    diagnostics_summary,
    rpca_preset,
    solve,
    validate_beta,
)

OUTDIR_ENV = "UMADETECT_OUTDIR"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUTDIR_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _json_default(value):
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _dump_json(path: Path, payload) -> None:
    write_text_atomic(
        path, json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"
    )


def _format_rating(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _parse_ratios(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ParameterError(f"ratio range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ParameterError("ratio step must be positive")
        ratios = []
        value = start
        while value <= stop + 1e-12:
            ratios.append(round(value, 12))
            value += step
        return ratios
    return [float(p) for p in text.split(",") if p.strip()]


def _strategy_mix(text: str | None) -> dict[str, float]:
    if not text:
        return {"random": 1 / 3, "average": 1 / 3, "bandwagon": 1 / 3}
    mix: dict[str, float] = {}
    for chunk in text.split(","):
        name, _, weight = chunk.partition("=")
        mix[name.strip()] = float(weight)
    return mix


def _attack_spec_from_args(args) -> AttackSpec:
    return AttackSpec(
        strategy_mix=_strategy_mix(getattr(args, "strategies", None)),
        spam_ratio=args.spam_ratio,
        filler_ratio=args.filler_ratio,
        direction=args.direction,
        gamma=args.gamma,
        epsilon=args.epsilon,
        popular_fraction=args.popular_fraction,
        bandwagon_selected=args.bandwagon_selected,
        seed=args.seed,
    )


def _write_ratings_tsv(path: Path, dataset, center: float) -> None:
    matrix = dataset.ratings.matrix
    flags = dataset.ratings.mask.array
    user_ids = dataset.ratings.user_ids
    item_ids = dataset.ratings.item_ids
    lines = []
    for i, j in np.argwhere(flags):
        source = matrix[i, j] + center
        lines.append(f"{user_ids[i]}\t{item_ids[j]}\t{_format_rating(source)}\t0")
    write_text_atomic(path, "\n".join(lines) + "\n")


def _write_labels(path: Path, user_ids, labels) -> None:
    _dump_json(
        path,
        {
            "user_ids": list(user_ids),
            "labels": [int(v) for v in labels],
            "attackers": int(np.sum(labels)),
        },
    )


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    spec = _attack_spec_from_args(args)
    clean = make_clean_dataset(
        args.m,
        args.n,
        args.rank,
        bound=args.bound,
        sigma=args.sigma,
        density=args.density,
        seed=args.seed,
        quality_spread=args.quality_spread,
    )
    if args.experiment == "hijack-mix":
        attacked = mixed_attack(clean, spec, hijack_share=args.hijack_share)
    else:
        attacked = inject_profile_attacks(clean, spec)

    check = verify_unorganized(attacked, spec)
    _write_ratings_tsv(out / "ratings.tsv", attacked, args.center)
    _write_labels(out / "truth_labels.json", attacked.ratings.user_ids, attacked.truth_labels)
    _dump_json(out / "attack_manifest.json", attack_manifest(attacked))

    total = attacked.ratings.matrix.shape[0]
    attackers = int(attacked.truth_labels.sum())
    print(
        f"dataset: {total} users x {attacked.ratings.matrix.shape[1]} items, "
        f"{attacked.ratings.mask.count} ratings"
    )
    print(f"attackers: {attackers} ({attackers / total:.4f} of all profiles)")
    print(f"unorganized cap check: {'ok' if check.ok else f'violated on {len(check.violations)} items'}")
    print(f"wrote ratings.tsv, truth_labels.json, attack_manifest.json to {out}")
    return EXIT_OK


def _solver_config_from_args(args, m: int, n: int):
    config = rpca_preset(m, n) if args.rpca else default_config(m, n)
    updates = {}
    for name in ("tau", "alpha", "kappa", "delta"):
        value = getattr(args, name)
        if value is not None:
            updates[name] = value
    if updates:
        config = replace(config, **updates)
    if args.beta is not None:
        config = replace(config, beta=args.beta)
    elif args.beta_factor is not None:
        config = replace(config, beta=args.beta_factor * config.kappa)
    if args.max_iters is not None:
        config = replace(config, max_iters=args.max_iters)
    if args.tol_residual is not None:
        config = replace(config, tol_residual=args.tol_residual)
    if args.tol_change is not None:
        config = replace(config, tol_change=args.tol_change)
    if getattr(args, "record_ergodic", False):
        config = replace(config, record_ergodic=True)
    return config


def _warn_beta(config) -> None:
    check = validate_beta(config)
    if not check.convergence_ok:
        print(
            f"warning: beta={config.beta:.6g} outside convergence range "
            f"(0, {2 * (math.sqrt(5) - 2):.4f}*kappa)",
            file=sys.stderr,
        )
    elif not check.rate_ok:
        print(
            f"warning: beta={config.beta:.6g} outside O(1/t) rate range "
            f"(0, {(math.sqrt(33) - 5) / 2:.4f}*kappa)",
            file=sys.stderr,
        )


def cmd_detect(args) -> int:
    out = _out_dir(args)
    records = load_ratings(args.ratings, args.format)
    rating_matrix = build_matrix(records, center=args.center, bound=args.bound)
    m, n = rating_matrix.matrix.shape
    config = _solver_config_from_args(args, m, n)
    _warn_beta(config)

    try:
        result = solve(rating_matrix.matrix, rating_matrix.mask, config)
    except DivergenceError as exc:
        if exc.diagnostics is not None:
            _dump_json(out / "diagnostics.json", diagnostics_summary(exc.diagnostics))
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    save_result(out / "checkpoint.uma1", result, rating_matrix.mask, config)
    labels = label_users(result.sparse)
    _write_labels(out / "labels.json", rating_matrix.user_ids, labels)
    _dump_json(
        out / "diagnostics.json",
        {
            "config": asdict(config),
            "summary": diagnostics_summary(result.diagnostics),
            "converged": result.converged,
            "iterations_used": result.iterations_used,
        },
    )
    print(
        f"solve: {'converged' if result.converged else 'max_iters reached'} "
        f"after {result.iterations_used} iterations"
    )
    print(f"flagged {int(labels.sum())} of {m} users")
    print(f"wrote checkpoint.uma1, labels.json, diagnostics.json to {out}")
    return EXIT_OK if result.converged else EXIT_DIVERGED


def _read_labels_file(path) -> tuple[list, np.ndarray]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return payload.get("user_ids", []), np.asarray(payload["labels"], dtype=bool)


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    if args.labels:
        user_ids, labels = _read_labels_file(args.labels)
    elif args.checkpoint:
        checkpoint = load_result(args.checkpoint)
        labels = label_users(checkpoint.result.sparse)
        user_ids = list(range(labels.size))
    else:
        raise ParameterError("evaluate needs --labels or --checkpoint")
    truth_ids, truth = _read_labels_file(args.truth)
    # ids are opaque; files may carry them as ints or strings
    if user_ids and truth_ids and [str(u) for u in user_ids] != [str(u) for u in truth_ids]:
        raise ParameterError("label files disagree on user ids")

    report = score(labels, truth)
    diagnostics = None
    if args.diagnostics:
        diagnostics = json.loads(Path(args.diagnostics).read_text(encoding="utf-8"))
    _dump_json(
        out / "report.json",
        report_to_dict(
            report,
            user_ids=user_ids or None,
            config_echo={"labels": str(args.labels), "truth": str(args.truth)},
            diagnostics_summary=diagnostics,
        ),
    )
    print(
        f"precision={report.precision:.6f} recall={report.recall:.6f} f1={report.f1:.6f} "
        f"(tp={report.true_positives} fp={report.false_positives} "
        f"fn={report.false_negatives} tn={report.true_negatives})"
    )
    print(f"wrote report.json to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    ratios = _parse_ratios(args.ratios)
    clean = make_clean_dataset(
        args.m,
        args.n,
        args.rank,
        bound=args.bound,
        sigma=args.sigma,
        density=args.density,
        seed=args.seed,
        quality_spread=args.quality_spread,
    )
    detector_names = [d.strip() for d in args.detectors.split(",") if d.strip()]
    unknown = [d for d in detector_names if d not in DEFAULT_DETECTORS]
    if unknown:
        raise ParameterError(f"unknown detectors {unknown}; available: {sorted(DEFAULT_DETECTORS)}")
    detectors = {name: DEFAULT_DETECTORS[name] for name in detector_names}

    attack = _attack_spec_from_args(args)
    result = sweep_spam_ratio(
        clean,
        ratios,
        detectors,
        seeds=list(range(args.seeds)),
        attack=attack,
        jobs=args.jobs,
    )
    write_text_atomic(out / "sweep.csv", sweep_to_csv(result))

    print("ratio    " + "".join(f"{name:>24}" for name in result.detectors))
    for idx, ratio in enumerate(result.ratios):
        row = f"{ratio:<9.4g}"
        for name in result.detectors:
            mean = result.mean_metric(name, "f1")[idx]
            std = result.std_metric(name, "f1")[idx]
            row += f"{mean:>14.4f} +-{std:<7.4f}"
        print(row)
    failures = result.errors()
    if failures:
        print(f"{len(failures)} sweep cells failed; see log", file=sys.stderr)
    print(f"wrote sweep.csv to {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    out = _out_dir(args)
    from .simulate import generate_ground_truth

    ground, mask = generate_ground_truth(
        args.m, args.n, args.rank, bound=args.bound, sigma=args.sigma,
        density=1.0, seed=args.seed,
    )
    clean = observe(ground, mask, grid=False)
    corrupted, _ = corrupt_cells(
        clean, mask, args.spike_fraction, args.spike_magnitude, seed=args.seed
    )

    config = default_config(args.m, args.n)
    config = replace(
        config,
        beta=args.beta_factor * config.kappa,
        record_ergodic=True,
        max_iters=args.iters,
        tol_residual=1e-300,
        tol_change=1e-300,
    )
    _warn_beta(config)
    result = solve(corrupted, mask, config)
    diag = result.diagnostics

    lines = ["iteration,residual,change,objective,ergodic_residual"]
    for idx in range(len(diag.residual_history)):
        lines.append(
            f"{idx + 1},{diag.residual_history[idx]!r},{diag.change_history[idx]!r},"
            f"{diag.objective_history[idx]!r},{diag.ergodic_residual_history[idx]!r}"
        )
    write_text_atomic(out / "bench.csv", "\n".join(lines) + "\n")

    slope = ergodic_slope(diag.ergodic_residual_history)
    print(f"iterations: {result.iterations_used}")
    print(f"final residual: {diag.residual_history[-1]!r}")
    print(f"final change:   {diag.change_history[-1]!r}")
    print(f"ergodic log-log slope over t in [10, {min(500, result.iterations_used)}]: {slope:.4f}")
    print(f"beta ranges: convergence_ok={diag.beta_convergence_ok} rate_ok={diag.beta_rate_ok}")
    print(f"wrote bench.csv to {out}")
    return EXIT_OK


def ergodic_slope(history, t_min: int = 10, t_max: int = 500) -> float:
    """Least-squares slope of log(ergodic residual) against log(t)."""
    upper = min(t_max, len(history))
    if upper <= t_min:
        raise ParameterError(
            f"need more than {t_min} recorded iterations, have {len(history)}"
        )
    ts = np.arange(t_min, upper + 1, dtype=float)
    values = np.asarray(history[t_min - 1 : upper], dtype=float)
    if np.any(values <= 0):
        return float("-inf")
    coeffs = np.polyfit(np.log(ts), np.log(values), 1)
    return float(coeffs[0])


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tau", type=float, default=None, help="l1 weight (default 10/sqrt(m))")
    parser.add_argument("--alpha", type=float, default=None, help="agreement weight (default 10/m)")
    parser.add_argument("--kappa", type=float, default=None, help="Frobenius weight (default tau)")
    parser.add_argument("--beta", type=float, default=None, help="penalty (default tau/3)")
    parser.add_argument("--delta", type=float, default=None, help="noise ball radius (default sqrt(mn)/200)")
    parser.add_argument("--beta-factor", type=float, default=None,
                        help="set beta = FACTOR * kappa (ignored when --beta given)")
    parser.add_argument("--rpca", action="store_true", help="use the degenerate robust-PCA preset")
    parser.add_argument("--max-iters", type=int, default=None)
    parser.add_argument("--tol-residual", type=float, default=None)
    parser.add_argument("--tol-change", type=float, default=None)
    parser.add_argument("--record-ergodic", action="store_true")


def _add_dataset_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--m", type=int, default=500, help="normal users")
    parser.add_argument("--n", type=int, default=300, help="items")
    parser.add_argument("--rank", type=int, default=5)
    parser.add_argument("--density", type=float, default=0.2)
    parser.add_argument("--sigma", type=float, default=0.1)
    parser.add_argument("--bound", type=float, default=2.0)
    parser.add_argument("--quality-spread", type=float, default=0.8,
                        help="item-quality dispersion of the synthetic truth")
    parser.add_argument("--center", type=float, default=3.0)


def _add_attack_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--spam-ratio", type=float, default=0.2)
    parser.add_argument("--filler-ratio", type=float, default=0.01)
    parser.add_argument("--direction", choices=("push", "nuke"), default="push")
    parser.add_argument("--strategies", default=None,
                        help="weights like random=0.4,average=0.3,bandwagon=0.3")
    parser.add_argument("--gamma", type=int, default=None, help="per-item attacker cap")
    parser.add_argument("--epsilon", type=float, default=3.0)
    parser.add_argument("--popular-fraction", type=float, default=0.10)
    parser.add_argument("--bandwagon-selected", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="umadetect",
        description="Detect unorganized malicious raters via low-rank + sparse decomposition.",
    )
    parser.add_argument("--version", action="version", version=f"umadetect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate an attacked synthetic dataset")
    _add_dataset_flags(sim)
    _add_attack_flags(sim)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--experiment", choices=("injected", "hijack-mix"), default="injected",
                     help="hijack-mix adds hijacked existing users (default share 0.75)")
    sim.add_argument("--hijack-share", type=float, default=0.75)
    sim.add_argument("--out", default=None)
    sim.set_defaults(func=cmd_simulate)

    det = sub.add_parser("detect", help="decompose a ratings file and label attackers")
    det.add_argument("--ratings", required=True)
    det.add_argument("--format", default="ml-100k", help="ml-100k | ml-1m | csv")
    det.add_argument("--center", type=float, default=3.0)
    det.add_argument("--bound", type=float, default=2.0)
    _add_solver_flags(det)
    det.add_argument("--out", default=None)
    det.set_defaults(func=cmd_detect)

    ev = sub.add_parser("evaluate", help="score predicted labels against truth")
    ev.add_argument("--labels", default=None, help="labels.json from detect")
    ev.add_argument("--checkpoint", default=None, help="derive labels from a checkpoint")
    ev.add_argument("--truth", required=True, help="truth_labels.json from simulate")
    ev.add_argument("--diagnostics", default=None)
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="spam-ratio sweep over detectors")
    _add_dataset_flags(sw)
    _add_attack_flags(sw)
    sw.add_argument("--seed", type=int, default=0, help="base-dataset seed")
    sw.add_argument("--ratios", default="0.02:0.2:0.02")
    sw.add_argument("--seeds", type=int, default=5, help="attack seeds per ratio")
    sw.add_argument("--detectors", default="uma,rpca")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", default=None)
    sw.set_defaults(func=cmd_sweep)

    be = sub.add_parser("bench", help="convergence diagnostics on a reference instance")
    be.add_argument("--m", type=int, default=50)
    be.add_argument("--n", type=int, default=50)
    be.add_argument("--rank", type=int, default=2)
    be.add_argument("--spike-fraction", type=float, default=0.02)
    be.add_argument("--spike-magnitude", type=float, default=3.0)
    be.add_argument("--sigma", type=float, default=0.01)
    be.add_argument("--bound", type=float, default=2.0)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--beta-factor", type=float, default=0.3)
    be.add_argument("--iters", type=int, default=600)
    be.add_argument("--out", default=None)
    be.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, GenerationError, StateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, NumericalError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, RatingFormatError, RatingRangeError,
            CheckpointFormatError, CheckpointIntegrityError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
