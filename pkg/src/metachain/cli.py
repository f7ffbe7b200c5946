"""Command-line interface: analyze / metastable / regimes / validate / demo2d.

Machine-readable results go to stdout (JSON, or CSV for the table
commands); human-oriented progress and the wall time go to stderr.  Exit
codes: 0 success, 2 input schema violation, 3 a label with no finite
cost, 4 a failed check, 5 precision loss in the matrix powering.
"""

from __future__ import annotations

import argparse
import math
import sys

from .hierarchy import INF, RowAllInfinite, build_hierarchy
from .io import (
    SchemaError,
    Stopwatch,
    digest_of_parameters,
    dumps_stable,
    hierarchy_to_dict,
    load_cost_file,
    make_manifest,
    regimes_to_csv,
    result_to_dict,
)
from .metastable import BreakpointLambda, metastable_general, regime_table
from .oracle import PrecisionLoss

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NO_FINITE_ROW = 3
EXIT_CHECK_FAILED = 4
EXIT_PRECISION = 5


def _apply_threads(args) -> None:
    """Thread count for the Monte Carlo reducers: flag beats env var."""
    import os

    n = getattr(args, "threads", None)
    if n is None:
        env = os.environ.get("METACHAIN_THREADS")
        n = int(env) if env else None
    if n:
        import numba

        numba.set_num_threads(max(1, n))


def _echo(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(doc: dict, output: str | None) -> None:
    text = dumps_stable(doc)
    if output:
        with open(output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _label_index(matrix, name: str) -> int:
    try:
        return matrix.labels.index(name)
    except ValueError:
        raise SchemaError(
            f"unknown label {name!r}; have {list(matrix.labels)}"
        ) from None


def cmd_analyze(args) -> int:
    matrix, _, digest = load_cost_file(args.input)
    with Stopwatch() as watch:
        hier = build_hierarchy(matrix)
        doc = hierarchy_to_dict(hier)
    doc["manifest"] = make_manifest("analyze", digest, None, {"input": args.input})
    _emit(doc, args.output)
    for level in hier.levels:
        parts = []
        for c in level.chains:
            cover = ",".join(sorted(matrix.labels[i] for i in hier.chain_labels(c)))
            e = "inf" if c.exit_rate == INF else f"{float(c.exit_rate):g}"
            parts.append(f"{{{cover}}} e={e}")
        _echo(f"rank {level.rank}: {len(level.chains)} chain(s): {'; '.join(parts)}")
    top = hier.top()
    main = sorted(matrix.labels[i] for i in hier.chain_flatten_main(top))
    _echo(f"deepest labels (top-chain main subset): {{{','.join(main)}}}")
    _echo(f"wall_time_s={watch.elapsed:.3f}")
    return EXIT_OK


def cmd_metastable(args) -> int:
    from .metastable import MetastableQuery

    matrix, _, digest = load_cost_file(args.input)
    start = _label_index(matrix, getattr(args, "from"))
    try:
        query = MetastableQuery(label=start, lam=args.lam, margin=args.margin)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    with Stopwatch() as watch:
        hier = build_hierarchy(matrix)
        res = metastable_general(query.label, query.lam, hier, margin=query.margin)
    doc = result_to_dict(hier, res)
    doc["manifest"] = make_manifest(
        "metastable",
        digest,
        None,
        {"from": getattr(args, "from"), "lambda": args.lam, "margin": args.margin},
    )
    _emit(doc, args.output)
    _echo(f"wall_time_s={watch.elapsed:.3f}")
    return EXIT_OK


def cmd_regimes(args) -> int:
    matrix, _, digest = load_cost_file(args.input)
    start = _label_index(matrix, getattr(args, "from"))
    with Stopwatch() as watch:
        hier = build_hierarchy(matrix)
        rows = regime_table(start, hier)
        csv_text = regimes_to_csv(hier, rows)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    _echo(f"# manifest input_digest={digest} from={getattr(args, 'from')}")
    _echo(f"wall_time_s={watch.elapsed:.3f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validate import run_validation

    _apply_threads(args)
    matrix, expected, digest = load_cost_file(args.input)
    eps_grid = [float(x) for x in args.eps.split(",")]
    exit_grid = [float(x) for x in args.exit_eps.split(",")]
    with Stopwatch() as watch:
        report = run_validation(
            matrix,
            eps_grid=eps_grid,
            exit_eps_grid=exit_grid,
            eps_meta=args.meta_eps,
            replicas=args.replicas,
            seed=args.seed,
            expected=expected,
            skip_exit_mc=args.skip_exit_mc,
        )
    doc = report.to_dict()
    doc["manifest"] = make_manifest(
        "validate",
        digest,
        args.seed,
        {
            "eps": eps_grid,
            "exit_eps": exit_grid,
            "meta_eps": args.meta_eps,
            "replicas": args.replicas,
            "skip_exit_mc": args.skip_exit_mc,
        },
    )
    _emit(doc, args.output)
    if args.fits_csv:
        with open(args.fits_csv, "w") as fh:
            fh.write(report.fits_csv())
    n_fail = sum(1 for r in report.rows if not r.passed)
    _echo(f"{len(report.rows)} checks, {n_fail} failed")
    _echo(f"wall_time_s={watch.elapsed:.3f}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _demo_system(args):
    from .twodisk import TwoDiskSystem, symmetric_system

    if args.preset == "symmetric":
        system = symmetric_system(beta_amp=args.beta_amp)
    else:
        system = TwoDiskSystem(
            offset=args.offset,
            beta_amp=args.beta_amp,
            diff_asym=args.diff_asym,
        )
    return system


def cmd_demo2d(args) -> int:
    import numpy as np

    from .sde import hit_distribution, simulate_sde
    from .twodisk import (
        a_hat_zero,
        alpha_limit,
        gamma,
        level_quantities,
        metastable_weights,
    )

    _apply_threads(args)
    system = _demo_system(args)
    params = {
        "preset": args.preset,
        "offset": system.offset,
        "beta_amp": system.beta_amp,
        "diff_asym": system.diff_asym,
        "delta": args.delta,
        "kappa": args.kappa,
        "replicas": args.replicas,
        "rho": args.rho,
        "t_max": args.t_max,
        "start": list(args.start),
    }
    doc = {"schema": "metachain.demo2d/1"}
    with Stopwatch() as watch:
        doc["gammas"] = {str(i): gamma(system, i) for i in (1, 2, 3)}
        doc["a_hats"] = {str(i): a_hat_zero(system, i) for i in (1, 2, 3)}
        alphas = {i: alpha_limit(system, i, n_panels=args.alpha_panels) for i in (1, 2, 3)}
        doc["alphas"] = {
            str(i): {"plain": a.plain, "doubled": a.doubled}
            for i, a in alphas.items()
        }
        doc["alpha_note"] = (
            "plain = bare level integral of beta_hat/a_hat; doubled = "
            "doubled (stationary escape rate of the averaged edge diffusion); "
            "the doubled form matches edge exit-time statistics"
        )
        theory = metastable_weights(system)
        doc["weights_theory"] = {str(i): theory[i] for i in theory}
        tables = {}
        for lobe in (1, 2, 3):
            lo, hi = system.level_range(lobe)
            zs = np.linspace(0.15, 0.85, 5) * (
                system.lobe_extremum(lobe)
            )
            rows = []
            for z in zs:
                lq = level_quantities(system, lobe, float(z))
                rows.append(
                    {
                        "z": float(z),
                        "period": lq.period,
                        "a_hat": lq.a_hat,
                        "beta_hat": lq.beta_hat,
                    }
                )
            tables[str(lobe)] = rows
        doc["level_tables"] = tables

        check_failed = False
        if args.kappa == 0.0:
            outcome = simulate_sde(
                system,
                args.start if args.start != (0.0, 1.5) else (0.3, 0.05),
                delta=args.delta,
                kappa=0.0,
                t_max=6.0,
                seed=args.seed,
                stop=lambda x, y: None,
                path_every=5,
            )
            H = [system.hamiltonian(x, y) for _, x, y in outcome.path]
            monotone = bool(min(np.diff(H)) > -1e-9)
            doc["smoke_monotone_h"] = monotone
            check_failed = args.check and not monotone
        else:
            hd = hit_distribution(
                system,
                args.start,
                delta=args.delta,
                kappa=args.kappa,
                replicas=args.replicas,
                seed=args.seed,
                rho=args.rho,
                t_max=args.t_max,
                keep_replicas=bool(args.trajectories_csv),
            )
            doc["weights_empirical"] = {
                str(i): hd.frequencies[i] for i in hd.targets
            }
            doc["confidence_halfwidths"] = {
                str(i): hd.halfwidths[i] for i in hd.targets
            }
            doc["escaped"] = hd.escaped
            doc["timed_out"] = hd.timed_out
            doc["mean_hit_time"] = hd.mean_time
            if args.trajectories_csv:
                _write_trajectory_csv(args, system, hd)
            if args.check:
                if args.preset == "symmetric":
                    p1, p3 = hd.frequencies[1], hd.frequencies[3]
                    pbar = 0.5 * (p1 + p3)
                    se = math.sqrt(2 * pbar * (1 - pbar) / max(sum(hd.counts.values()), 1))
                    mirror_ok = abs(p1 - p3) <= 3 * se
                    doc["check"] = {
                        "kind": "mirror symmetry freq(1) = freq(3) within 3 SE",
                        "passed": bool(mirror_ok),
                        "difference": p1 - p3,
                        "three_se": 3 * se,
                    }
                    check_failed = not mirror_ok
                else:
                    worst = max(
                        abs(hd.frequencies[i] - theory[i]) for i in hd.targets
                    )
                    doc["check"] = {
                        "kind": "empirical within +-0.05 of sqrt(a_hat*gamma) weights",
                        "passed": bool(worst <= 0.05),
                        "worst_abs_deviation": worst,
                    }
                    check_failed = worst > 0.05
        if args.sweep:
            doc["sensitivity"] = _sensitivity_rows(system, args)

    doc["manifest"] = make_manifest(
        "demo2d", digest_of_parameters(params), args.seed, params
    )
    _emit(doc, args.output)
    _echo(f"wall_time_s={watch.elapsed:.3f}")
    return EXIT_CHECK_FAILED if check_failed else EXIT_OK


def _sensitivity_rows(system, args):
    from .sde import hit_distribution

    rows = []
    for kappa in [float(x) for x in args.sweep.split(",")]:
        hd = hit_distribution(
            system,
            args.start,
            delta=args.delta,
            kappa=kappa,
            replicas=args.sweep_replicas,
            seed=args.seed,
            rho=args.rho,
            t_max=args.t_max,
        )
        rows.append(
            {
                "kappa": kappa,
                "delta": args.delta,
                "frequencies": {str(i): hd.frequencies[i] for i in hd.targets},
            }
        )
    return rows


def _write_trajectory_csv(args, system, hd):
    # one row per replica: hit label (0 timed out, -1 escaped) and time
    with open(args.trajectories_csv, "w") as fh:
        fh.write("replica,label,hit_time\n")
        for r, (label, t) in enumerate(hd.replica_outcomes):
            fh.write(f"{r},{label},{'' if t is None else repr(t)}\n")


def _parse_point(text: str):
    x, y = (float(v) for v in text.split(","))
    return (x, y)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="metachain",
        description="metastable analysis via hierarchies of Markov chains",
    )
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="build and dump the chain hierarchy")
    a.add_argument("--input", required=True)
    a.add_argument("--output")
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("metastable", help="metastable set for one label/scale")
    m.add_argument("--input", required=True)
    m.add_argument("--from", required=True)
    m.add_argument("--lambda", dest="lam", type=float, required=True)
    m.add_argument("--margin", type=float, default=1e-9)
    m.add_argument("--output")
    m.set_defaults(func=cmd_metastable)

    r = sub.add_parser("regimes", help="lambda-regime table for one label")
    r.add_argument("--input", required=True)
    r.add_argument("--from", required=True)
    r.add_argument("--output")
    r.set_defaults(func=cmd_regimes)

    v = sub.add_parser("validate", help="compare predictions against oracles")
    v.add_argument("--input", required=True)
    v.add_argument("--eps", default="0.05,0.075,0.1,0.15,0.2")
    v.add_argument("--exit-eps", default="1.0,0.8,0.7,0.6,0.5")
    v.add_argument("--meta-eps", type=float, default=0.05)
    v.add_argument("--replicas", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--threads", type=int)
    v.add_argument("--skip-exit-mc", action="store_true")
    v.add_argument("--fits-csv")
    v.add_argument("--output")
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("demo2d", help="two-disk branching-weight experiment")
    d.add_argument("--preset", choices=("default", "symmetric"), default="default")
    d.add_argument("--delta", type=float, default=0.02)
    d.add_argument("--kappa", type=float, default=0.3)
    d.add_argument("--replicas", type=int, default=20_000)
    d.add_argument("--seed", type=int, default=7)
    d.add_argument("--rho", type=float, default=0.2)
    d.add_argument("--t-max", type=float, default=1000.0)
    d.add_argument("--start", type=_parse_point, default=(0.0, 1.5))
    d.add_argument("--offset", type=float, default=0.6)
    d.add_argument("--beta-amp", type=float, default=0.5)
    d.add_argument("--diff-asym", type=float, default=0.4)
    d.add_argument("--alpha-panels", type=int, default=12)
    d.add_argument("--threads", type=int)
    d.add_argument("--config", help="JSON file of parameter defaults")
    d.add_argument("--check", action="store_true")
    d.add_argument("--sweep", help="comma list of kappas for a sensitivity table")
    d.add_argument("--sweep-replicas", type=int, default=4000)
    d.add_argument("--trajectories-csv")
    d.add_argument("--output")
    d.set_defaults(func=cmd_demo2d)
    p._demo2d_parser = d
    return p


_CONFIG_KEYS = {
    "preset": str,
    "delta": float,
    "kappa": float,
    "replicas": int,
    "seed": int,
    "rho": float,
    "t_max": float,
    "offset": float,
    "beta_amp": float,
    "diff_asym": float,
    "alpha_panels": int,
    "start": tuple,
}


def _apply_config(parser, argv) -> None:
    """Load --config defaults for demo2d; explicit flags still win."""
    import json

    if argv is None or "--config" not in argv:
        return
    path = argv[argv.index("--config") + 1]
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise SchemaError("config must be a JSON object")
    defaults = {}
    for key, value in doc.items():
        if key not in _CONFIG_KEYS:
            raise SchemaError(f"unknown config key {key!r}")
        caster = _CONFIG_KEYS[key]
        defaults[key] = tuple(float(v) for v in value) if caster is tuple else caster(value)
    parser._demo2d_parser.set_defaults(**defaults)


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        _apply_config(parser, argv)
    except (OSError, ValueError) as exc:
        _echo(f"config error: {exc}")
        return EXIT_SCHEMA
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        _echo(f"schema error: {exc}")
        return EXIT_SCHEMA
    except RowAllInfinite as exc:
        _echo(f"invalid costs: {exc}")
        return EXIT_NO_FINITE_ROW
    except BreakpointLambda as exc:
        _echo(f"lambda rejected: {exc}")
        return EXIT_CHECK_FAILED
    except PrecisionLoss as exc:
        _echo(f"precision loss: {exc}")
        return EXIT_PRECISION
    except FileNotFoundError as exc:
        _echo(f"cannot read input: {exc}")
        return EXIT_SCHEMA


if __name__ == "__main__":
    raise SystemExit(main())
