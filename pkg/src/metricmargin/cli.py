"""Command-line surface: train, predict, bounds, simulate-bayes, estimate-dim.

Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.
CSV floats are written with ``repr``, the shortest round-trip decimal, so
fixed-seed outputs are byte-identical across platforms. Worker count comes
from ``--threads`` or the METRIC_MARGIN_THREADS environment variable.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .bayes_sim import bayes_risk, make_distribution, nn_risk_trials
from .bounds import FAT_VARIANTS, sweep_grid
from .classifier import LipschitzClassifier
from .errors import InputError, MetricMarginError
from .metric_core import (
    METRIC_KINDS,
    MetricOracle,
    estimate_ddim,
    ingest,
    normalize_sample,
)
from .srm import srm_train


def _fmt(x) -> str:
    return repr(float(x))


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("METRIC_MARGIN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise InputError(f"METRIC_MARGIN_THREADS must be an integer, got {env!r}") from exc
    return 1


def _parse_grid(text: str) -> np.ndarray:
    """Either a comma list of values or start:stop:count[:log]."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise InputError(f"grid spec {text!r} must be start:stop:count[:log]")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise InputError("grid count must be >= 1")
        if len(parts) == 4 and parts[3] == "log":
            if start <= 0 or stop <= 0:
                raise InputError("log grids need positive endpoints")
            return np.geomspace(start, stop, count)
        if len(parts) == 4:
            raise InputError(f"unknown grid modifier {parts[3]!r}")
        return np.linspace(start, stop, count)
    vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise InputError("empty grid")
    return np.array(vals)


def _parse_int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"bad integer list {text!r}") from exc


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _candidate_report_rows(result) -> list:
    """Change points of the cover size plus the chosen row; the full table
    can be quadratic in the sample size, which has no place in a report."""
    tab = result.candidates
    rows = []
    prev = None
    for i in range(len(tab)):
        size = int(tab.cover_size[i])
        is_edge = i == 0 or i == len(tab) - 1
        chosen = float(tab.lipschitz[i]) == result.lipschitz
        if size != prev or is_edge or chosen:
            rows.append(
                {
                    "lipschitz": float(tab.lipschitz[i]),
                    "cover_size": size,
                    "penalty": float(tab.penalty[i]),
                    "objective": float(tab.objective[i]),
                }
            )
        prev = size
    return rows


def cmd_train(args) -> int:
    sample = ingest(args.input, args.format)
    if args.metric in ("levenshtein",) and sample.payload_kind != "string":
        raise InputError("levenshtein metric needs string payloads")
    if args.metric not in ("levenshtein",) and sample.payload_kind != "vector":
        raise InputError(f"{args.metric} metric needs vector payloads")
    threads = _threads(args)
    oracle = normalize_sample(sample, MetricOracle(args.metric), threads=threads)
    eta = 0.0 if args.exact_nn else args.eta
    result = srm_train(
        sample,
        oracle,
        delta=args.delta,
        ddim=args.ddim,
        eta=eta,
        search=args.search,
        objective_units=args.q_units,
        delta_kind=args.delta_kind,
        fat_variant=args.fat_variant,
        threads=threads,
    )
    result.classifier.save(args.out)
    report = {
        "schema": 1,
        "n": sample.n,
        "n_classes": sample.n_classes,
        "metric": {"kind": oracle.kind, "scale": oracle.scale},
        "ddim": {"value": result.ddim.ddim, "method": result.ddim.method},
        "lipschitz": result.lipschitz,
        "cover_size": result.cover.size,
        "kept": int(len(result.kept_indices)),
        "objective": result.objective,
        "objective_units": result.objective_units,
        "min_objective_examined": result.min_objective_examined,
        "fallback_applied": result.fallback_applied,
        "search": result.search_mode,
        "always_conflicted_pairs": [
            [int(a), int(b)] for a, b in result.always_conflicted
        ],
        "bound": result.bound_report.to_dict(),
        "candidates_total": len(result.candidates),
        "candidates": _candidate_report_rows(result),
    }
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=1)
            fh.write("\n")
    print(
        f"trained: n={sample.n} k={sample.n_classes} lipschitz={_fmt(result.lipschitz)} "
        f"cover={result.cover.size} model={args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def cmd_predict(args) -> int:
    clf = LipschitzClassifier.load(args.model)
    sample = ingest(args.input, args.format)
    if sample.payload_kind != clf.oracle.payload_kind:
        raise InputError(
            f"model expects {clf.oracle.payload_kind} payloads, "
            f"dataset {args.input} has {sample.payload_kind}"
        )
    if sample.payload_kind == "vector":
        model_width = len(clf.prototypes[0])
        data_width = len(sample.points[0])
        if model_width != data_width:
            raise InputError(
                f"model vectors have length {model_width}, dataset {args.input} "
                f"has length {data_width}"
            )
    lines = ["label,margin"] if args.with_margin else ["label"]
    for p in sample.points:
        y = clf.predict(p)
        name = clf.label_names.get(y, str(y))
        if args.with_margin:
            m = clf.predict_margin(p)
            lines.append(f"{name},{_fmt(m.value)}")
        else:
            lines.append(str(name))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# bounds sweep
# ---------------------------------------------------------------------------

def cmd_bounds(args) -> int:
    L_grid = _parse_grid(args.lipschitz)
    n_list = _parse_int_list(args.n)
    d_list = [float(v) for v in args.ddim.split(",") if v.strip()]
    if L_grid.size == 0 or not n_list or not d_list:
        raise InputError("empty sweep grid")
    header = "L,n,D,k,delta,delta_rad,delta_fat,combined,winner,crossover"
    lines = [header]
    for n in n_list:
        for D in d_list:
            grid = sweep_grid(
                L_grid, n, D, args.classes, args.delta, fat_variant=args.fat_variant
            )
            prev_winner = None
            for i in range(L_grid.size):
                winner = str(grid["winner"][i])
                crossover = int(prev_winner is not None and winner != prev_winner)
                prev_winner = winner
                lines.append(
                    ",".join(
                        [
                            _fmt(L_grid[i]),
                            str(n),
                            _fmt(D),
                            str(args.classes),
                            _fmt(args.delta),
                            _fmt(grid["delta_rad"][i]),
                            _fmt(grid["delta_fat"][i]),
                            _fmt(grid["combined"][i]),
                            winner,
                            str(crossover),
                        ]
                    )
                )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# simulate-bayes
# ---------------------------------------------------------------------------

def cmd_simulate_bayes(args) -> int:
    dist = make_distribution(
        domain=args.domain,
        n_classes=args.classes,
        posterior_lipschitz=args.lpost,
        seed=args.seed,
    )
    bayes = bayes_risk(dist)
    header = "n,trials,bayes_risk,mean_nn_risk,stderr,bound_rhs,pass"
    lines = [header]
    for n in _parse_int_list(args.n):
        rep = nn_risk_trials(
            dist, n, args.trials, test_points=args.test_points,
            seed=args.seed, bayes=bayes,
        )
        lines.append(
            ",".join(
                [
                    str(n),
                    str(args.trials),
                    _fmt(rep.bayes_risk),
                    _fmt(rep.mean_nn_risk),
                    _fmt(rep.mc_stderr),
                    _fmt(rep.bound_rhs),
                    str(int(rep.holds)),
                ]
            )
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# estimate-dim
# ---------------------------------------------------------------------------

def cmd_estimate_dim(args) -> int:
    sample = ingest(args.input, args.format)
    oracle = MetricOracle(args.metric)
    est = estimate_ddim(sample, oracle, threads=_threads(args))
    doc = {
        "ddim": est.ddim,
        "method": est.method,
        "scales_examined": list(est.scales_examined),
        "net_sizes": list(est.net_sizes),
    }
    print(json.dumps(doc, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="metricmargin",
        description="Margin-regularized nearest-neighbor classification in metric spaces",
    )
    p.add_argument("--version", action="version", version=f"metricmargin {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, with_input=True):
        if with_input:
            sp.add_argument("--input", required=True, help="dataset file (.csv or .jsonl)")
            sp.add_argument("--format", choices=["csv", "jsonl"], default=None)
        sp.add_argument("--threads", type=int, default=None,
                        help="worker cap (default: METRIC_MARGIN_THREADS or 1)")

    sp = sub.add_parser("train", help="select the Lipschitz constant and fit a model")
    add_common(sp)
    sp.add_argument("--metric", choices=list(METRIC_KINDS), default="l2")
    sp.add_argument("--delta", type=float, default=0.01)
    sp.add_argument("--ddim", type=float, default=None,
                    help="doubling dimension override (default: net-counting estimate)")
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--eta", type=float, default=0.0,
                       help="approximate-search slack (0 = exact)")
    group.add_argument("--exact-nn", action="store_true", help="force exact search")
    sp.add_argument("--search", choices=["sweep", "binary"], default="sweep")
    sp.add_argument("--q-units", choices=["risk", "count"], default="risk")
    sp.add_argument("--delta-kind", choices=["combined", "rad", "fat"], default="combined")
    sp.add_argument("--fat-variant", choices=list(FAT_VARIANTS), default="printed")
    sp.add_argument("--out", required=True, help="model JSON path")
    sp.add_argument("--report", default=None, help="training report JSON path")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="label new points with a saved model")
    add_common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--with-margin", action="store_true")
    sp.add_argument("--out", default=None, help="predictions CSV (default stdout)")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("bounds", help="penalty sweep as CSV")
    add_common(sp, with_input=False)
    sp.add_argument("--lipschitz", "--L", dest="lipschitz", required=True,
                    help="comma list or start:stop:count[:log]")
    sp.add_argument("--n", required=True, help="comma list of sample sizes")
    sp.add_argument("--ddim", "--D", dest="ddim", default="1",
                    help="comma list of doubling dimensions")
    sp.add_argument("--classes", "--k", dest="classes", type=int, default=10)
    sp.add_argument("--delta", type=float, default=0.01)
    sp.add_argument("--fat-variant", choices=list(FAT_VARIANTS), default="printed")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("simulate-bayes", help="1-NN risk vs the Bayes-rate bound")
    add_common(sp, with_input=False)
    sp.add_argument("--domain", choices=["interval", "square"], default="interval")
    sp.add_argument("--classes", "--k", dest="classes", type=int, default=2)
    sp.add_argument("--lpost", type=float, default=1.0,
                    help="posterior Lipschitz budget")
    sp.add_argument("--n", required=True, help="comma list of sample sizes")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--test-points", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_simulate_bayes)

    sp = sub.add_parser("estimate-dim", help="net-counting doubling-dimension estimate")
    add_common(sp)
    sp.add_argument("--metric", choices=list(METRIC_KINDS), default="l2")
    sp.set_defaults(func=cmd_estimate_dim)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, 0 on --help/--version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MetricMarginError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
