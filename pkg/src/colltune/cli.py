"""``colltune`` command line.

Exit codes: 0 success, 1 validation failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import io as cio
from .estimation import (
    BCAST_SIZE_RANGE,
    FIT_PROCESSES,
    GATHER_SIZE_RANGE,
    SEGMENT_SIZES,
    EstimationError,
    design_experiments,
    design_gamma_experiments,
    fit_profile,
    log_spaced_sizes,
)
from .model import predict, predict_with
from .selector import SelectionQuery, build_decision_table, compare_baseline, select
from .simulator import NoiseModel, build_bcast_schedule, build_gather_schedule, run_gamma_plan, run_plan, simulate
from .topology import TREE_FOR_ALGORITHM, build_tree
from .types import AlgorithmId, CollectiveOp, GammaTable, HockneyParams, InvalidArgument, MissingParameters, ModelConfig

log = logging.getLogger("colltune")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
VALIDATION_TOLERANCE = 1e-9


class UsageError(Exception):
    pass


def _op(text: str) -> CollectiveOp:
    key = text.lower()
    aliases = {"bcast": "Broadcast", "broadcast": "Broadcast", "gather": "Gather"}
    if key not in aliases:
        raise argparse.ArgumentTypeError(f"unknown operation {text!r}; use bcast or gather")
    return CollectiveOp(aliases[key])


def _alg(text: str) -> AlgorithmId:
    try:
        return AlgorithmId(text)
    except ValueError:
        names = ", ".join(a.value for a in AlgorithmId)
        raise argparse.ArgumentTypeError(f"unknown algorithm {text!r}; choose from {names}") from None


def _load_profile(path: str | None):
    return cio.grisou_profile() if path is None else cio.load_profile(path)


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _sizes(args) -> list[float]:
    lo, hi = args.m_range
    return log_spaced_sizes(lo, hi, args.M)


def _effective_config(args) -> dict:
    skip = {"func"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        if isinstance(v, (list, tuple)):
            v = [x.value if hasattr(x, "value") else x for x in v]
        elif hasattr(v, "value"):
            v = v.value
        out[k] = v
    return out


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    truth = _load_profile(args.profile)
    if args.M is not None and args.M < 2:
        raise UsageError(f"--M must be at least 2, got {args.M}")
    noise = NoiseModel(args.noise_sigma, args.outlier_prob, args.outlier_factor, args.seed)
    algs = args.algorithms or list(AlgorithmId)
    plan = []
    for alg in algs:
        m_range = args.m_range or (BCAST_SIZE_RANGE if alg.op is CollectiveOp.Broadcast else GATHER_SIZE_RANGE)
        plan.extend(
            design_experiments(
                alg,
                args.P,
                m_range,
                args.M,
                segment_sizes=args.segment_sizes,
                segment_bytes=truth.config.segment_bytes,
                repetitions=args.repetitions,
            )
        )
    rng = noise.generator()
    if args.gamma_out:
        gplan = design_gamma_experiments(args.gamma_max_p, args.gamma_repetitions, truth.config.segment_bytes, args.gamma_replicates)
        grec = run_gamma_plan(gplan, truth.params(AlgorithmId.BcastLinear), truth.gamma, noise, rng)
        Path(args.gamma_out).write_text(cio.dumps_gamma_records(grec))
    records = run_plan(plan, truth, noise, rng)
    _write(cio.dumps_records(records), args.output)
    if args.dump_tree:
        trees = {a.value: build_tree(TREE_FOR_ALGORITHM[a], args.P, truth.config.k_chain_fanout if a is AlgorithmId.BcastKChain else None).to_dict() for a in algs}
        Path(args.dump_tree).write_text(cio.dumps_json(trees))
    log.info("wrote %d records", len(records))
    return EXIT_OK


def cmd_fit(args) -> int:
    records = cio.read_records(Path(args.records).read_text())
    gamma_records = cio.read_gamma_records(Path(args.gamma).read_text())
    if not records:
        raise UsageError(f"{args.records} holds no records")
    config = _load_profile(args.config_from).config if args.config_from else ModelConfig()
    result = fit_profile(
        records,
        gamma_records,
        config,
        args.method,
        name=args.name,
        extrapolation=args.extrapolation,
        algorithms=sorted({r.algorithm for r in records}, key=lambda a: a.rank) if args.partial else None,
    )
    for alg, fr in result.results.items():
        print(
            f"{alg.value}: alpha={fr.alpha:.6g} beta={fr.beta:.6g} "
            f"condition={fr.condition_number:.3g} identifiable={fr.identifiable}",
            file=sys.stderr,
        )
    for alg, why in result.failures.items():
        print(f"{alg.value}: FAILED: {why}", file=sys.stderr)
    if result.failures:
        return EXIT_USAGE
    doc = cio.profile_to_dict(result.profile)
    doc["fit"] = {a.value: fr.to_dict() for a, fr in result.results.items()}
    doc["run_config"] = _effective_config(args)
    _write(cio.dumps_json(doc), args.output)
    return EXIT_OK


def cmd_select(args) -> int:
    profile = _load_profile(args.profile)
    res = select(profile, SelectionQuery(args.op, args.P, args.m), args.candidates)
    doc = res.to_dict()
    doc["query"] = {"op": args.op.value, "P": args.P, "m": args.m}
    doc["run_config"] = _effective_config(args)
    _write(cio.dumps_json(doc), args.output)
    return EXIT_OK


def _plot_rows(profile, op: CollectiveOp, P_values, m_values, candidates) -> str:
    cands = candidates or list(AlgorithmId.for_op(op))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["P", "m_bytes"] + [a.value for a in cands])
    for P in P_values:
        for m in m_values:
            row = [P, format(m, ".17g")]
            for a in cands:
                try:
                    row.append(format(predict(profile, a, P, m).seconds, ".17g"))
                except InvalidArgument:
                    row.append("")
            w.writerow(row)
    return buf.getvalue()


def cmd_decision_table(args) -> int:
    profile = _load_profile(args.profile)
    if args.m_range is None:
        args.m_range = BCAST_SIZE_RANGE if args.op is CollectiveOp.Broadcast else GATHER_SIZE_RANGE
    if args.M is None:
        args.M = 10 if args.op is CollectiveOp.Broadcast else 5
    ms = _sizes(args)
    table = build_decision_table(profile, args.op, args.P_values, ms, args.candidates)
    if args.format == "csv":
        text = cio.dumps_decision_table_csv(table)
    else:
        doc = table.to_dict()
        doc["run_config"] = _effective_config(args)
        text = cio.dumps_json(doc)
    _write(text, args.output)
    if args.emit_plot_data:
        Path(args.emit_plot_data).write_text(_plot_rows(profile, args.op, table.P_values, ms, args.candidates))
    return EXIT_OK


def _validation_sweep(P_values, segment_counts, corrupt_chain: bool) -> dict:
    params = HockneyParams(1e-5, 1e-9)
    gamma = GammaTable({2: 1.0, 3: 1.114, 4: 1.219, 5: 1.283, 6: 1.451, 7: 1.540})
    seg, eager, K = 8192, 32768, 4
    worst: dict[str, float] = {}
    for alg in AlgorithmId.for_op(CollectiveOp.Broadcast):
        dev = 0.0
        for P in P_values:
            if alg is AlgorithmId.BcastSplitBinary and P < 3:
                continue
            for n_s in segment_counts:
                m = float(n_s * seg)
                sim = simulate(build_bcast_schedule(alg, P, n_s, K), params, gamma, m).makespan
                model = predict_with(params, gamma, alg, P, m, segment_bytes=seg, eager_limit=eager, k_chain_fanout=K).seconds
                if corrupt_chain and alg is AlgorithmId.BcastChain:
                    model *= (P + n_s - 1) / (P + n_s - 2)
                dev = max(dev, abs(model - sim) / sim)
        worst[alg.value] = dev
    for alg in AlgorithmId.for_op(CollectiveOp.Gather):
        dev = 0.0
        for P in P_values:
            if P < 2:
                continue
            # one eager and one rendezvous size for the synchronised gather
            for m in (float(eager), float(4 * eager)):
                sim = simulate(build_gather_schedule(alg, P), params, gamma, m, eager_limit=eager).makespan
                model = predict_with(params, gamma, alg, P, m, segment_bytes=seg, eager_limit=eager, k_chain_fanout=K).seconds
                dev = max(dev, abs(model - sim) / sim)
        worst[alg.value] = dev
    return worst


def cmd_validate(args) -> int:
    P_values = sorted(set(range(args.P_min, args.P_max + 1)) | set(args.P_extra))
    worst = _validation_sweep(P_values, args.segments, args.corrupt_chain)
    overall = max(worst.values())
    ok = overall <= VALIDATION_TOLERANCE
    doc = {
        "max_relative_deviation": overall,
        "per_algorithm": worst,
        "tolerance": VALIDATION_TOLERANCE,
        "passed": ok,
        "run_config": _effective_config(args),
    }
    _write(cio.dumps_json(doc), args.output)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_compare_baseline(args) -> int:
    profile = _load_profile(args.profile)
    ms = _sizes(args)
    report = compare_baseline(profile, args.P, ms)
    doc = report.to_dict()
    doc["run_config"] = _effective_config(args)
    _write(cio.dumps_json(doc), args.output)
    if args.emit_plot_data:
        cands = [AlgorithmId.BcastBinary, AlgorithmId.BcastBinomial]
        Path(args.emit_plot_data).write_text(_plot_rows(profile, CollectiveOp.Broadcast, [args.P], ms, cands))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colltune", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, profile=True):
        p.add_argument("--seed", type=int, default=0, help="seed of the PCG64 generator (default 0)")
        p.add_argument("-o", "--output", default=None, help="output path (default stdout)")
        if profile:
            p.add_argument("--profile", default=None, help="profile JSON (default: bundled grisou profile)")

    p = sub.add_parser("simulate", help="generate synthetic experiment records from a planted profile")
    common(p)
    p.add_argument("--algorithms", nargs="+", type=_alg, default=None)
    p.add_argument("--P", type=int, default=FIT_PROCESSES)
    p.add_argument("--M", type=int, default=None, help="message sizes per algorithm")
    p.add_argument("--m-range", nargs=2, type=float, default=None, metavar=("LO", "HI"))
    p.add_argument("--segment-sizes", nargs="+", type=int, default=list(SEGMENT_SIZES))
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--outlier-prob", type=float, default=0.0)
    p.add_argument("--outlier-factor", type=float, default=3.0)
    p.add_argument("--gamma-out", default=None, help="also write gamma experiment records here")
    p.add_argument("--gamma-max-p", type=int, default=7)
    p.add_argument("--gamma-repetitions", type=int, default=100)
    p.add_argument("--gamma-replicates", type=int, default=5)
    p.add_argument("--dump-tree", default=None, metavar="PATH", help="write the virtual trees as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit gamma and per-algorithm alpha, beta from records")
    common(p, profile=False)
    p.add_argument("--records", required=True)
    p.add_argument("--gamma", required=True, help="gamma experiment CSV")
    p.add_argument("--method", choices=["huber", "ols"], default="huber")
    p.add_argument("--extrapolation", choices=["LinearFit", "Clamp"], default="LinearFit")
    p.add_argument("--name", default="fitted")
    p.add_argument("--config-from", default=None, help="take segment size, eager limit and K from this profile")
    p.add_argument("--partial", action="store_true", help="fit only the algorithms present in the records")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="pick the fastest algorithm for one query")
    common(p)
    p.add_argument("--op", type=_op, required=True)
    p.add_argument("--P", type=int, required=True)
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--candidates", nargs="+", type=_alg, default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("decision-table", help="tabulate selections over a (P, m) grid")
    common(p)
    p.add_argument("--op", type=_op, required=True)
    p.add_argument("--P-values", nargs="+", type=int, default=[40, 50, 80, 90])
    p.add_argument("--m-range", nargs=2, type=float, default=None, metavar=("LO", "HI"))
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--candidates", nargs="+", type=_alg, default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--emit-plot-data", default=None, metavar="PATH", help="write per-candidate predicted times as CSV")
    p.set_defaults(func=cmd_decision_table)

    p = sub.add_parser("validate", help="check closed forms against schedule simulation")
    common(p, profile=False)
    p.add_argument("--P-min", type=int, default=2)
    p.add_argument("--P-max", type=int, default=64)
    p.add_argument("--P-extra", nargs="*", type=int, default=[90])
    p.add_argument("--segments", nargs="+", type=int, default=[1, 2, 3, 4, 8])
    p.add_argument("--corrupt-chain", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare-baseline", help="binary versus binomial broadcast under both model families")
    common(p)
    p.add_argument("--P", type=int, default=90)
    p.add_argument("--m-range", nargs=2, type=float, default=list(BCAST_SIZE_RANGE), metavar=("LO", "HI"))
    p.add_argument("--M", type=int, default=10)
    p.add_argument("--emit-plot-data", default=None, metavar="PATH")
    p.set_defaults(func=cmd_compare_baseline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    print(json.dumps({"command": args.command, **_effective_config(args)}, sort_keys=True), file=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"colltune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidArgument, EstimationError, MissingParameters, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, MissingParameters) else exc
        print(f"colltune {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
