"""Command-line interface.

Exit status: 0 on success, 1 on usage errors, 2 on data or validation
errors. All randomness derives from ``--seed``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from vsc_zsl.align import chamfer, cost_matrix, many_to_one_report, min_weight_perfect_matching
from vsc_zsl.cluster import kmeans, voting_upper_bound
from vsc_zsl.dataset import DataError, SynthParams, generate_synthetic, load_dataset
from vsc_zsl.embed import COSTS, METHODS, EmbeddingNet, forward
from vsc_zsl.evaluation import evaluate_conventional, evaluate_generalized
from vsc_zsl.seeding import component_seed
from vsc_zsl.suite import run_experiment_suite
from vsc_zsl.train import DEFAULT_BETA_GRID, TrainConfig, TrainingDiverged, select_beta, train_dataset


logger = logging.getLogger("vsc_zsl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _g(x: float) -> str:
    return f"{x:.6g}"


def _write_csv_rows(path, rows) -> None:
    Path(path).write_text("".join(",".join(map(str, r)) + "\n" for r in rows), encoding="utf-8")


def _train_config(args, beta: float | None = None) -> TrainConfig:
    return TrainConfig(
        method=args.method, beta=args.beta if beta is None else beta, weight_decay=args.weight_decay,
        learning_rate=args.lr, epochs=args.epochs, seed=args.seed, restarts=args.restarts, cost=args.cost,
        hidden=args.hidden, warmup_epochs=args.warmup_epochs, final_activation=not args.no_final_activation,
    )


def cmd_gen_synth(args) -> None:
    params = SynthParams(S=args.S, U=args.U, d=args.d, m=args.m, per_class=args.per_class, sigma=args.sigma,
                         delta=args.delta, seed=args.seed, center_scale=args.center_scale,
                         test_seen_fraction=args.test_seen_fraction)
    out = generate_synthetic(params, args.out)
    print(f"wrote synthetic dataset to {out}")


def cmd_train(args) -> None:
    data = load_dataset(args.data)
    net, log = train_dataset(_train_config(args), data)
    net.save(args.out)
    if args.log:
        log.to_csv(args.log)
    print(f"method {args.method}  epochs {log.epochs}  final total {_g(log.total[-1])}  "
          f"(mse {_g(log.mse[-1])}, structure {_g(log.structure[-1])})")
    print(f"model written to {args.out}")


def cmd_select_beta(args) -> None:
    data = load_dataset(args.data)
    grid = [float(x) for x in args.grid.split(",")] if args.grid else list(DEFAULT_BETA_GRID)
    sel = select_beta(grid, _train_config(args, beta=0.0), data.source, data.attributes, data.split, args.folds)
    for b, acc in sel.scores.items():
        print(f"beta {_g(b)}: mean pseudo-unseen accuracy {_g(acc)}")
    print(f"selected beta {_g(sel.beta)}")


def _check_model(net: EmbeddingNet, data) -> None:
    if net.d != data.source.d:
        raise DataError(f"model output dimension d={net.d} does not match dataset feature dimension d={data.source.d}")
    if net.m != data.attributes.m:
        raise DataError(f"model attribute dimension m={net.m} does not match dataset attribute dimension m={data.attributes.m}")


def cmd_eval(args) -> None:
    data = load_dataset(args.data)
    net = EmbeddingNet.load(args.model)
    _check_model(net, data)
    if args.mode == "conventional":
        acc = evaluate_conventional(net, data)
        print(f"conventional ZSL per-class accuracy: {_g(acc)}")
        rows = [("mode", "acc"), ("conventional", _g(acc))]
    else:
        res = evaluate_generalized(net, data, seen_centers=args.gzsl_seen_centers)
        print(f"generalized ZSL: acc_u {_g(res.acc_u)}  acc_s {_g(res.acc_s)}  H {_g(res.H)}")
        rows = [("mode", "acc_u", "acc_s", "H"), ("generalized", _g(res.acc_u), _g(res.acc_s), _g(res.H))]
    if args.out:
        _write_csv_rows(args.out, rows)


def _clusters(data, seed: int, restarts: int, k: int | None = None):
    k = len(data.split.unseen) if k is None else k
    return kmeans(data.target.features, k, seed=component_seed(seed, "kmeans"), restarts=restarts)


def cmd_cluster(args) -> None:
    data = load_dataset(args.data)
    km = _clusters(data, args.seed, args.restarts, args.k)
    print(f"k {len(km.centers)}  inertia {_g(km.inertia)}  iterations {km.n_iter}")
    if data.target.labels is not None:
        print(f"voting upper bound {_g(voting_upper_bound(km.assignments, data.target.labels))}")
    if args.out_centers:
        _write_csv_rows(args.out_centers, [[_g(v) for v in row] for row in km.centers.centers.tolist()])
    if args.out_assignments:
        _write_csv_rows(args.out_assignments, [[int(a)] for a in km.assignments])


def cmd_match_report(args) -> None:
    data = load_dataset(args.data)
    net = EmbeddingNet.load(args.model)
    _check_model(net, data)
    syn = forward(net, data.attributes.rows(data.split.unseen))
    clusters = _clusters(data, args.seed, args.restarts).centers.centers
    dist = cost_matrix(syn, clusters, args.cost)
    match = min_weight_perfect_matching(dist)
    print(f"min-weight perfect matching ({args.cost} cost), synthetic -> cluster:")
    for i, j in enumerate(match.pairs.tolist()):
        print(f"{i} -> {j} : {_g(dist[i, j])}")
    print(f"total: {_g(match.total_cost)}")
    loss, nn_ab, nn_ba = chamfer(syn, clusters)
    print(f"chamfer nearest-neighbour structure (loss {_g(loss)}):")
    for line in many_to_one_report(nn_ab, nn_ba).lines():
        print(line)


def cmd_suite(args) -> None:
    text = run_experiment_suite(args.suite, mode=args.mode, jobs=args.jobs, timings=args.timings)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _add_train_options(p) -> None:
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--method", choices=METHODS, default="bmvsc")
    p.add_argument("--beta", type=float, default=1.0, help="structure-term weight")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10, help="k-means restarts")
    p.add_argument("--cost", choices=COSTS, default="squared")
    p.add_argument("--hidden", type=int, default=None, help="hidden width (default: feature dimension)")
    p.add_argument("--warmup-epochs", type=int, default=0, help="epochs before the structure term switches on")
    p.add_argument("--no-final-activation", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vsc-zsl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synth", help="write a synthetic domain-shift dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--S", type=int, default=20)
    p.add_argument("--U", type=int, default=10)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--center-scale", type=float, default=SynthParams.center_scale)
    p.add_argument("--test-seen-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="train an embedding network")
    _add_train_options(p)
    p.add_argument("--out", required=True, help="model JSON output")
    p.add_argument("--log", help="per-epoch training log CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select-beta", help="choose beta by cross-validation over seen classes")
    _add_train_options(p)
    p.add_argument("--grid", help="comma-separated beta values")
    p.add_argument("--folds", type=int, default=3)
    p.set_defaults(func=cmd_select_beta)

    p = sub.add_parser("eval", help="score a trained model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=("conventional", "generalized"), default="conventional")
    p.add_argument("--gzsl-seen-centers", choices=("synthetic", "real"), default="synthetic")
    p.add_argument("--out", help="report CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cluster", help="k-means on the unseen features")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=None, help="cluster count (default: number of unseen classes)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--out-centers")
    p.add_argument("--out-assignments")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("match-report", help="matching and Chamfer structure of a model's unseen centers")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--cost", choices=COSTS, default="squared")
    p.set_defaults(func=cmd_match_report)

    p = sub.add_parser("suite", help="run a suite file of experiments")
    p.add_argument("--suite", required=True)
    p.add_argument("--out")
    p.add_argument("--mode", choices=("conventional", "generalized"), default="conventional")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timings", action="store_true", help="add a runtime column (not reproducible)")
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (DataError, ValueError, OSError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
