"""Command-line front end.

Subcommands: synth, build-sim, train, encode, eval, ablate.  Exit codes
are 0 on success, 2 for configuration errors, 3 for data errors, and 4
for numeric divergence; failures print a single machine-parsable line
``error: <kind>: <message>`` on stderr.

Every run writes a manifest.json into its output directory recording the
resolved configuration, sha256 digests of the inputs, the output files,
the package version, and wall-clock timings.

Heavy imports happen inside the handlers so the --threads flag (default
1, for bit-reproducible runs) can pin the BLAS thread pools before numpy
loads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


def _write_manifest(out_dir: str, command: str, config: dict,
                    inputs: list[str], outputs: list[str],
                    timings: dict) -> None:
    from . import __version__

    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {p: _sha256(p) for p in sorted(set(inputs))},
        "outputs": sorted(outputs),
        "timings": timings,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _bundle_input_paths(bundle_arg: str) -> list[str]:
    path = bundle_arg
    if os.path.isdir(path):
        path = os.path.join(path, "bundle.json")
    paths = [path]
    try:
        with open(path) as fh:
            manifest = json.load(fh)
        base = os.path.dirname(path)
        for key in ("image_features", "text_features", "labels"):
            if manifest.get(key):
                paths.append(os.path.join(base, manifest[key]))
    except (OSError, json.JSONDecodeError):
        pass  # load_bundle reports the real problem
    return paths


_OVERRIDE_KEYS = (
    "code_length", "epochs", "batch_size", "ks", "kr", "tau", "gamma",
    "mu1", "mu2", "beta", "learning_rate", "momentum", "weight_decay",
    "eta_base", "d_hidden", "seed", "hidden_act",
    "adaptive", "bin_opt", "corr", "struct", "pair_corr",
)


def _add_config_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON file with training config keys")
    sub.add_argument("--profile", help="built-in hyperparameter profile name")
    sub.add_argument("--code-length", type=int)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", type=int)
    sub.add_argument("--ks", type=int)
    sub.add_argument("--kr", type=int)
    sub.add_argument("--tau", type=int)
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--mu1", type=float)
    sub.add_argument("--mu2", type=float)
    sub.add_argument("--beta", type=float)
    sub.add_argument("--learning-rate", type=float)
    sub.add_argument("--momentum", type=float)
    sub.add_argument("--weight-decay", type=float)
    sub.add_argument("--eta-base", type=float)
    sub.add_argument("--d-hidden", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--hidden-act", choices=("relu", "tanh"))
    sub.add_argument("--adaptive", action=argparse.BooleanOptionalAction)
    sub.add_argument("--bin-opt", action=argparse.BooleanOptionalAction)
    sub.add_argument("--corr", action=argparse.BooleanOptionalAction)
    sub.add_argument("--struct", action=argparse.BooleanOptionalAction)
    sub.add_argument("--pair-corr", action=argparse.BooleanOptionalAction)


def _resolve_config(args: argparse.Namespace):
    """defaults < profile < config file < explicit flags."""
    from .errors import ConfigError
    from .trainer import PROFILES, TrainConfig

    flat = TrainConfig().to_dict()
    if args.profile:
        if args.profile not in PROFILES:
            raise ConfigError(
                f"unknown profile '{args.profile}'; available: {sorted(PROFILES)}"
            )
        flat.update(PROFILES[args.profile])
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid config JSON: {exc}")
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_cfg) - set(flat)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        flat.update(file_cfg)
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            flat[key] = value
    return TrainConfig.from_dict(flat)


def cmd_synth(args: argparse.Namespace) -> int:
    from .dataio import SynthConfig, generate_synthetic, save_bundle

    t0 = time.perf_counter()
    cfg = SynthConfig(
        classes=args.classes,
        instances=args.instances,
        dim_image=args.dim_image,
        dim_text=args.dim_text,
        label_cardinality=args.label_cardinality,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    bundle = generate_synthetic(cfg, train_size=args.train_size)
    os.makedirs(args.out, exist_ok=True)
    save_bundle(bundle, args.out)
    outputs = ["bundle.json", "image.assf", "text.assf", "labels.csv"]
    config = {**cfg.__dict__, "train_size": args.train_size}
    _write_manifest(args.out, "synth", config, [], outputs,
                    {"total_s": time.perf_counter() - t0})
    print(f"synth: wrote {bundle.n_rows} instances to {args.out}")
    return 0


def cmd_build_sim(args: argparse.Namespace) -> int:
    import numpy as np

    from . import corrmine, simgraph
    from .dataio import load_bundle, write_features

    t0 = time.perf_counter()
    cfg = _resolve_config(args)
    bundle = load_bundle(args.bundle)
    train_idx = bundle.split.train
    fi = bundle.image_features[train_idx]
    ft = bundle.text_features[train_idx]
    gamma = cfg.gamma if cfg.struct else 0.0
    semantic = simgraph.build_semantic(fi, ft, cfg.ks, gamma)

    sim_i = simgraph.cosine_matrix(fi)
    sim_t = simgraph.cosine_matrix(ft)
    if cfg.pair_corr:
        rel = corrmine.first_order_correlations(sim_i, sim_t, cfg.kr)
    else:
        rel = corrmine.init_correlations(sim_i, sim_t, cfg.kr, cfg.tau)

    os.makedirs(args.out, exist_ok=True)
    write_features(semantic.values, os.path.join(args.out, "semantic.assf"))
    dense = rel.to_dense()
    ii, jj = np.nonzero(np.triu(dense))
    with open(os.path.join(args.out, "correlations.csv"), "w") as fh:
        fh.write("i,j\n")
        for a, b in zip(ii.tolist(), jj.tolist()):
            fh.write(f"{a},{b}\n")
    stats = {"count": rel.popcount(), "order": rel.order, "epoch": rel.epoch}
    if bundle.labels is not None:
        stats.update(corrmine.correlation_stats(rel, bundle.labels[train_idx]))
    with open(os.path.join(args.out, "stats.json"), "w") as fh:
        json.dump(stats, fh, indent=1, sort_keys=True)
        fh.write("\n")
    outputs = ["semantic.assf", "correlations.csv", "stats.json"]
    _write_manifest(args.out, "build-sim", cfg.to_dict(),
                    _bundle_input_paths(args.bundle), outputs,
                    {"total_s": time.perf_counter() - t0})
    print(f"build-sim: semantic {semantic.order}x{semantic.order}, "
          f"{rel.popcount()} correlated pairs")
    return 0


def _encode_split(params, features, idx, hidden_act):
    import numpy as np

    from .hashnet import forward, sign_codes

    h = forward(params, features[idx].astype(np.float64), 1.0, hidden_act)
    return sign_codes(h)


def _self_evaluate(bundle, result, cfg, out_dir, map_cutoffs):
    """Encode the query/retrieval splits and write both direction reports."""
    from .evalkit import evaluate_direction
    from .hashnet import save_codes

    q, r = bundle.split.query, bundle.split.retrieval
    codes = {
        "query_image": _encode_split(result.params_image,
                                     bundle.image_features, q, cfg.hidden_act),
        "query_text": _encode_split(result.params_text,
                                    bundle.text_features, q, cfg.hidden_act),
        "db_image": _encode_split(result.params_image,
                                  bundle.image_features, r, cfg.hidden_act),
        "db_text": _encode_split(result.params_text,
                                 bundle.text_features, r, cfg.hidden_act),
    }
    outputs = []
    for name, mat in codes.items():
        fname = f"{name}.assb"
        save_codes(mat, os.path.join(out_dir, fname))
        outputs.append(fname)
    reports = {}
    if bundle.labels is not None:
        ql, dl = bundle.labels[q], bundle.labels[r]
        reports["I2T"] = evaluate_direction("I2T", codes["query_image"],
                                            codes["db_text"], ql, dl,
                                            map_cutoffs)
        reports["T2I"] = evaluate_direction("T2I", codes["query_text"],
                                            codes["db_image"], ql, dl,
                                            map_cutoffs)
        for direction, report in reports.items():
            fname = f"eval_{direction.lower()}.json"
            report.save_json(os.path.join(out_dir, fname))
            outputs.append(fname)
    return reports, outputs


def cmd_train(args: argparse.Namespace) -> int:
    from .dataio import load_bundle
    from .hashnet import save_checkpoint
    from .trainer import train

    t0 = time.perf_counter()
    cfg = _resolve_config(args)
    map_cutoffs = _parse_int_list(args.map_at, "map-at")
    bundle = load_bundle(args.bundle)
    result = train(bundle, cfg)
    t_train = time.perf_counter() - t0

    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(result.params_image, os.path.join(args.out, "imgnet.assp"))
    save_checkpoint(result.params_text, os.path.join(args.out, "txtnet.assp"))
    with open(os.path.join(args.out, "history.jsonl"), "w") as fh:
        for record in result.history:
            fh.write(json.dumps(record.to_dict(), sort_keys=True))
            fh.write("\n")
    outputs = ["imgnet.assp", "txtnet.assp", "history.jsonl"]
    reports, eval_outputs = _self_evaluate(bundle, result, cfg, args.out,
                                           map_cutoffs)
    outputs.extend(eval_outputs)
    inputs = _bundle_input_paths(args.bundle)
    if args.config:
        inputs.append(args.config)
    _write_manifest(args.out, "train", cfg.to_dict(), inputs, outputs,
                    {"train_s": t_train,
                     "total_s": time.perf_counter() - t0})
    line = f"train: {cfg.epochs} epochs done"
    for direction, report in sorted(reports.items()):
        line += f", {direction} MAP@all {report.map_all:.4f}"
    print(line)
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    import numpy as np

    from .dataio import load_features
    from .hashnet import forward, load_checkpoint, save_codes, sign_codes

    t0 = time.perf_counter()
    params = load_checkpoint(args.checkpoint)
    feats = load_features(args.features, expected_dim=params.d_in)
    codes = sign_codes(forward(params, feats.astype(np.float64), 1.0,
                               args.hidden_act))
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    save_codes(codes, args.out)
    _write_manifest(out_dir, "encode", {"hidden_act": args.hidden_act},
                    [args.features, args.checkpoint],
                    [os.path.basename(args.out)],
                    {"total_s": time.perf_counter() - t0})
    print(f"encode: {codes.shape[0]} codes of {codes.shape[1]} bits -> {args.out}")
    return 0


def _parse_int_list(text: str, flag: str) -> list[int]:
    from .errors import ConfigError

    try:
        values = [int(v) for v in str(text).split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"--{flag}: expected comma-separated ints, got '{text}'")
    if not values or any(v < 1 for v in values):
        raise ConfigError(f"--{flag}: values must be positive ints")
    return values


def cmd_eval(args: argparse.Namespace) -> int:
    from .dataio import load_labels
    from .errors import DataError
    from .evalkit import evaluate_direction
    from .hashnet import load_codes

    t0 = time.perf_counter()
    map_cutoffs = _parse_int_list(args.map_at, "map-at")
    k_grid = _parse_int_list(args.k_grid, "k-grid") if args.k_grid else None
    query_codes = load_codes(args.query_codes)
    db_codes = load_codes(args.db_codes)
    query_labels = load_labels(args.query_labels)
    db_labels = load_labels(args.db_labels)
    if query_labels.shape[0] != query_codes.shape[0]:
        raise DataError("eval: query labels and codes disagree on row count")
    if db_labels.shape[0] != db_codes.shape[0]:
        raise DataError("eval: db labels and codes disagree on row count")
    report = evaluate_direction(args.direction, query_codes, db_codes,
                                query_labels, db_labels, map_cutoffs, k_grid)
    os.makedirs(args.out, exist_ok=True)
    report.save_json(os.path.join(args.out, "report.json"))
    report.save_curves_csv(os.path.join(args.out, "pr_curve.csv"),
                           os.path.join(args.out, "topk_curve.csv"))
    _write_manifest(args.out, "eval",
                    {"direction": args.direction, "map_at": map_cutoffs},
                    [args.query_codes, args.db_codes, args.query_labels,
                     args.db_labels],
                    ["report.json", "pr_curve.csv", "topk_curve.csv"],
                    {"total_s": time.perf_counter() - t0})
    line = f"eval {args.direction}: MAP@all {report.map_all:.4f}"
    for k, v in sorted(report.map_at.items()):
        line += f", MAP@{k} {v:.4f}"
    print(line)
    return 0


_VARIANTS = {
    "noadapt": ("ASSPH_NoAdapt", {"adaptive": False}),
    "paircorr": ("ASSPH_PairCorr", {"pair_corr": True}),
    "nocorr": ("ASSPH_NoCorr", {"corr": False}),
    "nobinopt": ("ASSPH_NoBinOpt", {"bin_opt": False}),
}


def cmd_ablate(args: argparse.Namespace) -> int:
    import dataclasses

    from .dataio import load_bundle
    from .errors import ConfigError, DataError
    from .trainer import TrainConfig, train

    t0 = time.perf_counter()
    cfg = _resolve_config(args)
    map_cutoffs = _parse_int_list(args.map_at, "map-at")
    names = [v for v in args.variants.split(",") if v]
    unknown = [v for v in names if v not in _VARIANTS]
    if unknown:
        raise ConfigError(
            f"unknown variants {unknown}; available: {sorted(_VARIANTS)}"
        )
    bundle = load_bundle(args.bundle)
    if bundle.labels is None:
        raise DataError("ablate needs a labeled bundle to score variants")

    os.makedirs(args.out, exist_ok=True)
    rows = {}
    outputs = ["ablation.json"]
    runs = [("ASSPH", {})] + [_VARIANTS[v] for v in names]
    for title, patch in runs:
        run_cfg = TrainConfig.from_dict({**cfg.to_dict(), **patch})
        result = train(bundle, run_cfg)
        sub = os.path.join(args.out, title)
        os.makedirs(sub, exist_ok=True)
        reports, sub_outputs = _self_evaluate(bundle, result, run_cfg, sub,
                                              map_cutoffs)
        outputs.extend(os.path.join(title, name) for name in sub_outputs)
        rows[title] = {d: reports[d].map_all for d in ("I2T", "T2I")}
        print(f"ablate {title}: I2T {rows[title]['I2T']:.4f}, "
              f"T2I {rows[title]['T2I']:.4f}")
    table = {
        "code_length": cfg.code_length,
        "seed": cfg.seed,
        "rows": rows,
    }
    with open(os.path.join(args.out, "ablation.json"), "w") as fh:
        json.dump(table, fh, indent=1, sort_keys=True)
        fh.write("\n")
    inputs = _bundle_input_paths(args.bundle)
    if args.config:
        inputs.append(args.config)
    _write_manifest(args.out, "ablate", cfg.to_dict(), inputs, outputs,
                    {"total_s": time.perf_counter() - t0})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assph",
        description="Unsupervised cross-modal hashing with structural "
                    "similarity and adaptive correlation mining.",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS thread cap (default 1 for reproducibility)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-modality bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--instances", type=int, default=2000)
    p.add_argument("--dim-image", type=int, default=24)
    p.add_argument("--dim-text", type=int, default=20)
    p.add_argument("--label-cardinality", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-size", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-sim",
                       help="dump the semantic matrix and seed correlations")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_build_sim)

    p = sub.add_parser("train", help="train both modality encoders")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--map-at", default="50",
                   help="comma-separated MAP cutoffs for the self-evaluation")
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="binary codes for a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden-act", choices=("relu", "tanh"), default="relu")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("eval", help="score stored codes against labels")
    p.add_argument("--query-codes", required=True)
    p.add_argument("--db-codes", required=True)
    p.add_argument("--query-labels", required=True)
    p.add_argument("--db-labels", required=True)
    p.add_argument("--direction", default="I2T")
    p.add_argument("--map-at", default="50")
    p.add_argument("--k-grid", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train the full model plus ablations")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--map-at", default="50")
    p.add_argument("--variants", default="noadapt,paircorr,nocorr,nobinopt")
    _add_config_args(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    # cap BLAS pools before numpy comes in; harmless if numpy is loaded
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(max(args.threads, 1)))
    from .errors import ConfigError, DataError, DivergenceError

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
