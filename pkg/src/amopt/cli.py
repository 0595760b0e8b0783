"""Command-line interface: generate, prepare, price, train, evaluate, explain.

Every subcommand reads defaults, then an optional ``--config`` JSON file,
then explicit flags, and writes the resolved configuration next to its
outputs.  Exit codes: 0 success, 1 usage/parameter error, 2 data error,
3 numeric error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import binomial, data, metrics, shapley, synthetic
from .errors import AmoptError, DataError, NumericError, ParameterError
from .nn import NetworkConfig, forward, load_model, save_model
from .nn.serialize import load_meta
from .training import TrainConfig, train

log = logging.getLogger("amopt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

MODEL_ORDER = ["MLP", "LSTM_6F", "LSTM_18F", "LSTM_21F", "SA_LSTM_21F", "SA_GRU_21F"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- model specs -------------------------------------------------------------

def parse_model_spec(token: str) -> tuple[str, int]:
    """``"sa_gru"`` or ``"lstm:18"`` -> (architecture, feature mode)."""
    arch, _, feats = token.strip().partition(":")
    arch = arch.lower()
    if arch not in ("mlp", "lstm", "sa_lstm", "sa_gru"):
        raise ParameterError(f"unknown architecture {arch!r}")
    mode = int(feats) if feats else (6 if arch == "mlp" else 21)
    if mode not in data.FEATURE_SETS:
        raise ParameterError(f"feature mode must be 6, 18 or 21, got {mode}")
    if arch == "mlp" and mode != 6:
        raise ParameterError("mlp only supports the 6-feature mode")
    return arch, mode


def model_tag(arch: str, mode: int) -> str:
    return "MLP" if arch == "mlp" else f"{arch.upper()}_{mode}F"


def _tag_order(tag):
    return (MODEL_ORDER.index(tag), tag) if tag in MODEL_ORDER else (len(MODEL_ORDER), tag)


def run_seed(seed: int, bucket: data.BucketKey) -> int:
    """Independent per-bucket stream derived from (seed, bucket id)."""
    return int(np.random.SeedSequence([seed, data.ALL_BUCKETS.index(bucket)]).generate_state(1)[0])


def _buckets(spec) -> list[data.BucketKey]:
    if spec in (None, "all"):
        return list(data.ALL_BUCKETS)
    if isinstance(spec, str):
        spec = spec.split(",")
    return [data.BucketKey.parse(s.strip()) for s in spec]


def _csv_list(value):
    return value.split(",") if isinstance(value, str) else list(value)


# -- config plumbing -----------------------------------------------------------

def resolve(defaults: dict, args: argparse.Namespace) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise DataError(f"config file not found: {args.config}") from None
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in defaults and value is not None:
            cfg[key] = value
    return cfg


def snapshot(cfg: dict, out_dir, name: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


# -- subcommands ---------------------------------------------------------------

GENERATE_DEFAULTS = {"seed": 0, "out": "market", **{k: v for k, v in synthetic.SyntheticConfig().to_dict().items()
                                                     if k != "seed"}}


def cmd_generate(args) -> int:
    cfg = resolve(GENERATE_DEFAULTS, args)
    syn = synthetic.SyntheticConfig(**{k: v for k, v in cfg.items() if k != "out"})
    market = synthetic.generate_quotes(syn)
    paths = synthetic.write_market(market, cfg["out"])
    snapshot(cfg, cfg["out"], "generate")
    print(f"wrote {len(market.quotes)} quotes over {len(market.dates)} days to {paths['quotes'].parent}")
    return EXIT_OK


PREPARE_DEFAULTS = {"seed": 0, "out": "prepared", "input": None, "quotes": None, "rates": None, "vols": None,
                    "strike_only": False}


def cmd_prepare(args) -> int:
    cfg = resolve(PREPARE_DEFAULTS, args)
    base = Path(cfg["input"]) if cfg["input"] else Path(".")
    paths = {k: cfg[k] or str(base / f"{k}.csv") for k in ("quotes", "rates", "vols")}
    counts = data.prepare(paths["quotes"], paths["rates"], paths["vols"], cfg["out"],
                          seed=cfg["seed"], strike_only=cfg["strike_only"])
    snapshot({**cfg, **paths}, cfg["out"], "prepare")
    for name, n in counts.items():
        print(f"{name:<16} {n}")
    return EXIT_OK


def cmd_price(args) -> int:
    params = binomial.TreeParams.from_days(args.spot, args.strike, args.rate, args.sigma, args.days,
                                           kind=args.kind, style=args.style, steps=args.steps)
    value, _ = binomial.price(params)
    print(f"{value:.6f}")
    return EXIT_OK


TRAIN_DEFAULTS = {"seed": 0, "out": "models", "data": "prepared", "models": "sa_gru", "buckets": "all",
                  "hidden": 64, "depth": None, "max_epochs": None, "patience": 2000, "batch_size": 1024,
                  "lr": None, "min_delta": 1e-7, "jobs": 1}


def _train_one(cfg: dict, bucket: data.BucketKey, spec: str):
    arch, mode = parse_model_spec(spec)
    tag = model_tag(arch, mode)
    bd = data.read_bucket(cfg["data"], bucket)
    splits = bd.splits()
    if splits is None:
        raise DataError(f"bucket {bucket.name} has too few samples ({len(bd)}) to train")
    X, y = bd.normalized(mode)
    tr, va, _ = splits
    if va.size == 0:
        raise DataError(f"bucket {bucket.name} has an empty validation split")
    seed = run_seed(cfg["seed"], bucket)
    net = NetworkConfig(arch, len(data.FEATURE_SETS[mode]), 1 if mode == 6 else 3,
                        hidden_width=cfg["hidden"], depth=cfg["depth"], seed=seed)
    tc = TrainConfig(learning_rate=cfg["lr"], batch_size=cfg["batch_size"], max_epochs=cfg["max_epochs"],
                     patience=cfg["patience"], min_delta=cfg["min_delta"], seed=seed)
    best, hist = train(tc, net, (X[tr], y[tr]), (X[va], y[va]))
    out = Path(cfg["out"])
    stem = f"{bucket.name}__{tag}"
    save_model(best, out / f"{stem}.model.json",
               extra={"bucket": bucket.name, "tag": tag, "features": mode, "best_epoch": hist.best_epoch,
                      "best_val_mse": hist.best_val, "epochs_run": len(hist)})
    hist.write_csv(out / f"{stem}.history.csv")
    return tag, hist.best_epoch, hist.best_val, len(hist)


def _train_job(job):
    cfg, bucket, spec = job
    try:
        return bucket, spec, _train_one(cfg, bucket, spec), None
    except AmoptError as exc:
        return bucket, spec, None, exc


def cmd_train(args) -> int:
    cfg = resolve(TRAIN_DEFAULTS, args)
    specs = _csv_list(cfg["models"])
    for s in specs:
        parse_model_spec(s)
    buckets = _buckets(cfg["buckets"])
    for b in buckets:
        for p in data.bucket_paths(cfg["data"], b):
            if not p.is_file():
                raise DataError(f"prepared data for bucket {b.name} not found ({p})")
    Path(cfg["out"]).mkdir(parents=True, exist_ok=True)
    snapshot(cfg, cfg["out"], "train")
    jobs = [(cfg, b, s) for b in buckets for s in specs]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(cfg["jobs"]) as pool:
            results = list(pool.map(_train_job, jobs))
    else:
        results = [_train_job(j) for j in jobs]
    worst = EXIT_OK
    for bucket, spec, res, exc in results:
        if exc is None:
            tag, epoch, val, n = res
            print(f"{bucket.name:<16} {tag:<12} best val mse {val:.6g} at epoch {epoch}/{n}")
        else:
            print(f"{bucket.name:<16} {spec:<12} FAILED: {exc}", file=sys.stderr)
            worst = max(worst, EXIT_NUMERIC if isinstance(exc, NumericError) else EXIT_DATA)
    return worst


def tree_baseline(X21: np.ndarray) -> np.ndarray:
    """American call prices from the latest-timestep raw features of each row."""
    i = {name: data.FEATURE_NAMES.index(name) for name in
         ("spot_price1", "strike1", "interest_rate1", "volatility1", "days_to_maturity1")}
    return binomial.price_many(X21[:, i["spot_price1"]], X21[:, i["strike1"]], X21[:, i["interest_rate1"]],
                               X21[:, i["volatility1"]], X21[:, i["days_to_maturity1"]],
                               kind="call", style="american")


def _checkpoints(models_dir, bucket):
    found = {}
    for path in sorted(Path(models_dir).glob(f"{bucket.name}__*.model.json")):
        tag = path.name[len(bucket.name) + 2:-len(".model.json")]
        found[tag] = path
    return found


def predict_bucket(path, bd: data.BucketData, rows: np.ndarray) -> np.ndarray:
    model = load_model(path)
    mode = load_meta(path).get("features", model.config.input_width)
    idx = data.FEATURE_SETS[mode]
    stats = bd.stats.subset(idx)
    Xn = data.apply_normalize(stats, bd.X[rows][:, idx])
    return data.denormalize_target(stats, forward(model, Xn))


EVALUATE_DEFAULTS = {"seed": 0, "out": "reports", "data": "prepared", "models": "models", "buckets": "all"}


def cmd_evaluate(args) -> int:
    cfg = resolve(EVALUATE_DEFAULTS, args)
    reports, tags = [], {"BT"}
    for bucket in _buckets(cfg["buckets"]):
        try:
            bd = data.read_bucket(cfg["data"], bucket)
        except DataError as exc:
            log.warning("%s", exc)
            continue
        splits = bd.splits()
        if splits is None or splits[2].size == 0:
            log.warning("bucket %s: empty test split, reported as n/a", bucket.name)
            continue
        test = splits[2]
        y = bd.y[test]
        reports.append(metrics.evaluate(y, tree_baseline(bd.X[test]), bucket, "BT"))
        ckpts = _checkpoints(cfg["models"], bucket)
        if not ckpts:
            log.warning("bucket %s: no checkpoints found in %s", bucket.name, cfg["models"])
        for tag, path in ckpts.items():
            reports.append(metrics.evaluate(y, predict_bucket(path, bd, test), bucket, tag))
            tags.add(tag)
    models = ["BT", *sorted(tags - {"BT"}, key=_tag_order)]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for metric in ("rmse", "mape", "r_squared"):
        table = metrics.report_table(reports, metric, models)
        table.write_csv(out / f"{metric}.csv")
        (out / f"{metric}.txt").write_text(table.to_text())
    with open(out / "metrics.csv", "w") as fh:
        fh.write("bucket,model,n,rmse,mape,r_squared,mape_excluded\n")
        for r in reports:
            fh.write(f"{r.bucket.name},{r.model_tag},{r.n},{r.rmse!r},{r.mape!r},{r.r_squared!r},{r.mape_excluded}\n")
    snapshot(cfg, out, "evaluate")
    print(metrics.report_table(reports, "rmse", models).to_text(), end="")
    return EXIT_OK


EXPLAIN_DEFAULTS = {"seed": 0, "out": "explain", "data": "prepared", "models": "models", "buckets": "all",
                    "tags": None, "mode": "auto", "permutations": 2000, "background": 100, "instances": 1000,
                    "per_instance": False}


def cmd_explain(args) -> int:
    cfg = resolve(EXPLAIN_DEFAULTS, args)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    wanted = set(_csv_list(cfg["tags"])) if cfg["tags"] else None
    done = 0
    for bucket in _buckets(cfg["buckets"]):
        ckpts = {t: p for t, p in _checkpoints(cfg["models"], bucket).items() if wanted is None or t in wanted}
        if not ckpts:
            continue
        bd = data.read_bucket(cfg["data"], bucket)
        splits = bd.splits()
        if splits is None:
            log.warning("bucket %s: too few samples to explain", bucket.name)
            continue
        tr, _, te = splits
        rng = np.random.default_rng(run_seed(cfg["seed"], bucket))
        bg_rows = np.sort(rng.choice(tr, size=min(cfg["background"], tr.size), replace=False))
        inst_rows = np.sort(rng.choice(te, size=min(cfg["instances"], te.size), replace=False))
        for tag, path in ckpts.items():
            model = load_model(path)
            mode = load_meta(path).get("features", model.config.input_width)
            idx = data.FEATURE_SETS[mode]
            stats = bd.stats.subset(idx)
            Xn = data.apply_normalize(stats, bd.X[:, idx])
            report = shapley.explain_instances(
                lambda rows, m=model: forward(m, rows), Xn[inst_rows], Xn[bg_rows], mode=cfg["mode"],
                seed=cfg["seed"], n_permutations=cfg["permutations"], target_scale=stats.y_range,
                target_offset=stats.y_min, feature_names=[data.FEATURE_NAMES[i] for i in idx])
            stem = f"{bucket.name}__{tag}"
            report.write_json(out / f"{stem}.shap.json", bucket=bucket.name, per_instance=cfg["per_instance"])
            report.write_ranking_csv(out / f"{stem}.ranking.csv")
            top = ", ".join(report.feature_names[i] for i in report.ranking[:3])
            print(f"{bucket.name:<16} {tag:<12} top features: {top}")
            done += 1
    snapshot(cfg, out, "explain")
    if not done:
        raise DataError(f"no checkpoints found in {cfg['models']}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _common(p, out_default):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output directory (default: {out_default})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="amopt", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic quotes/rates/vols market")
    _common(p, "market")
    p.add_argument("--trading-days", dest="trading_days", type=int)
    p.add_argument("--start-date", dest="start_date")
    p.add_argument("--s0", type=float)
    p.add_argument("--drift", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--strike-step", dest="strike_step", type=float)
    p.add_argument("--half-spread", dest="half_spread", type=float)
    p.add_argument("--vol-noise", dest="vol_noise", type=float, help="table noise, percentage points")
    p.add_argument("--rate-noise", dest="rate_noise", type=float, help="table noise, decimal")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("prepare", help="build the 15 bucket datasets from quote CSVs")
    _common(p, "prepared")
    p.add_argument("--input", help="directory holding quotes.csv, rates.csv, vols.csv")
    p.add_argument("--quotes")
    p.add_argument("--rates")
    p.add_argument("--vols")
    p.add_argument("--strike-only", dest="strike_only", action="store_const", const=True,
                   help="group sequences by strike alone instead of (strike, expiration)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("price", help="price one option on a CRR tree (dt = 1/252, n = days)")
    p.add_argument("--spot", type=float, required=True)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--kind", choices=["call", "put"], default="call")
    p.add_argument("--style", choices=["american", "european"], default="american")
    p.add_argument("--steps", type=int, help="override the step count (dt rescaled)")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("train", help="train models per bucket")
    _common(p, "models")
    p.add_argument("--data", help="prepared dataset directory")
    p.add_argument("--models", "--architectures", dest="models",
                   help="comma list of arch[:features], e.g. sa_gru,mlp,lstm:18")
    p.add_argument("--buckets", help="comma list such as ITM_d31_90, or 'all'")
    p.add_argument("--hidden", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--min-delta", dest="min_delta", type=float)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="RMSE/MAPE/R2 tables against the tree baseline")
    _common(p, "reports")
    p.add_argument("--data")
    p.add_argument("--models", help="checkpoint directory")
    p.add_argument("--buckets")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="Shapley feature attributions per bucket")
    _common(p, "explain")
    p.add_argument("--data")
    p.add_argument("--models", help="checkpoint directory")
    p.add_argument("--buckets")
    p.add_argument("--tags", help="comma list of model tags to explain (default all)")
    p.add_argument("--mode", choices=["auto", "exact", "sampled"])
    p.add_argument("--permutations", type=int)
    p.add_argument("--background", type=int)
    p.add_argument("--instances", type=int)
    p.add_argument("--per-instance", dest="per_instance", action="store_const", const=True)
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParameterError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
