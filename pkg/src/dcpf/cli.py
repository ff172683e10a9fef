"""Command line interface: ``dcpf <command> [options]``.

Commands: simulate, prepare, train, evaluate, recommend, inspect-chains.
Settings resolve as command-line flag, then ``--config`` JSON file, then
built-in default.  ``DCPF_LOG`` sets verbosity (quiet, info, debug).

Exit status is 0 when every requested output was written, 2 for usage
errors and missing inputs, 1 for any other failure.  Outputs are staged in
memory and moved into place only once all of them are ready.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import __version__
from . import dataset as ds
from . import evaluation as ev
from . import generator as gen
from . import inference as inf
from . import edm
from .edm import ElementDistribution, Family
from .gamma_chain import ChainHyper, drift_label, drift_ratio

logger = logging.getLogger("dcpf")

LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
DEDUP_BY_KIND = {"counts": "sum", "stars": "keep_last", "binary": "keep_first"}
DEFAULT_METRICS = "auc,ndcg@10,ndcg@100,prec@10,prec@100,loglik"


class UsageError(Exception):
    pass


class MissingInputError(UsageError):
    pass


# ---------------------------------------------------------------------------
# parameter tables


@dataclass(frozen=True)
class Param:
    key: str
    type: Callable
    default: Any
    help: str
    choices: tuple | None = None
    required: bool = False

    @property
    def flag(self) -> str:
        return "--" + self.key.replace("_", "-")


def _opt_float(text):
    return None if text in (None, "", "none", "None") else float(text)


INIT_MEAN_RULE = "sqrt(E[eta]/K)"


def _init_mean(text):
    if text in ("auto", INIT_MEAN_RULE, None):
        return INIT_MEAN_RULE
    value = float(text)
    if not value > 0:
        raise ValueError("init_mean must be positive or 'auto'")
    return value


def _flag_bool(value):
    if isinstance(value, bool):
        return value
    raise ValueError(f"expected true or false, got {value!r}")


SIMULATE = [
    Param("out", str, None, "output tensor path (writes .ids and .truth beside it)", required=True),
    Param("users", int, 200, "number of users M"),
    Param("items", int, 200, "number of items N"),
    Param("k", int, 5, "latent components K"),
    Param("windows", int, 12, "time windows T"),
    Param("element", str, "ga", "element family", tuple(f.value for f in Family)),
    Param("theta", float, -1.0, "element natural parameter"),
    Param("kappa", float, 1.0, "element dispersion index"),
    Param("shape", float, gen.DEFAULT_HYPER.shape_state, "chain shapes iota = epsilon for both sides"),
    Param("init_shape", float, gen.DEFAULT_HYPER.init_shape, "initial-rate prior shape"),
    Param("init_mean", float, gen.DEFAULT_HYPER.init_mean, "initial-rate prior mean"),
    Param("max_cells", int, gen.MAX_CELLS_DEFAULT, "refuse if more nonzero cells are expected"),
    Param("seed", int, 0, "random seed"),
]

PREPARE = [
    Param("input", str, None, "event file or DCPF tensor", required=True),
    Param("out", str, None, "output tensor path (writes .ids beside it)", required=True),
    Param("split", str, None, "split manifest path (default: OUT.split)"),
    Param("delimiter", str, ",", "event field delimiter"),
    Param("header", _flag_bool, False, "event file starts with a header line"),
    Param("columns", str, "0,1,2,3", "user,item,timestamp[,value] columns as positions or header names"),
    Param("kind", str, "counts", "response kind, selects the in-window dedup policy", tuple(DEDUP_BY_KIND)),
    Param("dedup", str, None, "override the in-window dedup policy", ds.WITHIN_WINDOW_POLICIES),
    Param("windows", int, None, "number of windows T"),
    Param("window_length", int, None, "window length in timestamp units (used without --windows)"),
    Param("across", str, "none", "cross-window dedup policy", ds.ACROSS_WINDOW_POLICIES),
    Param("min_events", int, 0, "active filter: minimum events per entity (0 disables)"),
    Param("presence", float, 0.25, "active filter: leading/trailing window fraction to be present in"),
    Param("holdout", int, 2, "held-out trailing windows H"),
    Param("val_frac", float, 0.05, "validation fraction of held-out cells"),
    Param("max_bad_fraction", float, 0.01, "tolerated fraction of malformed lines"),
    Param("seed", int, 0, "split seed"),
]

TRAIN = [
    Param("tensor", str, None, "prepared tensor", required=True),
    Param("split", str, None, "split manifest (default: TENSOR.split)"),
    Param("model", str, None, "output model path", required=True),
    Param("log", str, None, "training log path (default: MODEL.log)"),
    Param("k", int, 70, "latent components K"),
    Param("element", str, "ga", "element family", tuple(f.value for f in Family)),
    Param("tau", float, 10000.0, "learning rate delay"),
    Param("xi", float, 0.7, "learning rate power"),
    Param("epsilon", float, 1.01, "auxiliary shape (users; items too unless --item-epsilon)"),
    Param("iota", float, 1.01, "state shape (users; items too unless --item-iota)"),
    Param("omega", float, 1.0, "state rate scale omega"),
    Param("omega_aux", float, 1.0, "auxiliary rate scale Omega"),
    Param("item_epsilon", _opt_float, None, "item auxiliary shape"),
    Param("item_iota", _opt_float, None, "item state shape"),
    Param("item_omega", _opt_float, None, "item state rate scale"),
    Param("item_omega_aux", _opt_float, None, "item auxiliary rate scale"),
    Param("init_shape", float, 1.0, "initial-rate prior shape (delta; sigma for items)"),
    Param("init_mean", _init_mean, INIT_MEAN_RULE, "initial-rate prior mean, a number or 'auto'"),
    Param("item_init_mean", _init_mean, INIT_MEAN_RULE, "item initial-rate prior mean"),
    Param("tol", float, 1e-5, "relative validation-likelihood change that stops training"),
    Param("max_epochs", int, 500, "epoch limit"),
    Param("train_on", str, "nonmissing", "cells visited by local steps", inf.TRAIN_MODES),
    Param("validation_mode", str, "full", "validation likelihood regime", inf.TRAIN_MODES),
    Param("batch_size", int, 64, "observed items per user (users per item) per sweep; 0 uses all"),
    Param("step_size", _opt_float, None, "constant step size instead of the schedule"),
    Param("init_sample_size", int, 1000, "nonzero cells used for the element MLE"),
    Param("init_jitter", float, 0.1, "multiplicative init jitter half-width"),
    Param("eta_max", int, 50, "initial latent-count truncation"),
    Param("static", _flag_bool, False, "train the single-window ablation"),
    Param("seed", int, 0, "random seed"),
    Param("threads", int, 1, "worker threads for local steps"),
]

EVALUATE = [
    Param("model", str, None, "model file", required=True),
    Param("tensor", str, None, "prepared tensor", required=True),
    Param("split", str, None, "split manifest (default: TENSOR.split)"),
    Param("out", str, "-", "key-value report path"),
    Param("rows", str, None, "also write delimited report rows here"),
    Param("roc", str, None, "also write ROC coordinates here"),
    Param("per_user", str, None, "also write per-user metric rows here"),
    Param("metrics", str, DEFAULT_METRICS, "comma-separated metrics"),
    Param("negatives", str, "auto", "AUC negatives", ("auto", "all", "sampled")),
    Param("n_negatives", int, ev.DEFAULT_SAMPLED_NEGATIVES, "sampled negatives per user and window"),
    Param("exclude_train", _flag_bool, True, "drop training items from rankings"),
    Param("loglik_mode", str, "full", "test likelihood regime", inf.TRAIN_MODES),
    Param("seed", int, 0, "negative sampling seed"),
]

RECOMMEND = [
    Param("model", str, None, "model file", required=True),
    Param("users", str, None, "comma-separated user ids", required=True),
    Param("window", int, None, "window to score (default: last grid window)"),
    Param("top", int, 10, "list length L"),
    Param("allow_coldstart", _flag_bool, False, "score unknown users with the population mean"),
    Param("tensor", str, None, "tensor whose training items are excluded (with --split)"),
    Param("split", str, None, "split manifest for exclusion"),
    Param("out", str, "-", "output path"),
]

INSPECT = [
    Param("model", str, None, "model file", required=True),
    Param("users", str, "", "comma-separated user ids"),
    Param("items", str, "", "comma-separated item ids"),
    Param("out", str, "-", "output path"),
]

PATH_KEYS = {"input", "tensor", "split", "model"}


def _add_params(parser: argparse.ArgumentParser, params: list[Param]):
    parser.add_argument("--config", help="JSON file of settings (keys as flags, with underscores)")
    for p in params:
        shown = "required" if p.required else p.default
        kwargs = dict(default=None, help=f"{p.help} (default: {shown})")
        if p.type is _flag_bool:
            parser.add_argument(p.flag, action=argparse.BooleanOptionalAction, **kwargs)
        else:
            parser.add_argument(p.flag, type=str, metavar=p.key.upper(), **kwargs)


def resolve(params: list[Param], args: argparse.Namespace) -> dict[str, Any]:
    """Flag over config file over default, with types and choices checked."""
    config = {}
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise MissingInputError(f"config file not found: {args.config}")
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise UsageError(f"{args.config}: expected a JSON object")
        known = {p.key for p in params}
        unknown = sorted(set(config) - known)
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {unknown}")
    out = {}
    for p in params:
        raw = getattr(args, p.key)
        if raw is None:
            raw = config.get(p.key, p.default)
        if raw is None:
            if p.required:
                raise UsageError(f"{p.flag} is required")
            out[p.key] = None
            continue
        try:
            value = p.type(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{p.flag}: {exc}") from None
        if p.choices is not None and value not in p.choices:
            raise UsageError(f"{p.flag}: {value!r} not in {list(p.choices)}")
        out[p.key] = value
    return out


def _require(*paths: str | None):
    for path in paths:
        if path is not None and not os.path.exists(path):
            raise MissingInputError(f"input not found: {path}")


# ---------------------------------------------------------------------------
# staged output


class Outputs:
    """Collect output files and write them all, or none, on commit."""

    def __init__(self):
        self.files: dict[str, bytes] = {}
        self.stdout: list[str] = []

    def add(self, path: str, content: str | bytes):
        if path == "-":
            self.stdout.append(content if isinstance(content, str) else content.decode())
            return
        self.files[path] = content.encode("utf-8") if isinstance(content, str) else content

    def commit(self):
        written = []
        try:
            for path, data in self.files.items():
                directory = os.path.dirname(os.path.abspath(path))
                fd, tmp = tempfile.mkstemp(dir=directory, prefix=".dcpf-")
                try:
                    with os.fdopen(fd, "wb") as fh:
                        fh.write(data)
                    os.replace(tmp, path)
                except BaseException:
                    if os.path.exists(tmp):
                        os.unlink(tmp)
                    raise
                written.append(path)
        except BaseException:
            for path in written:
                os.unlink(path)
            raise
        for text in self.stdout:
            sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    c = resolve(SIMULATE, args)
    hyper = ChainHyper(shape_state=c["shape"], shape_aux=c["shape"], init_shape=c["init_shape"],
                       init_mean=c["init_mean"])
    element = ElementDistribution(c["element"], c["theta"], c["kappa"])
    data = gen.generate(c["users"], c["items"], c["k"], c["windows"], hyper, hyper, element,
                        seed=c["seed"], max_cells=c["max_cells"])
    out = Outputs()
    out.add(c["out"], ds.format_tensor(data.tensor))
    out.add(ds.ids_path(c["out"]), ds.format_ids(data.tensor.users, data.tensor.items, data.tensor.grid))
    out.add(c["out"] + ".truth", gen.format_truth(data))
    out.commit()
    logger.info("simulated %d cells over %d x %d x %d", data.tensor.nnz, c["users"], c["items"], c["windows"])
    return 0


def _is_tensor_file(path: str) -> bool:
    with open(path, encoding="utf-8", errors="replace") as fh:
        return fh.readline().rstrip("\n") == ds.TENSOR_MAGIC


def _schema(c) -> ds.Schema:
    cols = [x.strip() for x in c["columns"].split(",")]
    if len(cols) not in (3, 4):
        raise UsageError("--columns needs user,item,timestamp[,value]")
    conv = [int(x) if x.isdigit() else x for x in cols]
    value = conv[3] if len(conv) == 4 else None
    if c["kind"] == "binary":
        value = None
    return ds.Schema(conv[0], conv[1], conv[2], value, c["delimiter"], c["header"])


def cmd_prepare(args) -> int:
    c = resolve(PREPARE, args)
    _require(c["input"])
    if _is_tensor_file(c["input"]):
        tensor = ds.read_tensor(c["input"])
    else:
        with open(c["input"], encoding="utf-8") as fh:
            events = ds.parse_events(fh, _schema(c), c["max_bad_fraction"])
        if c["windows"] is None and c["window_length"] is None:
            raise UsageError("event input needs --windows or --window-length")
        grid = ds.TimeGrid.from_events(events, c["windows"], c["window_length"])
        tensor = ds.discretize(events, grid, c["dedup"] or DEDUP_BY_KIND[c["kind"]])
    tensor = ds.dedup_across_windows(tensor, c["across"])
    if c["min_events"] > 0:
        tensor = ds.filter_active(tensor, c["min_events"], c["presence"])
    split = ds.split_by_time(tensor, c["holdout"], c["val_frac"], c["seed"])
    out = Outputs()
    out.add(c["out"], ds.format_tensor(tensor))
    out.add(ds.ids_path(c["out"]), ds.format_ids(tensor.users, tensor.items, tensor.grid))
    out.add(c["split"] or c["out"] + ".split", ds.format_split(split))
    out.commit()
    logger.info("prepared %d cells: %d users, %d items, %d windows", tensor.nnz, tensor.M, tensor.N, tensor.T)
    return 0


def fit_config(c: dict) -> inf.FitConfig:
    def hyper(prefix):
        def pick(name):
            value = c.get(prefix + name)
            return c[name] if value is None else value

        init_mean = c["item_init_mean" if prefix else "init_mean"]
        return ChainHyper(
            shape_state=pick("iota"), shape_aux=pick("epsilon"),
            rate_state=pick("omega"), rate_aux=pick("omega_aux"),
            init_shape=c["init_shape"], init_mean=None if init_mean == INIT_MEAN_RULE else init_mean,
        )

    return inf.FitConfig(
        K=c["k"], element=c["element"], hyper_user=hyper(""), hyper_item=hyper("item_"),
        learning_delay=c["tau"], learning_power=c["xi"], convergence_tol=c["tol"],
        max_epochs=c["max_epochs"], train_on=c["train_on"], validation_mode=c["validation_mode"],
        batch_size=c["batch_size"] or None, init_sample_size=c["init_sample_size"],
        init_jitter=c["init_jitter"], eta_max=c["eta_max"], step_size=c["step_size"],
        seed=c["seed"], threads=c["threads"],
    )


def dump_config(c: dict) -> str:
    """Effective training settings, excluding file paths.

    Unset item-side chain settings show the user-side values they inherit.
    """
    settings = {k: v for k, v in c.items() if k not in ("tensor", "split", "model", "log")}
    for key in ("epsilon", "iota", "omega", "omega_aux"):
        if settings.get("item_" + key) is None:
            settings["item_" + key] = settings[key]
    return json.dumps(settings, indent=2, sort_keys=True) + "\n"


def _load_split(tensor_path: str, split_path: str | None) -> tuple[ds.InteractionTensor, ds.DataSplit]:
    split_path = split_path or tensor_path + ".split"
    _require(tensor_path, ds.ids_path(tensor_path), split_path)
    tensor = ds.read_tensor(tensor_path)
    return tensor, ds.read_split(split_path, tensor)


def format_log_row(record: inf.EpochRecord) -> str:
    return f"{record.epoch} {record.value!r} {record.rho!r} {record.best!r}\n"


def cmd_train(args) -> int:
    if args.dump_config:
        params = [p for p in TRAIN if p.key not in PATH_KEYS | {"log"}]
        c = resolve([Param(p.key, p.type, p.default, p.help, p.choices) for p in params], args)
        sys.stdout.write(dump_config(c))
        return 0
    c = resolve(TRAIN, args)
    config = fit_config(c)
    _, split = _load_split(c["tensor"], c["split"])
    if c["static"]:
        split = ds.static_split(split)
    log = io.StringIO()
    log.write("epoch value rho best\n")
    model = inf.fit(split, config)
    for record in model.history:
        log.write(format_log_row(record))
    log.write(f"converged={'true' if model.converged else 'false'}\n")
    out = Outputs()
    data, ids_text = inf.serialize_model(model, c["model"])
    out.add(c["model"], data)
    out.add(ds.ids_path(c["model"]), ids_text)
    out.add(c["log"] or c["model"] + ".log", log.getvalue())
    out.commit()
    logger.info("trained %d epochs, converged=%s", len(model.history) - 1, model.converged)
    return 0


def _metric_L(metrics: list[str]) -> tuple[int, ...]:
    Ls = sorted({int(m.split("@")[1]) for m in metrics if "@" in m})
    return tuple(Ls) or ev.DEFAULT_L


def _check_grid(model: inf.FittedModel, tensor: ds.InteractionTensor, split: ds.DataSplit):
    if model.grid != tensor.grid:
        raise ValueError(f"model grid {model.grid.to_dict()} does not match tensor grid {tensor.grid.to_dict()}")
    if (model.M, model.N) != (tensor.M, tensor.N):
        raise ValueError(f"model covers {model.M} x {model.N} entities, tensor has {tensor.M} x {tensor.N}")
    expected = 1 if model.static else split.train_windows
    if model.train_windows != expected:
        raise ValueError(f"model horizon {model.train_windows} does not match the split ({expected})")


def cmd_evaluate(args) -> int:
    c = resolve(EVALUATE, args)
    _require(c["model"], ds.ids_path(c["model"]))
    tensor, split = _load_split(c["tensor"], c["split"])
    model = inf.load_model(c["model"])
    _check_grid(model, tensor, split)
    metrics = [m.strip() for m in c["metrics"].split(",") if m.strip()]
    config = ev.EvalConfig(L=_metric_L(metrics), negatives=c["negatives"], n_negatives=c["n_negatives"],
                           exclude_train=c["exclude_train"], loglik_mode=c["loglik_mode"], seed=c["seed"])
    report = ev.evaluate(model, split, config)
    values = report.select(metrics)
    out = Outputs()
    out.add(c["out"], ev.format_kv(values))
    if c["rows"]:
        out.add(c["rows"], ev.format_rows(values))
    if c["per_user"]:
        out.add(c["per_user"], ev.format_per_user(report, model.users))
    if c["roc"]:
        b = ev.binarize_testset(split, config.negatives, config.n_negatives, config.seed)
        out.add(c["roc"], ev.format_roc(*ev.roc_curve(ev.auc_scores(model, b.m, b.n, b.t), b.labels)))
    out.commit()
    return 0


def _id_list(text: str) -> list[str]:
    return [x for x in (s.strip() for s in text.split(",")) if x]


def cmd_recommend(args) -> int:
    c = resolve(RECOMMEND, args)
    _require(c["model"], ds.ids_path(c["model"]))
    model = inf.load_model(c["model"])
    seen = None
    if c["tensor"]:
        tensor, split = _load_split(c["tensor"], c["split"])
        _check_grid(model, tensor, split)
        seen = ev.seen_items(split)
    t = c["window"] if c["window"] is not None else model.grid.num_windows - 1
    if c["top"] < 1:
        raise UsageError("--top must be >= 1")
    index = model.user_index
    items_t = model.item_means(t)
    rows = io.StringIO()
    rows.write("user rank item score\n")
    for user in _id_list(c["users"]):
        m = index.get(user)
        if m is None and not c["allow_coldstart"]:
            rows.write(f"{user} error unknown-user nan\n")
            continue
        if m is not None:
            ratings = ev.rating_matrix(model, np.array([m]), t)[0]
        else:
            ratings = edm.response_mean(model.element, items_t @ model.user_means(t).mean(axis=0))
        exclude = seen[m] if (seen is not None and m is not None) else None
        ranked = ev.rank_items(ratings, -1 if m is None else m, t, exclude, c["top"])
        for r, (n, s) in enumerate(zip(ranked.items, ranked.scores), 1):
            rows.write(f"{user} {r} {model.items[n]} {float(s)!r}\n")
    out = Outputs()
    out.add(c["out"], rows.getvalue())
    out.commit()
    return 0


def cmd_inspect(args) -> int:
    c = resolve(INSPECT, args)
    _require(c["model"], ds.ids_path(c["model"]))
    model = inf.load_model(c["model"])
    p = model.params
    rows = io.StringIO()
    rows.write("side entity k t mean_state mean_aux drift\n")
    sides = (
        ("user", _id_list(c["users"]), model.user_index, p.user_u_shape, p.user_u_rate,
         p.user_z_shape, p.user_z_rate, model.hyper_user),
        ("item", _id_list(c["items"]), model.item_index, p.item_v_shape, p.item_v_rate,
         p.item_w_shape, p.item_w_rate, model.hyper_item),
    )
    for side, ids, index, a, b, az, bz, hyper in sides:
        label = drift_label(drift_ratio(hyper))
        for entity in ids:
            i = index.get(entity)
            if i is None:
                rows.write(f"{side} {entity} error unknown-entity nan nan nan\n")
                continue
            for k in range(p.K):
                for t in range(p.T):
                    rows.write(f"{side} {entity} {k} {t} {float(a[i, k, t] / b[i, k, t])!r} "
                               f"{float(az[i, k, t] / bz[i, k, t])!r} {label}\n")
    out = Outputs()
    out.add(c["out"], rows.getvalue())
    out.commit()
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcpf", description="Dynamic compound Poisson factorization.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    table = (
        ("simulate", SIMULATE, cmd_simulate, "sample a synthetic tensor with ground truth"),
        ("prepare", PREPARE, cmd_prepare, "discretize events and write a split manifest"),
        ("train", TRAIN, cmd_train, "fit a model"),
        ("evaluate", EVALUATE, cmd_evaluate, "score held-out windows"),
        ("recommend", RECOMMEND, cmd_recommend, "top-L items per user"),
        ("inspect-chains", INSPECT, cmd_inspect, "posterior mean chain trajectories"),
    )
    for name, params, handler, help_text in table:
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_params(p, params)
        if name == "train":
            p.add_argument("--dump-config", action="store_true",
                           help="print the effective settings as JSON and exit (default: off)")
        p.set_defaults(handler=handler)
    return parser


def _setup_logging():
    level = os.environ.get("DCPF_LOG", "info").lower()
    if level not in LOG_LEVELS:
        level = "info"
    logging.basicConfig(level=LOG_LEVELS[level], format="dcpf: %(levelname)s: %(message)s", stream=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging()
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"dcpf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, inf.FitError) as exc:
        print(f"dcpf {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
