"""Command-line interface.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
configuration error.  Settings are resolved as command-line flag, then
``--config`` JSON file, then built-in default; the effective settings are
echoed into every JSON artifact under ``"config"``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio, experiment, gradcheck as gc, model, sankey
from .errors import ConfigurationError, DataFormatError, DimensionError, InvalidInputError, SinkflowError
from .ot_layer import SinkhornConfig


class UsageError(SinkflowError):
    pass


DEFAULTS = {
    "common": {"seed": 0, "sinkhorn_iters": 100, "sinkhorn_tol": 1e-6},
    "ingest": {"relabel": False},
    "synth": {"k": 4, "elements": 1000, "steps": 50, "switch_prob": 0.2},
    "train": {"loss_mix": 0.5, "epochs": 300, "lr": 0.1, "optimizer": "gd", "hidden": None, "split": None},
    "eval": {
        "method": ",".join(experiment.METHODS),
        "seeds": None,
        "horizon": "3,5",
        "split": None,
        "loss_mix": None,
        "epochs": 300,
        "lr": 0.1,
        "optimizer": "gd",
        "hidden": None,
    },
    "predict": {"at": None},
    "rollout": {"at": None, "horizon": "5"},
    "gradcheck": {"k": "3,4,5,8", "trials": 50, "sinkhorn_iters": 100_000, "sinkhorn_tol": 1e-12},
    # forecasts must meet the 1e-9 row-sum invariant of the document
    "export-sankey": {"start": 0, "history": 3, "horizon": "1", "svg": None, "checkpoint": None,
                      "sinkhorn_iters": 10_000, "sinkhorn_tol": 1e-12},
}


def _add_common(p: argparse.ArgumentParser, *names):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file with default settings")
    p.add_argument("--input", default=S)
    p.add_argument("--output", default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--sinkhorn-iters", dest="sinkhorn_iters", type=int, default=S)
    p.add_argument("--sinkhorn-tol", dest="sinkhorn_tol", type=float, default=S)
    for n in names:
        if n == "k":
            p.add_argument("--k", default=S)
        elif n == "loss_mix":
            p.add_argument("--loss-mix", dest="loss_mix", type=float, default=S)
        elif n == "epochs":
            p.add_argument("--epochs", type=int, default=S)
        elif n == "lr":
            p.add_argument("--lr", type=float, default=S)
        elif n == "method":
            p.add_argument("--method", default=S, help="comma list of identity,avg,lr,mlp,sinkflow")
        elif n == "horizon":
            p.add_argument("--horizon", default=S, help="comma list of horizons")
        elif n == "optimizer":
            p.add_argument("--optimizer", choices=("gd", "momentum", "adam"), default=S)
        elif n == "hidden":
            p.add_argument("--hidden", default=S, help="comma list of hidden layer widths")
        elif n == "split":
            p.add_argument("--split", default=S, help="train,val,test lengths, e.g. 130,10,24")
        elif n == "checkpoint":
            p.add_argument("--checkpoint", default=S)
        elif n == "at":
            p.add_argument("--at", type=int, default=S, help="marginal index t; predicts plan t")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sinkflow", description="Sinkhorn mass-flow forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="timeline CSV -> marginals/plans JSON")
    _add_common(p)
    p.add_argument("--relabel", action="store_true", default=argparse.SUPPRESS,
                   help="greedily align faction ids across steps by member overlap")

    p = sub.add_parser("synth", help="generate a synthetic timeline CSV")
    _add_common(p, "k")
    p.add_argument("--elements", type=int, default=argparse.SUPPRESS)
    p.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    p.add_argument("--switch-prob", dest="switch_prob", type=float, default=argparse.SUPPRESS)
    p.add_argument("--spec", default=argparse.SUPPRESS, help="synthetic spec JSON (overrides --k etc.)")

    p = sub.add_parser("train", help="train the Sinkhorn flow model")
    _add_common(p, "loss_mix", "epochs", "lr", "optimizer", "hidden", "split")
    p.add_argument("--trace", default=argparse.SUPPRESS, help="loss trace path (default: <output>.trace.json)")

    p = sub.add_parser("eval", help="compare methods on a chronological split")
    _add_common(p, "loss_mix", "epochs", "lr", "optimizer", "hidden", "split", "method", "horizon")
    p.add_argument("--seeds", default=argparse.SUPPRESS, help="comma list of seeds (default: --seed)")

    p = sub.add_parser("predict", help="one-step plan prediction from a checkpoint")
    _add_common(p, "checkpoint", "at")

    p = sub.add_parser("rollout", help="multi-step prediction from a checkpoint")
    _add_common(p, "checkpoint", "at", "horizon")

    p = sub.add_parser("gradcheck", help="check the implicit backward pass against two oracles")
    _add_common(p, "k")
    p.add_argument("--trials", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("export-sankey", help="write a Sankey flow document")
    _add_common(p, "checkpoint", "horizon")
    p.add_argument("--start", type=int, default=argparse.SUPPRESS, help="first column (marginal index)")
    p.add_argument("--history", type=int, default=argparse.SUPPRESS, help="number of given columns")
    p.add_argument("--svg", default=argparse.SUPPRESS, help="also write a static SVG here")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    cmd = args.command
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS[cmd])
    flags = {key: val for key, val in vars(args).items() if key != "command"}
    path = flags.pop("config", None)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        cfg.update({key.replace("-", "_"): val for key, val in file_cfg.items() if key != "command"})
    cfg.update(flags)
    cfg["command"] = cmd
    return cfg


def _ints(text, name) -> list[int]:
    if isinstance(text, int):
        return [text]
    if isinstance(text, list):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name} must be a comma list of integers, got {text!r}") from None


def _require(cfg, key):
    if cfg.get(key) in (None, ""):
        raise UsageError(f"--{key.replace('_', '-')} is required for '{cfg['command']}'")
    return cfg[key]


def _input_path(cfg) -> Path:
    path = Path(_require(cfg, "input"))
    if not path.exists():
        raise UsageError(f"input file not found: {path}")
    return path


def _sink_cfg(cfg) -> SinkhornConfig:
    return SinkhornConfig(max_iters=int(cfg["sinkhorn_iters"]), tol=float(cfg["sinkhorn_tol"]))


def _split(cfg, n_plans):
    spec = cfg.get("split")
    if spec is None:
        return None
    vals = _ints(spec, "split")
    if len(vals) != 3:
        raise UsageError("--split needs three lengths: train,val,test")
    return dataio.SplitSpec(*vals)


def _emit(cfg, doc, text: str | None = None):
    text = text if text is not None else dataio.dumps(doc)
    out = cfg.get("output")
    if out:
        dataio.atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _echo(cfg) -> dict:
    return {key: val for key, val in sorted(cfg.items())}


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg) -> int:
    tl = dataio.ingest(_input_path(cfg))
    if cfg.get("relabel"):
        labels = dataio.relabel_max_overlap(tl.labels)
        tl = dataio.FactionTimeline(labels, int(labels.max()) + 1, tl.element_ids, tl.time_steps)
    data = dataio.FlowData.from_timeline(tl)
    doc = dataio.flows_to_dict(data)
    doc["config"] = _echo(cfg)
    doc["summary"] = {"T": tl.T, "N": tl.N, "k": tl.k,
                      "label_mapping": None if tl.label_mapping is None else {str(a): b for a, b in tl.label_mapping.items()}}
    print(f"T={tl.T} N={tl.N} k={tl.k}", file=sys.stderr)
    _emit(cfg, doc)
    return 0


def default_kernel(k: int, switch_prob: float) -> np.ndarray:
    """Doubly stochastic kernel: stay with ``1 - switch_prob``, else move to a random other faction."""
    K = np.full((k, k), switch_prob / (k - 1))
    np.fill_diagonal(K, 1.0 - switch_prob)
    return K


def cmd_synth(cfg) -> int:
    if cfg.get("spec"):
        try:
            with open(cfg["spec"], encoding="utf-8") as fh:
                spec = dataio.SyntheticSpec.from_dict(json.load(fh))
        except FileNotFoundError:
            raise UsageError(f"spec file not found: {cfg['spec']}") from None
    else:
        k = _ints(cfg["k"], "k")[0]
        if k < 2:
            raise UsageError("--k must be >= 2")
        spec = dataio.SyntheticSpec(
            k=k, N=int(cfg["elements"]), T=int(cfg["steps"]),
            kernel=default_kernel(k, float(cfg["switch_prob"])).tolist(), seed=int(cfg["seed"]),
        )
    tl = dataio.generate_synthetic(spec)
    out = _require(cfg, "output")
    dataio.write_timeline_csv(tl, out)
    return 0


def cmd_train(cfg) -> int:
    data = dataio.load_flows(_input_path(cfg))
    out = _require(cfg, "output")
    spec = _split(cfg, data.n_plans)
    train_idx = range(data.n_plans) if spec is None else dataio.split(data.n_plans, spec)[0]
    samples = model.make_samples(data.marginals, data.plans, train_idx)
    if not samples:
        raise UsageError("training range has no sample with a full three-step lag window")
    hidden = None if cfg.get("hidden") is None else _ints(cfg["hidden"], "hidden")
    params = model.init_params(data.k, hidden, int(cfg["seed"]))
    loss_cfg = model.LossConfig(loss_mix=float(cfg["loss_mix"]), learning_rate=float(cfg["lr"]),
                                epochs=int(cfg["epochs"]), optimizer=cfg["optimizer"])
    sink_cfg = _sink_cfg(cfg)
    result = model.train(samples, params, loss_cfg, sink_cfg)
    ckpt = model.checkpoint_dict(result.params, loss_cfg, sink_cfg)
    ckpt["config"] = _echo(cfg)
    dataio.write_json(out, ckpt)
    trace_path = cfg.get("trace") or f"{out}.trace.json"
    dataio.write_json(trace_path, {"loss_trace": result.loss_trace, "config": _echo(cfg)})
    return 0


def cmd_eval(cfg) -> int:
    data = dataio.load_flows(_input_path(cfg))
    spec = _split(cfg, data.n_plans)
    if spec is None:
        raise UsageError("--split is required for 'eval'")
    methods = [m.strip() for m in str(cfg["method"]).split(",") if m.strip()]
    for m in methods:
        if m not in experiment.METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(experiment.METHODS)}")
    seeds = _ints(cfg["seeds"], "seeds") if cfg.get("seeds") is not None else [int(cfg["seed"])]
    grid = list(experiment.LOSS_MIX_GRID) if cfg.get("loss_mix") is None else [float(cfg["loss_mix"])]
    ecfg = experiment.ExperimentConfig(
        seeds=seeds, loss_mix_grid=grid,
        hidden_sizes=None if cfg.get("hidden") is None else _ints(cfg["hidden"], "hidden"),
        learning_rate=float(cfg["lr"]), epochs=int(cfg["epochs"]), optimizer=cfg["optimizer"],
        sinkhorn_iters=int(cfg["sinkhorn_iters"]), sinkhorn_tol=float(cfg["sinkhorn_tol"]),
        horizons=_ints(cfg["horizon"], "horizon"),
    )
    report = experiment.run_experiment(data, spec, methods, ecfg)
    report["cli_config"] = _echo(cfg)
    _emit(cfg, report)
    return 1 if report["errors"] else 0


def _checkpoint_and_data(cfg):
    data = dataio.load_flows(_input_path(cfg))
    ckpt = Path(_require(cfg, "checkpoint"))
    if not ckpt.exists():
        raise UsageError(f"checkpoint not found: {ckpt}")
    params, _, sink_cfg = model.load_checkpoint(ckpt)
    if params.k != data.k:
        raise UsageError(f"checkpoint has k={params.k} but data has k={data.k}")
    t = data.n_plans if cfg.get("at") is None else int(cfg["at"])
    if not 0 <= t < data.marginals.shape[0]:
        raise UsageError(f"--at {t} outside [0, {data.marginals.shape[0] - 1}]")
    return data, params, t


def _plan_doc(cfg, data, t, plans):
    return {
        "k": data.k,
        "t": t,
        "plans": [P.tolist() for P in plans],
        "marginals": [P.sum(axis=0).tolist() for P in plans],
        "config": _echo(cfg),
    }


def cmd_predict(cfg) -> int:
    data, params, t = _checkpoint_and_data(cfg)
    inp = model.ModelInput.from_history(data.marginals, data.plans, t)
    P = model.predict_plan(inp, params, _sink_cfg(cfg))
    _emit(cfg, _plan_doc(cfg, data, t, [P]))
    return 0


def cmd_rollout(cfg) -> int:
    data, params, t = _checkpoint_and_data(cfg)
    h = _ints(cfg["horizon"], "horizon")[-1]
    if h < 1:
        raise UsageError("--horizon must be >= 1")
    inp = model.ModelInput.from_history(data.marginals, data.plans, t)
    plans = model.rollout(inp, params, h, _sink_cfg(cfg))
    _emit(cfg, _plan_doc(cfg, data, t, plans))
    return 0


def cmd_gradcheck(cfg) -> int:
    ks = _ints(cfg["k"], "k")
    trials = int(cfg["trials"])
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    if any(k < 2 for k in ks):
        raise UsageError("--k values must be >= 2")
    sink = SinkhornConfig(max_iters=int(cfg["sinkhorn_iters"]), tol=float(cfg["sinkhorn_tol"]),
                          backward_max_iters=100_000, backward_tol=1e-11)
    reports = [gc.gradcheck(k, trials, seed=int(cfg["seed"]) + k, cfg=sink) for k in ks]
    passed = all(r.passed for r in reports)
    doc = {"passed": passed, "reports": [r.to_dict() for r in reports], "config": _echo(cfg)}
    for r in reports:
        print(f"k={r.k}: fd={r.max_fd_error:.2e} unrolled={r.max_unrolled_error:.2e} "
              f"ratio={r.max_iteration_ratio:.2f} {'PASS' if r.passed else 'FAIL'}", file=sys.stderr)
    _emit(cfg, doc)
    return 0 if passed else 1


def cmd_export_sankey(cfg) -> int:
    data = dataio.load_flows(_input_path(cfg))
    _require(cfg, "output")
    start, hist = int(cfg["start"]), int(cfg["history"])
    h = _ints(cfg["horizon"], "horizon")[-1]
    if hist < 1 or h < 0:
        raise UsageError("--history must be >= 1 and --horizon >= 0")
    anchor = start + hist - 1  # last given column
    if start < 0 or anchor >= data.marginals.shape[0]:
        raise UsageError(f"columns {start}..{anchor} are outside the data")
    given_x = list(data.marginals[start : anchor + 1])
    given_p = list(data.plans[start:anchor])
    if cfg.get("checkpoint"):
        params, _, _ = model.load_checkpoint(cfg["checkpoint"])
        if h < 1:
            raise UsageError("predicted export needs --horizon >= 1")
        inp = model.ModelInput.from_history(data.marginals, data.plans, anchor)
        pred = model.rollout(inp, params, h, _sink_cfg(cfg))
        marginals = given_x + [P.sum(axis=0) for P in pred]
        plans = given_p + pred
    else:
        end = anchor + h
        if end >= data.marginals.shape[0]:
            raise UsageError(f"horizon {h} runs past the last time step")
        marginals = list(data.marginals[start : end + 1])
        plans = list(data.plans[start:end])
    if not plans:
        raise UsageError("nothing to export: need at least one flow block")
    doc = sankey.sankey_document(marginals, plans, marker=hist,
                                 time_labels=[f"T{start + i + 1}" for i in range(len(marginals))])
    doc["config"] = _echo(cfg)
    _emit(cfg, doc)
    if cfg.get("svg"):
        dataio.atomic_write_text(cfg["svg"], sankey.to_svg(doc))
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "rollout": cmd_rollout,
    "gradcheck": cmd_gradcheck,
    "export-sankey": cmd_export_sankey,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on malformed flags
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (UsageError, ConfigurationError, DataFormatError, DimensionError, FileNotFoundError) as exc:
        print(f"sinkflow {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (SinkflowError, FloatingPointError, InvalidInputError) as exc:
        print(f"sinkflow {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
