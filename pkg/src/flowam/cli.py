"""flowctl command line: pretrain / finetune / eval / oracle / plot-data.

Exit codes: 0 success, 1 usage or validation failure, 2 numerical abort.
All artifacts are written atomically (temp file + rename) under the run's
output directory; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import checkpoint as ckpt_io
from .config import (
    TOOL_VERSION,
    RunConfig,
    make_distribution,
    make_reward,
    parse_config,
)
from .dynamics import sample_batch
from .errors import FlowError, NonFiniteError, ParseError, ValidationError
from .evaluation import EVAL_COLUMNS, evaluate
from .oracles import (
    GaussianFlowSpec,
    ToyDiffusionSpec,
    ToyKind,
    rf_relative_strength,
    toy_control_component,
)
from .train import METRICS_COLUMNS, TIMING_COLUMNS, finetune, pretrain, write_csv


def _atomic_write_text(path: str, text: str) -> None:
    import tempfile

    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _workers(cfg: RunConfig) -> int:
    env = os.environ.get("FLOWCTL_THREADS")
    if env is not None:
        return max(1, int(env))
    return cfg["workers"]


def _load_run(args) -> RunConfig:
    cfg = parse_config(args.config)
    if getattr(args, "outdir", None):
        cfg.values["outdir"] = args.outdir
    return cfg


def _emit_run_files(cfg: RunConfig, rows, timings=None) -> None:
    outdir = cfg["outdir"]
    _atomic_write_text(os.path.join(outdir, "config.resolved"), cfg.resolved_text())
    write_csv(rows, METRICS_COLUMNS, os.path.join(outdir, "metrics.csv"))
    if timings is not None:
        write_csv(timings, TIMING_COLUMNS, os.path.join(outdir, "timings.csv"))


def cmd_pretrain(args) -> int:
    cfg = _load_run(args)
    dist = make_distribution(cfg)
    train_cfg = cfg.train
    ckpt, rows = pretrain(train_cfg, dist, cfg.net)
    _emit_run_files(cfg, rows)
    ckpt_io.save(ckpt, os.path.join(cfg["outdir"], "ckpt_pretrain.bin"))
    print(f"pretrained {ckpt.vf.n_params} params over {train_cfg.iterations} "
          f"iterations -> {cfg['outdir']}")
    return 0


def cmd_finetune(args) -> int:
    cfg = _load_run(args)
    base = ckpt_io.load(args.base)
    reward = make_reward(cfg)
    from dataclasses import replace

    train_cfg = replace(cfg.train, workers=_workers(cfg))
    ckpt, rows, timings = finetune(train_cfg, base, reward)
    _emit_run_files(cfg, rows, timings)
    ckpt_io.save(ckpt, os.path.join(cfg["outdir"], "ckpt_finetune.bin"))
    print(f"finetuned ({train_cfg.method}) for {train_cfg.iterations} iterations; "
          f"final reward_mean {rows[-1]['reward_mean']:.4f} -> {cfg['outdir']}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_run(args)
    ckpt = ckpt_io.load(args.ckpt)
    base = ckpt_io.load(args.base)
    reward = make_reward(cfg)
    report = evaluate(
        ckpt, base, reward,
        n_samples=cfg["n_eval"], n_steps=cfg["eval_steps"],
        seed=cfg["eval_seed"], k=cfg["knn_k"],
    )
    row = report.as_row()
    write_csv([row], EVAL_COLUMNS, os.path.join(cfg["outdir"], "eval.csv"))
    for key in EVAL_COLUMNS:
        print(f"{key}: {row[key]}")
    return 0


def cmd_oracle(args) -> int:
    t = np.linspace(0.0, 1.0 if args.kind == "rp" else args.T, 1001)
    if args.kind == "rp":
        spec = GaussianFlowSpec(mu=0.0, sigma=args.sigma)
        ps = [float(p) for p in args.p.split(",")]
        cols = ["t"] + [f"R_{p:g}" for p in ps]
        rows = [
            {"t": float(ti), **{f"R_{p:g}": float(rf_relative_strength(spec, p, ti))
                                for p in ps}}
            for ti in t
        ]
    else:
        ve = ToyDiffusionSpec(kind=ToyKind.VE, T=args.T, eta=args.eta)
        vp = ToyDiffusionSpec(kind=ToyKind.VP, T=args.T, eta=args.eta)
        cols = ["t", "c_ve", "c_vp"]
        rows = [
            {"t": float(ti),
             "c_ve": float(toy_control_component(ve, ti)),
             "c_vp": float(toy_control_component(vp, ti))}
            for ti in t
        ]
    write_csv(rows, cols, args.out)
    print(f"wrote {len(rows)} rows -> {args.out}")
    return 0


def cmd_plot_data(args) -> int:
    ckpt = ckpt_io.load(args.ckpt)
    trajs = sample_batch(ckpt.vf, args.steps, args.n, args.seed)
    dim = trajs[0].dim
    cols = [f"x{i}" for i in range(dim)]
    rows = [{c: float(t.states[-1][i]) for i, c in enumerate(cols)} for t in trajs]
    write_csv(rows, cols, args.out)
    print(f"wrote {len(rows)} samples -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowctl",
        description="Flow-matching pretraining and reward fine-tuning toolkit.",
    )
    parser.add_argument("--version", action="version", version=TOOL_VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="flow-matching pretraining run")
    p.add_argument("--config", required=True)
    p.add_argument("--outdir", default=None)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("finetune", help="reward fine-tuning from a base checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--outdir", default=None)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="metrics for a checkpoint against its base")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--outdir", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("oracle", help="emit closed-form curves as CSV")
    p.add_argument("--kind", choices=("rp", "toy"), required=True)
    p.add_argument("--sigma", type=float, default=5.0)
    p.add_argument("--p", default="2,4,6")
    p.add_argument("--T", type=float, default=5.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("plot-data", help="dump terminal samples for plotting")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        return args.fn(args)
    except ValidationError as e:
        for violation in e.violations:
            print(f"error: {violation}", file=sys.stderr)
        return 1
    except (ParseError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NonFiniteError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return 2
    except FlowError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
