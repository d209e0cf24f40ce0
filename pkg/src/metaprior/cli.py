"""Command-line entry point: ``metaprior {train,eval,emit-prior,bo-run}``.

Exit status: 0 success, 2 usage or configuration error, 3 numeric
divergence, 4 checkpoint problem.
"""

import argparse
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import checkpoint as ckpt_io
from . import config as config_io
from .bo import evaluate_kshot, run_bo
from .errors import CheckpointError, ConfigError, NumericError, StructuralError
from .prior import META, PRIOR_KINDS, STANDARD_NORMAL, UNIFORM, baseline_prior, from_network
from .reptile import MetaState, train
from .tasks import GaussianTask, task_density

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_CHECKPOINT = 4

log = logging.getLogger("metaprior")

EVAL_PRIORS = {
    "all": (UNIFORM, META, STANDARD_NORMAL),
    "baselines": (UNIFORM, STANDARD_NORMAL),
    "uniform": (UNIFORM,),
}


def _write_text(path, text):
    """Replace ``path`` atomically."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _provenance(cfg):
    return [f"seed={cfg.seed}", "config=" + json.dumps(cfg.echo(), sort_keys=True)]


def _field(v):
    # repr round-trips floats exactly, which keeps reruns byte-identical
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def _csv(header, rows, comments=()):
    lines = [f"# {c}" for c in comments] + [",".join(header)]
    lines += [",".join(_field(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _load_checkpoint(path, cfg):
    if not path:
        raise CheckpointError("a checkpoint is required (--checkpoint)")
    ck = ckpt_io.load(path)
    if ck.layout != cfg.layout():
        raise CheckpointError(
            f"checkpoint layout does not match model_size={cfg.model_size} in config"
        )
    return ck


def _resolve(args, extra=None):
    flags = dict(extra or {})
    flags["acquisition"] = getattr(args, "acquisition", None)
    flags["mc_samples"] = getattr(args, "mc_samples", None)
    overrides = dict(args.set or [])
    overrides.update({k: v for k, v in flags.items() if v is not None})
    cfg = config_io.load(args.config, overrides)
    log.setLevel(cfg.log_level.upper())
    return cfg


def cmd_train(args) -> int:
    cfg = _resolve(args, {"outer_iters": args.outer_iters, "seed": args.seed,
                          "workers": args.workers, "checkpoint_out": args.checkpoint_out,
                          "checkpoint_in": args.checkpoint_in})
    rcfg = cfg.reptile()
    initial = None
    if cfg.checkpoint_in:
        ck = _load_checkpoint(cfg.checkpoint_in, cfg)
        initial = MetaState(ck.theta, ck.iteration)

    def progress(record):
        log.info(json.dumps(record, sort_keys=True))

    def save(state):
        ckpt_io.save(cfg.checkpoint_out, ckpt_io.Checkpoint(state.theta, state.iteration, cfg.seed))

    state = train(rcfg, cfg.task_class(), cfg.layout(), workers=cfg.workers,
                  initial=initial, progress=progress, log_every=cfg.log_every,
                  checkpoint=save, checkpoint_every=cfg.checkpoint_every)
    save(state)
    log.info(json.dumps({"checkpoint": cfg.checkpoint_out, "iteration": state.iteration}))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve(args, {"workers": args.workers, "results_out": args.out,
                          "checkpoint_in": args.checkpoint})
    kinds = EVAL_PRIORS[args.prior]
    meta = None
    if META in kinds:
        ck = _load_checkpoint(cfg.checkpoint_in, cfg)
        meta = MetaState(ck.theta, ck.iteration)
    result = evaluate_kshot(meta, cfg.bo(), cfg.task_class(),
                            eval_iterations=cfg.eval_iterations, eval_batch=cfg.eval_batch,
                            kinds=kinds, prior_grid_size=cfg.prior_grid_size,
                            k_max=cfg.k_max, workers=cfg.workers)
    payload = json.loads(result.to_json())
    payload["config"] = cfg.echo()
    payload["priors"] = list(kinds)
    _write_text(cfg.results_out + ".csv", result.to_csv(_provenance(cfg)))
    _write_text(cfg.results_out + ".json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for row in result.rows:
        log.info(json.dumps(row.__dict__))
    return EXIT_OK


def cmd_emit_prior(args) -> int:
    cfg = _resolve(args, {"checkpoint_in": args.checkpoint})
    ck = _load_checkpoint(cfg.checkpoint_in, cfg)
    prior = from_network(ck.theta, cfg.task_class().boundary, cfg.prior_grid_size)
    comments = _provenance(cfg) + [f"checkpoint_iteration={ck.iteration}"]
    _write_text(args.out, _csv(("x", "density"), zip(prior.grid, prior.density), comments))
    return EXIT_OK


def cmd_bo_run(args) -> int:
    cfg = _resolve(args, {"checkpoint_in": args.checkpoint})
    task_cfg = cfg.task_class()
    if not task_cfg.boundary.contains(args.task_mean):
        raise ConfigError(f"task mean {args.task_mean} outside boundary "
                          f"[{task_cfg.boundary.low}, {task_cfg.boundary.high}]")
    if not args.task_std > 0:
        raise ConfigError("task std must be positive")
    kind = args.prior or (META if cfg.checkpoint_in else UNIFORM)
    if kind == META:
        ck = _load_checkpoint(cfg.checkpoint_in, cfg)
        prior = from_network(ck.theta, task_cfg.boundary, cfg.prior_grid_size)
    else:
        prior = baseline_prior(kind, task_cfg.boundary, cfg.prior_grid_size)
    task = GaussianTask(args.task_mean, args.task_std)
    bo_cfg = cfg.bo(kind, shots=args.shots)
    trace = run_bo(task, prior, bo_cfg, task_cfg, np.random.default_rng([4, cfg.seed]))

    comments = _provenance(cfg) + [f"prior={kind}", f"task_mean={args.task_mean!r}",
                                   f"task_std={args.task_std!r}", f"final_mse={trace.final_mse!r}"]
    rows = [(i + 1, s.x, s.y, s.score) for i, s in enumerate(trace.steps)]
    _write_text(args.out + "_trace.csv",
                _csv(("step", "x", "y", "acquisition_score"), rows, comments))
    grid = task_cfg.boundary.grid(cfg.eval_grid_size)
    mean, var = trace.posterior.predict_many(grid)
    _write_text(args.out + "_posterior.csv",
                _csv(("x", "mean", "var", "truth"),
                     zip(grid, mean, var, task_density(task, grid)), comments))
    return EXIT_OK


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metaprior", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="key = value configuration file")
    common.add_argument("-s", "--set", action="append", type=_key_value, metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    acq = argparse.ArgumentParser(add_help=False)
    acq.add_argument("--acquisition", choices=("pi", "ei"))
    acq.add_argument("--mc-samples", type=int)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="meta-train the prior network")
    p.add_argument("--outer-iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--checkpoint-out")
    p.add_argument("--checkpoint-in", help="resume from this checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common, acq], help="k-shot MSE benchmark")
    p.add_argument("--checkpoint")
    p.add_argument("--prior", choices=sorted(EVAL_PRIORS), default="all")
    p.add_argument("--out", help="output prefix; writes PREFIX.csv and PREFIX.json")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("emit-prior", parents=[common], help="write the learned prior as CSV")
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_emit_prior)

    p = sub.add_parser("bo-run", parents=[common, acq], help="single Bayesian optimization trace")
    p.add_argument("--checkpoint")
    p.add_argument("--prior", choices=PRIOR_KINDS)
    p.add_argument("--task-mean", type=float, required=True)
    p.add_argument("--task-std", type=float, required=True)
    p.add_argument("--shots", type=int, default=10)
    p.add_argument("--out", required=True, help="writes OUT_trace.csv and OUT_posterior.csv")
    p.set_defaults(func=cmd_bo_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(handler)
    log.propagate = False
    log.setLevel(logging.INFO)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"metaprior: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as exc:
        print(f"metaprior: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except NumericError as exc:
        print(f"metaprior: numeric failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except StructuralError as exc:
        print(f"metaprior: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
