"""Command-line interface.

Subcommands: simulate-forward, train, generate, sample-exact, condition,
anomaly, classify, validate.  Settings come from a declarative TOML config
(nested sections: process, forward, model, train, ...) with command-line
flags overriding file values.  All outputs are derived from the master seed;
nothing written contains timestamps, so runs are byte-reproducible.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import exact, generate as gen_mod, io as io_mod, score as score_mod
from . import support as support_mod, tasks, validate as validate_mod
from .backend import engine_name
from .dataio import load_dataset
from .errors import HitgenError
from .htransform import Bridge, ConstantH, SphereHit
from .kernels import BROWNIAN, GreenKernel, ORNSTEIN_UHLENBECK, ProcessSpec
from .sde import KillRule, dump_paths_csv, simulate_batch


def _load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise HitgenError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise HitgenError(f"malformed config {p}: {e}") from None


def _get(cfg, section, key, override=None, default=None, required=False):
    if override is not None:
        return override
    val = cfg.get(section, {}).get(key, default)
    if val is None and required:
        raise HitgenError(f"missing config value [{section}] {key}")
    return val


def _build_kernel(cfg, args) -> GreenKernel:
    kind = _get(cfg, "process", "kind", getattr(args, "process_kind", None), "brownian")
    kind = {"brownian": BROWNIAN, "bm": BROWNIAN,
            "ornstein-uhlenbeck": ORNSTEIN_UHLENBECK, "ou": ORNSTEIN_UHLENBECK}.get(kind)
    if kind is None:
        raise HitgenError("process.kind must be 'brownian' or 'ornstein-uhlenbeck'")
    dim = int(_get(cfg, "process", "dim", getattr(args, "dim", None), required=True))
    rate = float(_get(cfg, "process", "rate", getattr(args, "rate", None), required=True))
    theta = float(_get(cfg, "process", "ou_theta", None, 0.0))
    proc = ProcessSpec(kind, dim, rate, theta)
    mode = "analytic" if kind == BROWNIAN else "quadrature"
    return GreenKernel(proc, mode=mode)


def _build_forward(cfg, args, kernel):
    variant = _get(cfg, "forward", "variant", getattr(args, "forward", None), "constant")
    if variant == "constant":
        return ConstantH(kernel)
    if variant == "bridge":
        x1 = _get(cfg, "forward", "x1", None, required=True)
        return Bridge(kernel, np.asarray(x1, dtype=np.float64))
    if variant == "sphere":
        radius = float(_get(cfg, "forward", "radius", None, required=True))
        return SphereHit(kernel, radius)
    raise HitgenError(f"unknown forward variant {variant!r}")


def _load_data(cfg, args, kernel=None):
    path = _get(cfg, "paths", "dataset", getattr(args, "dataset", None), required=True)
    if not Path(path).exists():
        raise HitgenError(f"dataset not found: {path}")
    data = load_dataset(path)
    if kernel is not None and data.dim != kernel.dim:
        raise HitgenError(f"dataset dimension {data.dim} does not match "
                          f"configured dimension {kernel.dim}")
    return data


def _model_and_support(cfg, args):
    """Backward model + support: learned from a checkpoint, else exact from data."""
    ckpt = _get(cfg, "paths", "checkpoint", getattr(args, "checkpoint", None))
    epsilon_flag = getattr(args, "epsilon", None)
    if ckpt is not None:
        if not Path(ckpt).exists():
            raise HitgenError(f"checkpoint not found: {ckpt}")
        backward, epsilon, _ = io_mod.load_checkpoint(ckpt)
        sup_path = Path(str(ckpt) + ".support")
        dataset = _get(cfg, "paths", "dataset", getattr(args, "dataset", None))
        if sup_path.exists():
            est = support_mod.load(sup_path)
        elif dataset is not None:
            est = support_mod.build(load_dataset(dataset),
                                    float(epsilon_flag or epsilon))
        else:
            raise HitgenError(f"no support file next to {ckpt} and no dataset given")
        if epsilon_flag is not None and abs(est.epsilon - float(epsilon_flag)) > 0:
            est = support_mod.build(est.base_points, float(epsilon_flag))
        return backward, est
    kernel = _build_kernel(cfg, args)
    forward = _build_forward(cfg, args, kernel)
    data = _load_data(cfg, args, kernel)
    epsilon = float(_get(cfg, "model", "epsilon", epsilon_flag, required=True))
    backward = exact.build_exact_backward(data, forward)
    return backward, support_mod.build(data, epsilon)


def _model_cfg(cfg, args, key, default):
    return _get(cfg, "model", key, getattr(args, key, None), default)


def _out_dir(cfg, args) -> Path:
    out = Path(_get(cfg, "paths", "output_dir", args.output_dir, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_point(text) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=np.float64)
    except ValueError:
        raise HitgenError(f"cannot parse point {text!r}; expected 'v0,v1,...'") from None


# --- subcommands -------------------------------------------------------------

def cmd_simulate_forward(args):
    cfg = _load_config(args.config)
    kernel = _build_kernel(cfg, args)
    forward = _build_forward(cfg, args, kernel)
    data = _load_data(cfg, args, kernel)
    dt = float(_model_cfg(cfg, args, "dt", 1e-3))
    step_cap = int(_model_cfg(cfg, args, "step_cap", 1_000_000))
    tc = score_mod.TrainConfig(dt=dt, step_cap=step_cap,
                               paths_per_point=args.n_paths, seed=args.seed)
    rule = score_mod.forward_kill_rule(forward, tc)
    starts = np.repeat(data.points, args.n_paths, axis=0)
    paths = simulate_batch(forward, starts, rule, dt, args.seed,
                           record=args.dump_paths is not None, threads=args.threads)
    out = _out_dir(cfg, args)
    lifetimes = [p.lifetime for p in paths]
    events = [{"event": "forward-lifetime", "step": i, "value": lt, "seed": args.seed}
              for i, lt in enumerate(lifetimes)]
    io_mod.write_metrics(out / "forward_metrics.jsonl", events)
    if args.dump_paths is not None:
        dump_paths_csv(out / args.dump_paths, paths)
    print(json.dumps({"n_paths": len(paths),
                      "mean_lifetime": float(np.mean(lifetimes)),
                      "engine": engine_name()}, sort_keys=True))
    return 0


def cmd_train(args):
    cfg = _load_config(args.config)
    kernel = _build_kernel(cfg, args)
    forward = _build_forward(cfg, args, kernel)
    data = _load_data(cfg, args, kernel)
    epsilon = float(_get(cfg, "model", "epsilon", args.epsilon, required=True))
    est = support_mod.build(data, epsilon)
    tcfg = cfg.get("train", {})
    config = score_mod.TrainConfig(
        epochs=int(tcfg.get("epochs", 30)),
        batch_size=int(tcfg.get("batch_size", 256)),
        learning_rate=float(tcfg.get("learning_rate", 1e-3)),
        adam_betas=tuple(tcfg.get("adam_betas", (0.9, 0.999))),
        adam_eps=float(tcfg.get("adam_eps", 1e-8)),
        grad_clip_norm=float(tcfg.get("grad_clip_norm", 100.0)),
        seed=args.seed,
        paths_per_point=int(tcfg.get("paths_per_point", 32)),
        dt=float(_model_cfg(cfg, args, "dt", 1e-3)),
        step_cap=int(_model_cfg(cfg, args, "step_cap", 1_000_000)),
        steps_per_epoch=int(tcfg.get("steps_per_epoch", 100)),
        bridge_kill_eps=float(tcfg.get("bridge_kill_eps", 1e-2)),
        hidden=tuple(tcfg.get("hidden", (64, 64))),
        activation=tcfg.get("activation", "tanh"),
    )
    result = score_mod.train(data, forward, est, config, threads=args.threads)
    out = _out_dir(cfg, args)
    ckpt = Path(_get(cfg, "paths", "checkpoint", args.checkpoint, out / "model.ckpt"))
    metrics = {"epoch_losses": result.epoch_losses, "n_pairs": result.n_pairs,
               "n_paths": result.n_paths, "seed": args.seed,
               "epsilon": epsilon, "engine": engine_name()}
    io_mod.save_checkpoint(ckpt, result.params, forward, epsilon, metrics)
    support_mod.save(Path(str(ckpt) + ".support"), est)
    events = [{"event": "train-epoch-loss", "step": i, "value": v, "seed": args.seed}
              for i, v in enumerate(result.epoch_losses)]
    io_mod.write_metrics(out / "train_metrics.jsonl", events)
    print(json.dumps({"checkpoint": str(ckpt),
                      "final_loss": result.epoch_losses[-1] if result.epoch_losses else None,
                      "n_pairs": result.n_pairs}, sort_keys=True))
    return 0


def _run_generation(args, backward, est, inits, cfg):
    dt = float(_model_cfg(cfg, args, "dt", 1e-3))
    step_cap = int(_model_cfg(cfg, args, "step_cap", 1_000_000))
    batch = gen_mod.generate_many(backward, est, inits, args.n, dt,
                                  args.seed, step_cap=step_cap,
                                  threads=args.threads)
    out = _out_dir(cfg, args)
    io_mod.save_samples_csv(out / "samples.csv", batch)
    (out / "generation_metrics.json").write_text(
        json.dumps(batch.metrics(), indent=2, sort_keys=True) + "\n")
    return batch


def cmd_generate(args):
    cfg = _load_config(args.config)
    backward, est = _model_and_support(cfg, args)
    forward = backward.forward
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 0x1417)))
    inits = np.stack([gen_mod.init_unconditional(forward, rng, support=est)
                      for _ in range(args.n)])
    batch = _run_generation(args, backward, est, inits, cfg)
    print(json.dumps(batch.metrics(), sort_keys=True))
    return 0


def cmd_sample_exact(args):
    cfg = _load_config(args.config)
    kernel = _build_kernel(cfg, args)
    forward = _build_forward(cfg, args, kernel)
    data = _load_data(cfg, args, kernel)
    epsilon = float(_get(cfg, "model", "epsilon", args.epsilon, required=True))
    est = support_mod.build(data, epsilon)
    backward = exact.build_exact_backward(data, forward)
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 0x1417)))
    inits = np.stack([gen_mod.init_unconditional(forward, rng, support=est)
                      for _ in range(args.n)])
    batch = _run_generation(args, backward, est, inits, cfg)
    print(json.dumps(batch.metrics(), sort_keys=True))
    return 0


def cmd_condition(args):
    cfg = _load_config(args.config)
    backward, est = _model_and_support(cfg, args)
    x = _parse_point(args.init)
    if x.shape[0] != backward.kernel.dim:
        raise HitgenError(f"probe has dimension {x.shape[0]}, model expects "
                          f"{backward.kernel.dim}")
    batch = _run_generation(args, backward, est, x, cfg)
    summary = batch.metrics()
    from .htransform import DiscreteBackward, posterior_endpoint_law

    if isinstance(backward, DiscreteBackward):
        summary["exact_posterior"] = [float(v) for v in posterior_endpoint_law(backward, x)]
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_anomaly(args):
    cfg = _load_config(args.config)
    backward, est = _model_and_support(cfg, args)
    x = _parse_point(args.init)
    dt = float(_model_cfg(cfg, args, "dt", 1e-3))
    step_cap = int(_model_cfg(cfg, args, "step_cap", 1_000_000))
    threshold = float(_get(cfg, "anomaly", "threshold", args.threshold, required=True))
    report = tasks.anomaly_score(x, backward, est, args.n_runs, dt, args.seed,
                                 threshold, step_cap=step_cap, threads=args.threads)
    out = _out_dir(cfg, args)
    (out / "anomaly_report.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")
    print(json.dumps(report.to_json_dict(), sort_keys=True))
    return 0


def cmd_classify(args):
    cfg = _load_config(args.config)
    backward, est = _model_and_support(cfg, args)
    if not est.has_labels:
        raise HitgenError("classification needs a labelled dataset")
    x = _parse_point(args.init)
    dt = float(_model_cfg(cfg, args, "dt", 1e-3))
    step_cap = int(_model_cfg(cfg, args, "step_cap", 1_000_000))
    result = tasks.classify(x, backward, est, dt, args.seed, step_cap=step_cap)
    report = result.to_json_dict()
    if args.m_runs > 0:
        post = tasks.class_posterior(x, backward, est, args.m_runs, dt,
                                     args.seed + 1, step_cap=step_cap,
                                     threads=args.threads)
        report["posterior"] = post.to_json_dict()
    out = _out_dir(cfg, args)
    (out / "classify_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_validate(args):
    cfg = _load_config(args.config)
    reports = validate_mod.run_default_checks(seed=args.seed,
                                              n_endpoint=args.n_endpoint,
                                              n_control=args.n_control,
                                              threads=args.threads)
    out = _out_dir(cfg, args)
    payload = [r.to_json_dict() for r in reports]
    (out / "validation_report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}")
    return 0 if all(r.passed for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hitgen",
                                description="killed-diffusion generative modelling")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.add_argument("--output-dir", default=None, help="directory for outputs")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=False):
        sp.add_argument("--dataset")
        sp.add_argument("--dim", type=int)
        sp.add_argument("--rate", type=float)
        sp.add_argument("--process-kind", choices=["brownian", "ou"])
        sp.add_argument("--forward", choices=["constant", "bridge", "sphere"])
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--step-cap", type=int, dest="step_cap")
        if model:
            sp.add_argument("--checkpoint")

    sp = sub.add_parser("simulate-forward", help="forward corpus simulation")
    common(sp)
    sp.add_argument("--n-paths", type=int, default=8, help="paths per data point")
    sp.add_argument("--dump-paths", help="CSV filename for the step-by-step trace")
    sp.set_defaults(func=cmd_simulate_forward)

    sp = sub.add_parser("train", help="fit the backward score network")
    common(sp, model=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("generate", help="unconditional samples from a checkpoint")
    common(sp, model=True)
    sp.add_argument("--n", type=int, default=100)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("sample-exact", help="unconditional samples, exact backward")
    common(sp)
    sp.add_argument("--n", type=int, default=100)
    sp.set_defaults(func=cmd_sample_exact)

    sp = sub.add_parser("condition", help="samples conditioned on an initial state")
    common(sp, model=True)
    sp.add_argument("--init", required=True, help="comma-separated coordinates")
    sp.add_argument("--n", type=int, default=100)
    sp.set_defaults(func=cmd_condition)

    sp = sub.add_parser("anomaly", help="mean-lifetime anomaly score of a state")
    common(sp, model=True)
    sp.add_argument("--init", required=True)
    sp.add_argument("--n-runs", type=int, default=200)
    sp.add_argument("--threshold", type=float)
    sp.set_defaults(func=cmd_anomaly)

    sp = sub.add_parser("classify", help="classify a state by first-hit class")
    common(sp, model=True)
    sp.add_argument("--init", required=True)
    sp.add_argument("--m-runs", type=int, default=0,
                    help="extra runs for the class posterior (0 = skip)")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("validate", help="statistical self-tests")
    sp.add_argument("--n-endpoint", type=int, default=10_000)
    sp.add_argument("--n-control", type=int, default=5_000)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HitgenError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
