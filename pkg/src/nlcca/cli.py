"""Command-line entry point: ``nlcca {generate,train,evaluate,ablate,oracle-check}``.

Exit codes: 0 when every check passes, 1 on an acceptance violation, 2 on a
configuration error and 3 on a runtime failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, NlccaError, WrongExperiment
from .harness import (
    RESULT_COLUMNS,
    ExperimentConfig,
    _write_table,
    default_output_dir,
    emit_report,
    final_metrics,
    load_config,
    make_problem,
    run_experiment,
)
from .latent import default_rho

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

TRAIN_EXPERIMENTS = ("identifiability", "reparam_invariance", "consistency")
ABLATIONS = ("ablate_source_dim", "ablate_dominance", "ablate_dim_mismatch")


def _config(args, default_experiment=None) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif default_experiment:
        cfg = ExperimentConfig(default_experiment)
    else:
        raise ConfigError("--config is required")
    if args.seed is not None:
        cfg = cfg.replace(seeds=(args.seed,))
    return cfg


def _out_dir(args, cfg) -> Path:
    return Path(args.out) if args.out else Path(default_output_dir(cfg))


def _report(checks, out=None) -> int:
    out = out or sys.stdout
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}", file=out)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def _progress(msg):
    print(f"[run] {msg}", file=sys.stderr, flush=True)


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    rho = cfg.rho if cfg.rho is not None else default_rho(cfg.d_S, cfg.rho_high, cfg.rho_low)
    for seed in cfg.seeds:
        spec, (g, gp), (S, Sp, X, Xp) = make_problem(cfg, cfg.family, cfg.d_S, rho, seed)
        d = out / f"seed{seed}"
        d.mkdir(exist_ok=True)
        (d / "latent_spec.json").write_text(spec.to_json())
        (d / "decoder_f.json").write_text(g.to_json())
        (d / "decoder_fprime.json").write_text(gp.to_json())
        np.savez(d / "samples.npz", S=S, S_prime=Sp, X=X, X_prime=Xp)
        print(f"wrote {d}")
    return EXIT_OK


def _save_checkpoints(out: Path, cfg, checkpoints) -> None:
    ck = out / "checkpoints"
    ck.mkdir(parents=True, exist_ok=True)
    index = []
    for name, enc, enc_p, states, info in checkpoints:
        save_checkpoint(ck / f"{name}_f.npz", enc, states[0], cfg.config_hash)
        save_checkpoint(ck / f"{name}_fprime.npz", enc_p, states[1], cfg.config_hash)
        index.append({"name": name, **info})
    (ck / "index.json").write_text(json.dumps({"config_hash": cfg.config_hash, "runs": index}, indent=2))


def _run_and_emit(args, cfg) -> int:
    out = _out_dir(args, cfg)
    checkpoints = [] if args.command == "train" else None
    bundle = run_experiment(cfg, checkpoints=checkpoints, progress=_progress)
    emit_report(bundle, out)
    if checkpoints:
        _save_checkpoints(out, cfg, checkpoints)
    for f in bundle.failures:
        print(f"failed run sweep={f['sweep_value']} seed={f['seed']}: {f['error']}: {f['message']}")
    print(f"report written to {out}")
    return _report(bundle.checks)


def cmd_train(args) -> int:
    cfg = _config(args)
    if cfg.experiment not in TRAIN_EXPERIMENTS:
        raise WrongExperiment(f"train runs {TRAIN_EXPERIMENTS}; use 'ablate' or 'oracle-check' for {cfg.experiment!r}")
    return _run_and_emit(args, cfg)


def cmd_ablate(args) -> int:
    cfg = _config(args)
    if cfg.experiment not in ABLATIONS:
        raise WrongExperiment(f"ablate runs {ABLATIONS}, got {cfg.experiment!r}")
    return _run_and_emit(args, cfg)


def cmd_evaluate(args) -> int:
    """Re-score saved checkpoints on a fresh evaluation set."""
    cfg = _config(args)
    out = _out_dir(args, cfg)
    ck = out / "checkpoints"
    try:
        index = json.loads((ck / "index.json").read_text())
    except OSError as exc:
        raise NlccaError(f"no checkpoints under {ck}: {exc}") from exc
    if index["config_hash"] != cfg.config_hash:
        print(f"warning: checkpoints were trained under config {index['config_hash']}", file=sys.stderr)
    seeds = set(cfg.seeds) if args.seed is not None else None
    eps = 1e-3 if cfg.epsilon == "schedule" else float(cfg.epsilon)
    rows = []
    for run in index["runs"]:
        if seeds is not None and run["seed"] not in seeds:
            continue
        enc, _, _ = load_checkpoint(ck / f"{run['name']}_f.npz")
        enc_p, _, _ = load_checkpoint(ck / f"{run['name']}_fprime.npz")
        spec, _, (S, Sp, X, Xp) = make_problem(
            cfg, run["family"], run["d_S"], run["rho"], run["seed"], eval_tag=4
        )
        eval_set = (S, Sp, S, Sp) if run["source_space"] else (S, Sp, X, Xp)
        row = {c: math.nan for c in RESULT_COLUMNS}
        row.update(
            experiment=cfg.experiment,
            family=run["family"],
            d_S=run["d_S"],
            d_Z=run["d_Z"],
            seed=run["seed"],
            sweep_value=run["name"],
            steps=cfg.steps,
            wall_clock_s=0.0,
        )
        row.update(final_metrics(spec, enc, enc_p, eval_set, eps))
        rows.append(row)
        print(f"{run['name']}: R2 f={row['r2_f']:.4f} f'={row['r2_fprime']:.4f} PA_max={row['pa_max_f']:.2f}")
    _write_table(out / "evaluation.csv", RESULT_COLUMNS, rows)
    print(f"wrote {out / 'evaluation.csv'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args, default_experiment="oracle_check")
    if cfg.experiment != "oracle_check":
        raise WrongExperiment(f"oracle-check needs experiment 'oracle_check', got {cfg.experiment!r}")
    bundle = run_experiment(cfg)
    if args.out:
        emit_report(bundle, args.out)
    return _report(bundle.checks)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlcca", description="Nonlinear CCA identifiability experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    verbs = {
        "generate": (cmd_generate, "sample sources, decoders and observations"),
        "train": (cmd_train, "train encoder pairs (identifiability, reparam_invariance, consistency)"),
        "evaluate": (cmd_evaluate, "re-score saved checkpoints on fresh samples"),
        "ablate": (cmd_ablate, "run a source-dim, dominance or dimension-mismatch sweep"),
        "oracle-check": (cmd_oracle, "run the closed-form Hermite oracle checks"),
    }
    for name, (fn, help_text) in verbs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON or TOML experiment configuration")
        p.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
        p.add_argument("--out", help="output directory (default: <output_dir>/<experiment>-<hash>)")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, WrongExperiment) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NlccaError, OSError, ValueError) as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
