"""Command-line entry point: ``mgp <command> ...``.

Exit codes: 0 success, 2 config or input error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import diagnostics, envs
from .core import ModelClass, ModelError, dumps_model
from .harness import (
    ConfigError,
    ExperimentConfig,
    MissingArtifactError,
    atomic_write,
    build_instance,
    emit_plot_script,
    load_rounds,
    run_experiment,
)
from .rng import stream

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _json_default(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(type(x).__name__)


def _finite(x: float):
    """JSON-safe float: +inf becomes the string "inf"."""
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def cmd_gen_env(args) -> int:
    env = {"family": args.family, "H": args.H, "S": args.S, "A": args.A, "B": args.B}
    for k in ("O", "d", "alpha", "sparsity"):
        v = getattr(args, k)
        if v is not None:
            env[k] = v
    mc = {"size": args.class_size, "perturbation": args.perturbation}
    if args.min_alpha is not None:
        mc["min_alpha"] = args.min_alpha
    cfg = {"environment": env, "model_class": mc, "learner": "selfplay", "seeds": [args.seed], "output_dir": "."}
    ExperimentConfig.from_json(json.dumps(cfg, indent=1), "<gen-env arguments>")
    model_class, f_star = build_instance(env, mc, args.seed)
    out = Path(args.out)
    atomic_write(out, dumps_model(f_star))
    meta = {"environment": env, "seed": args.seed, "digest": f_star.digest(), "kind": f_star.kind}
    if f_star.kind == "pomg":
        meta["revealing_alpha"] = envs.revealing_alpha(f_star)
        meta["decodable"] = envs.is_decodable(f_star)
    if args.class_out:
        atomic_write(Path(args.class_out), json.dumps(model_class.to_json(), sort_keys=True))
        meta["class_file"] = args.class_out
        meta["class_size"] = len(model_class)
        meta["true_index"] = model_class.true_index
    atomic_write(out.with_name(out.stem + ".meta.json"), json.dumps(meta, indent=1, sort_keys=True) + "\n")
    print(json.dumps(meta, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    summary = run_experiment(cfg)
    keys = ("metric", "T", "c", "r2", "ratio", "sublinear", "failed_seeds")
    print(json.dumps({k: summary[k] for k in keys if k in summary}, sort_keys=True, default=_json_default))
    return EXIT_RUNTIME if summary["failed_seeds"] else EXIT_OK


def _closed_forms(cfg_env: dict, H: int, T: int, eps: float) -> dict:
    if cfg_env.get("family") == "linear_mixture":
        d = cfg_env["d"]
    else:
        # a tabular game is a linear game with one feature per (s, a, b)
        d = cfg_env.get("S", 1) * cfg_env.get("A", 1) * cfg_env.get("B", 1)
    return {
        "linear_mg": diagnostics.linear_mg_gec(H, d, T, eps),
        "linear_mixture": diagnostics.linear_mixture_gec(H, d, T, eps),
    }


def cmd_diagnose_gec(args) -> int:
    run_dir = Path(args.run)
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        raise ConfigError(f"{cfg_path}:0: not a run directory (config.json missing)")
    cfg = json.loads(cfg_path.read_text())
    reports = {}
    for seed in cfg["seeds"]:
        seed_dir = run_dir / f"seed_{seed}"
        rounds_path = seed_dir / "rounds.npz"
        if not rounds_path.exists():
            raise MissingArtifactError(f"{rounds_path} missing; rerun with retain_round_data true")
        model_class = ModelClass.from_json(json.loads((seed_dir / "class.json").read_text()))
        rounds = load_rounds(rounds_path, model_class)
        per_stream = {}
        for name, rs in rounds.items():
            H, T = model_class.models[0].H, len(rs)
            eps = args.epsilon if args.epsilon is not None else 1.0 / math.sqrt(H * T)
            rep = diagnostics.check_gec(rs, model_class, eps, closed_forms=_closed_forms(cfg["environment"], H, T, eps))
            per_stream[name] = rep.to_json()
        reports[str(seed)] = per_stream
    atomic_write(run_dir / "gec_report.json", json.dumps(reports, indent=1, sort_keys=True) + "\n")
    brief = {s: {n: {k: r[k] for k in ("lhs", "train_total", "minimal_d", "bound_satisfied")}
                 for n, r in v.items()} for s, v in reports.items()}
    print(json.dumps(brief, sort_keys=True))
    return EXIT_OK


def cmd_compute_omega(args) -> int:
    try:
        model_class = ModelClass.from_json(json.loads(Path(args.class_file).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise ConfigError(f"{args.class_file}:0: cannot load model class: {e}") from None
    if args.beta <= 0:
        raise ConfigError("--beta:0: must be positive")
    dist = diagnostics.class_distances(model_class)
    report = {
        "beta": args.beta,
        "omega": diagnostics.omega(model_class, args.beta, dist),
        "log_class_size": math.log(len(model_class)),
        "distances": [_finite(float(x)) for x in dist],
        "kind": model_class.kind,
    }
    if model_class.kind == "pomg":
        rng = stream(args.seed, "omega-random-policies")
        lb = [0.0 if i == model_class.true_index
              else diagnostics.random_policy_kl_bound(model_class, i, args.random_pairs, rng)
              for i in range(len(model_class))]
        report["random_policy_sqrt_kl_lower_bound"] = [_finite(math.sqrt(x)) for x in lb]
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_plot(args) -> int:
    if not Path(args.summary).exists():
        raise ConfigError(f"{args.summary}:0: summary file not found")
    emit_plot_script(args.summary)
    print(str(Path(args.summary).parent / "plot.gp"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mgp", description="Posterior sampling for zero-sum Markov games.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-env", help="generate a true model (and optionally a model class)")
    g.add_argument("--family", choices=("tabular_fomg", "tabular_pomg", "revealing_pomg",
                                        "decodable_pomg", "linear_mixture"), default="tabular_fomg")
    for k, default in (("H", 3), ("S", 4), ("A", 2), ("B", 2)):
        g.add_argument(f"--{k}", type=int, default=default)
    g.add_argument("--O", type=int)
    g.add_argument("--d", type=int, help="mixture dimension for linear_mixture")
    g.add_argument("--alpha", type=float, help="revealing margin for revealing_pomg")
    g.add_argument("--sparsity", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--class-size", type=int, default=1)
    g.add_argument("--perturbation", type=float, default=0.1)
    g.add_argument("--min-alpha", type=float)
    g.add_argument("--out", required=True, help="model JSON path; metadata goes to <stem>.meta.json")
    g.add_argument("--class-out", help="also write the model class JSON here")
    g.set_defaults(fn=cmd_gen_env)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.set_defaults(fn=cmd_run)

    d = sub.add_parser("diagnose-gec", help="check the GEC inequality on a run with round data")
    d.add_argument("--run", required=True)
    d.add_argument("--epsilon", type=float)
    d.set_defaults(fn=cmd_diagnose_gec)

    o = sub.add_parser("compute-omega", help="prior coverage of a model class")
    o.add_argument("--class", dest="class_file", required=True)
    o.add_argument("--beta", type=float, required=True)
    o.add_argument("--random-pairs", type=int, default=100)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(fn=cmd_compute_omega)

    pl = sub.add_parser("plot", help="emit a gnuplot script for a run summary")
    pl.add_argument("--summary", required=True)
    pl.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ModelError, diagnostics.DiagnosticsError) as e:
        print(f"mgp: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        print(f"mgp: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
