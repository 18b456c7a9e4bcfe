"""Experiment orchestration: config ingestion, multi-seed runs and artifacts.

A run directory holds::

    config.json            normalized copy of the experiment config
    seed_<s>/trace.csv     per-episode regret trace
    seed_<s>/class.json    model class (with true_index) used by the seed
    seed_<s>/rounds.npz    round data for GEC checks (when retained)
    seed_<s>/error.txt     only when the seed failed
    summary.json           per-t mean/std of cumulative regret and fit statistics
    summary_mean.csv       t, mean, std of cumulative regret

Every file is written atomically and contains no timestamps, so rerunning a
config reproduces the artifacts byte for byte.
"""

from __future__ import annotations

import io
import json
import os
import re
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import envs, pomg
from .core import FomgModel, HistoryPolicy, ModelClass, loads_model
from .learners import (
    ADVERSARY_KINDS,
    CSV_COLUMNS,
    LearnerConfig,
    RegretTrace,
    RoundData,
    run_adversarial,
    run_selfplay,
    sublinearity_check,
)
from .rng import stream

LEARNER_KINDS = ("selfplay", "adversarial")
FAMILIES = ("tabular_fomg", "tabular_pomg", "revealing_pomg", "decodable_pomg", "linear_mixture")
_CONFIG_KEYS = {"environment", "model_class", "learner", "learner_config", "seeds", "output_dir",
                "retain_round_data"}
_ENV_KEYS = {"family", "H", "S", "A", "B", "O", "d", "alpha", "sparsity", "stationary", "file"}
_CLASS_KEYS = {"size", "perturbation", "min_alpha", "file"}
_LEARNER_CONFIG_KEYS = {f.name for f in fields(LearnerConfig)} - {"seed", "retain_round_data", "record_timing"}


class ConfigError(ValueError):
    """Config schema violation; the message starts with ``<source>:<line>:``."""


def _line_of(raw: str, path: tuple) -> int:
    """Best-effort line of the innermost key of ``path`` in the raw JSON text."""
    pos = 0
    line = 1
    for key in path:
        m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(raw, pos)
        if m is None:
            break
        pos = m.end()
        line = raw.count("\n", 0, m.start()) + 1
    return line


@dataclass
class ExperimentConfig:
    environment: dict
    model_class: dict
    learner: str
    learner_config: dict
    seeds: list
    output_dir: str
    retain_round_data: bool = False
    base_dir: str = field(default=".", repr=False)

    @classmethod
    def from_json(cls, raw: str, source: str = "<config>", base_dir: str = ".") -> "ExperimentConfig":
        try:
            d = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{source}:{e.lineno}: invalid JSON: {e.msg}") from None

        def fail(path, msg):
            raise ConfigError(f"{source}:{_line_of(raw, path)}: {'.'.join(map(str, path))}: {msg}")

        if not isinstance(d, dict):
            raise ConfigError(f"{source}:1: top level must be an object")
        for k in d:
            if k not in _CONFIG_KEYS:
                fail((k,), "unknown key")
        for k in ("environment", "model_class", "learner", "seeds", "output_dir"):
            if k not in d:
                raise ConfigError(f"{source}:1: missing required key {k!r}")

        env = d["environment"]
        if not isinstance(env, dict):
            fail(("environment",), "must be an object")
        for k in env:
            if k not in _ENV_KEYS:
                fail(("environment", k), "unknown key")
        if "file" not in env:
            if env.get("family") not in FAMILIES:
                fail(("environment", "family"), f"must be one of {FAMILIES}")
            need = ["H", "S", "A", "B"] + (["O"] if env["family"].endswith("pomg") else [])
            need += ["d"] if env["family"] == "linear_mixture" else []
            need += ["alpha"] if env["family"] == "revealing_pomg" else []
            for k in need:
                if k not in env:
                    fail(("environment",), f"family {env['family']} needs {k!r}")
            for k in ("H", "S", "A", "B", "O", "d", "sparsity"):
                if k in env and (not isinstance(env[k], int) or isinstance(env[k], bool) or env[k] < 1):
                    fail(("environment", k), "must be a positive integer")
            if "alpha" in env and not (isinstance(env["alpha"], (int, float)) and env["alpha"] > 0):
                fail(("environment", "alpha"), "must be a positive number")

        mc = d["model_class"]
        if not isinstance(mc, dict):
            fail(("model_class",), "must be an object")
        for k in mc:
            if k not in _CLASS_KEYS:
                fail(("model_class", k), "unknown key")
        if "file" not in mc:
            if not isinstance(mc.get("size"), int) or mc["size"] < 1:
                fail(("model_class", "size"), "must be a positive integer")
            p = mc.get("perturbation", 0.1)
            if not isinstance(p, (int, float)) or not 0 < p <= 1:
                fail(("model_class", "perturbation"), "must lie in (0, 1]")

        if d["learner"] not in LEARNER_KINDS:
            fail(("learner",), f"must be one of {LEARNER_KINDS}")
        lc = d.get("learner_config", {})
        if not isinstance(lc, dict):
            fail(("learner_config",), "must be an object")
        for k in lc:
            if k not in _LEARNER_CONFIG_KEYS:
                fail(("learner_config", k), "unknown key")
        if lc.get("adversary", "random") not in ADVERSARY_KINDS:
            fail(("learner_config", "adversary"), f"must be one of {ADVERSARY_KINDS}")
        try:
            LearnerConfig(**lc)
        except (TypeError, ValueError) as e:
            fail(("learner_config",), str(e))

        seeds = d["seeds"]
        if (not isinstance(seeds, list) or not seeds
                or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds)):
            fail(("seeds",), "must be a nonempty list of nonnegative integers")
        if len(set(seeds)) != len(seeds):
            fail(("seeds",), "seeds must be distinct")
        if not isinstance(d["output_dir"], str) or not d["output_dir"]:
            fail(("output_dir",), "must be a nonempty string")
        retain = d.get("retain_round_data", False)
        if not isinstance(retain, bool):
            fail(("retain_round_data",), "must be a boolean")
        return cls(env, mc, d["learner"], lc, seeds, d["output_dir"], retain, base_dir)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = path.read_text()
        except OSError as e:
            raise ConfigError(f"{path}:0: cannot read config: {e.strerror}") from None
        return cls.from_json(raw, str(path), str(path.parent))

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    @property
    def out(self) -> Path:
        return self.resolve(self.output_dir)


# ---------------------------------------------------------------- instance construction


def build_instance(env: dict, mc: dict, seed: int, base: Path = Path(".")) -> tuple[ModelClass, object]:
    """(model class, true model) for one seed; both drawn from the seed's env-gen stream."""
    rng = stream(seed, "env-gen")
    spec = None
    if "file" in env:
        f_star = loads_model((base / env["file"]).read_text())
    else:
        fam = env["family"]
        H, S, A, B = env["H"], env["S"], env["A"], env["B"]
        stationary = bool(env.get("stationary", False))
        if fam == "tabular_fomg":
            f_star = envs.gen_tabular_fomg((H, S, A, B), rng, env.get("sparsity"), stationary)
        elif fam == "tabular_pomg":
            f_star = envs.gen_tabular_pomg((H, S, A, B, env["O"]), rng, stationary)
        elif fam == "revealing_pomg":
            f_star = envs.gen_weakly_revealing_pomg(
                envs.RevealingSpec(env["alpha"], S, env["O"], A, B, H, stationary), rng)
        elif fam == "decodable_pomg":
            f_star, _ = envs.gen_decodable_pomg((H, S, A, B, env["O"]), rng, stationary)
        else:
            f_star, spec = envs.gen_linear_mixture(envs.LinearMixtureSpec(env["d"], S, A, B, H), rng)
    if "file" in mc:
        cls = ModelClass.from_json(json.loads((base / mc["file"]).read_text()))
        return cls, cls.true_model if cls.true_index is not None else f_star
    n, p = mc["size"], mc.get("perturbation", 0.1)
    if spec is not None:
        return envs.linear_mixture_class_around(spec, f_star, n, p, rng), f_star
    accept = None
    if "min_alpha" in mc:
        floor = float(mc["min_alpha"])
        accept = lambda m: envs.revealing_alpha(m) >= floor  # noqa: E731
    return envs.model_class_around(f_star, n, p, rng, accept), f_star


# ---------------------------------------------------------------- persistence


def atomic_write(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n"


def _policy_stack(policies) -> np.ndarray:
    return np.stack([p.probs if isinstance(p, HistoryPolicy) else np.asarray(p) for p in policies])


def save_rounds(path: Path, rounds: dict) -> None:
    arrays = {}
    for name, rs in rounds.items():
        arrays[f"{name}_rho"] = np.array([r.rho for r in rs], dtype=np.int64)
        arrays[f"{name}_rho_alt"] = np.array([r.rho_alt for r in rs], dtype=np.int64)
        arrays[f"{name}_pi"] = _policy_stack([r.pi for r in rs])
        arrays[f"{name}_nu"] = _policy_stack([r.nu for r in rs])
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write(path, buf.getvalue())


def load_rounds(path: Path, model_class: ModelClass) -> dict:
    data = np.load(path)
    names = sorted({k.rsplit("_", 1)[0] for k in data.files if k.endswith("_pi")})
    f_star = model_class.true_model
    tree = None if isinstance(f_star, FomgModel) else pomg.tree_for(f_star)
    wrap = (lambda a: a) if tree is None else (lambda a: HistoryPolicy(tree, a))
    out = {}
    for name in names:
        rho, alt = data[f"{name}_rho"], data[f"{name}_rho_alt"]
        pis, nus = data[f"{name}_pi"], data[f"{name}_nu"]
        out[name] = [RoundData(int(rho[t]), int(alt[t]), wrap(pis[t]), wrap(nus[t])) for t in range(len(rho))]
    return out


# ---------------------------------------------------------------- running


def run_seed(cfg: ExperimentConfig, seed: int) -> dict:
    """Run one seed and write its artifacts; returns a small status record."""
    seed_dir = cfg.out / f"seed_{seed}"
    try:
        model_class, f_star = build_instance(cfg.environment, cfg.model_class, seed, Path(cfg.base_dir))
        lc = LearnerConfig(**cfg.learner_config, seed=seed, retain_round_data=cfg.retain_round_data)
        run = run_selfplay if cfg.learner == "selfplay" else run_adversarial
        trace: RegretTrace = run(model_class, f_star, lc)
        atomic_write(seed_dir / "class.json", json.dumps(model_class.to_json(), sort_keys=True))
        if cfg.retain_round_data:
            save_rounds(seed_dir / "rounds.npz", trace.rounds)
        atomic_write(seed_dir / "trace.csv", trace.to_csv())
        err = seed_dir / "error.txt"
        if err.exists():
            err.unlink()
        return {"seed": seed, "ok": True, "H": f_star.H}
    except Exception as e:  # a failing seed must not abort its siblings
        atomic_write(seed_dir / "error.txt", traceback.format_exc())
        return {"seed": seed, "ok": False, "error": f"{type(e).__name__}: {e}"}


def _workers(n_jobs: int) -> int:
    cap = os.environ.get("MGP_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise ConfigError(f"MGP_THREADS:0: expected a positive integer, got {cap!r}") from None
    return max(1, min(limit, n_jobs))


def read_trace_csv(path: Path) -> dict:
    arr = np.genfromtxt(path, delimiter=",", names=True, dtype=np.float64)
    arr = np.atleast_1d(arr)
    return {name: arr[name] for name in arr.dtype.names}


def summarize(cfg: ExperimentConfig, status: list) -> dict:
    column = "reg_selfplay_cum" if cfg.learner == "selfplay" else "reg_adv_cum"
    ok = [s for s in status if s["ok"]]
    curves = [read_trace_csv(cfg.out / f"seed_{s['seed']}" / "trace.csv")[column] for s in ok]
    summary = {
        "learner": cfg.learner,
        "metric": column,
        "seeds": [s["seed"] for s in status],
        "failed_seeds": {str(s["seed"]): s["error"] for s in status if not s["ok"]},
        "trace_files": [f"seed_{s['seed']}/trace.csv" for s in ok],
    }
    if not curves:
        return summary
    Y = np.vstack(curves)
    mean, std = Y.mean(axis=0), Y.std(axis=0)
    T = Y.shape[1]
    summary.update({
        "T": T,
        "t": list(range(1, T + 1)),
        "mean": mean.tolist(),
        "std": std.tolist(),
        "final_per_seed": {str(s["seed"]): float(c[-1]) for s, c in zip(ok, curves)},
        "max_abs_final": float(np.max(np.abs(Y[:, -1]))),
    })
    if T >= 10:
        rep = sublinearity_check(mean)
        summary.update({"c": rep.c, "r2": rep.r2, "ratio": rep.ratio, "avg_late": rep.avg_late,
                        "avg_early": rep.avg_early, "sublinear": rep.passed})
    lines = ["t,mean,std"] + [f"{t + 1},{m:.17g},{s:.17g}" for t, (m, s) in enumerate(zip(mean, std))]
    atomic_write(cfg.out / "summary_mean.csv", "\n".join(lines) + "\n")
    return summary


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every seed (in parallel up to MGP_THREADS) and write the summary."""
    out = cfg.out
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"output_dir:0: not writable: {e.strerror}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output_dir:0: not writable: {out}")
    atomic_write(out / "config.json", _dump_json(cfg.to_json()))
    n = _workers(len(cfg.seeds))
    if n == 1:
        status = [run_seed(cfg, s) for s in cfg.seeds]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            status = list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    summary = summarize(cfg, status)
    atomic_write(out / "summary.json", _dump_json(summary))
    return summary


# ---------------------------------------------------------------- plotting


class MissingArtifactError(FileNotFoundError):
    pass


def emit_plot_script(summary_path) -> str:
    """Write ``plot.gp`` next to the summary and return its text.

    One seed plots that seed's trace; several seeds plot the mean with a
    ±1 std band from summary_mean.csv. Paths in the script are relative to
    the run directory.
    """
    summary_path = Path(summary_path)
    run_dir = summary_path.parent
    summary = json.loads(summary_path.read_text())
    traces = summary.get("trace_files", [])
    metric = summary.get("metric", "reg_selfplay_cum")
    if not traces:
        raise MissingArtifactError("summary lists no successful seeds")
    missing = [p for p in traces if not (run_dir / p).exists()]
    if len(traces) > 1 and not (run_dir / "summary_mean.csv").exists():
        missing.append("summary_mean.csv")
    if missing:
        raise MissingArtifactError(f"missing CSVs: {', '.join(missing)}")
    header = [
        "# run with: gnuplot plot.gp (from the run directory)",
        "set datafile separator ','",
        "set key top left",
        "set xlabel 't'",
        f"set ylabel '{metric}'",
        "set terminal pngcairo size 900,600",
        "set output 'regret.png'",
    ]
    if len(traces) == 1:
        col = _trace_column(metric)
        body = [f"plot '{traces[0]}' using 1:{col} skip 1 with lines title '{metric}'"]
    else:
        body = [
            "plot 'summary_mean.csv' using 1:($2-$3):($2+$3) skip 1 with filledcurves "
            "fs transparent solid 0.3 title 'mean ± std', \\",
            "     'summary_mean.csv' using 1:2 skip 1 with lines lw 2 title 'mean'",
        ]
    text = "\n".join(header + body) + "\n"
    atomic_write(run_dir / "plot.gp", text)
    return text


def _trace_column(metric: str) -> int:
    return CSV_COLUMNS.index(metric) + 1
