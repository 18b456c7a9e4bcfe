"""Posterior-sampling learners for two-player zero-sum Markov games.

``run_selfplay`` runs the max-player learner and its min-player mirror side
by side; each keeps its own posterior fed only by the episodes its own
exploration policy collected. ``run_adversarial`` controls the max-player
alone against an opponent whose policy it never sees.

Regret is always measured against the true model with exact planners.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import planning
from .core import Model, ModelClass, ModelError
from .matrix_game import DEFAULT_TOL
from .planning import ClassPlanner, policy_digest
from .posterior import (
    DEFAULT_ETA,
    LIKELIHOOD_VARIANTS,
    PosteriorState,
    default_gamma,
    exploiter_optimism,
    posterior_weights,
    sample_model,
)
from .rng import stream

ADVERSARY_KINDS = ("nash", "best_response", "random", "switching")
CSV_COLUMNS = ("t", "model_idx_main", "model_idx_exploiter", "V_star", "V_pi_br", "V_nu_br",
               "V_joint", "reg_selfplay_cum", "reg_adv_cum", "wall_ms")


@dataclass
class LearnerConfig:
    T: int = 1000
    seed: int = 0
    eta: float = DEFAULT_ETA
    gamma1: float | None = None
    gamma2: float | None = None
    gamma: float | None = None
    # heuristic stand-in for the GEC; defaults to H^3 * S
    d_hint: float | None = None
    likelihood: str = "sum"
    tol: float = DEFAULT_TOL
    adversary: str = "random"
    switch_period: int = 50
    allow_unrealizable: bool = False
    retain_round_data: bool = False
    record_timing: bool = False

    def __post_init__(self):
        if int(self.T) < 1:
            raise ValueError("T must be at least 1")
        if self.eta <= 0 or self.tol <= 0:
            raise ValueError("eta and tol must be positive")
        for name in ("gamma1", "gamma2", "gamma", "d_hint"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.likelihood not in LIKELIHOOD_VARIANTS:
            raise ValueError(f"likelihood must be one of {LIKELIHOOD_VARIANTS}")
        if self.adversary not in ADVERSARY_KINDS:
            raise ValueError(f"adversary must be one of {ADVERSARY_KINDS}")

    def resolved_gammas(self, model_class: ModelClass) -> tuple[float, float, float]:
        H, S = model_class.models[0].H, model_class.models[0].S
        d = self.d_hint if self.d_hint is not None else float(H**3 * S)
        g = default_gamma(len(model_class), self.T, d)
        pick = lambda v: g if v is None else float(v)  # noqa: E731
        return pick(self.gamma1), pick(self.gamma2), pick(self.gamma)


@dataclass
class EpisodeRecord:
    t: int
    model_idx_main: int
    model_idx_exploiter: int
    min_model_idx_main: int
    min_model_idx_exploiter: int
    policy_digest: str
    episode_return: float
    V_star: float
    V_pi_br: float
    V_nu_br: float
    V_joint: float
    wall_ms: float = 0.0

    @property
    def reg_selfplay(self) -> float:
        return self.V_nu_br - self.V_pi_br

    @property
    def reg_adv(self) -> float:
        return self.V_star - self.V_joint


@dataclass
class RoundData:
    """What the GEC checker needs from one round of one learner stream."""

    rho: int
    rho_alt: int
    pi: object
    nu: object


@dataclass
class RegretTrace:
    setting: str
    records: list = field(default_factory=list)
    rounds: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def reg_selfplay(self) -> np.ndarray:
        return self.column("V_nu_br") - self.column("V_pi_br")

    @property
    def reg_adv(self) -> np.ndarray:
        return self.column("V_star") - self.column("V_joint")

    @property
    def reg_selfplay_cum(self) -> np.ndarray:
        return np.cumsum(self.reg_selfplay)

    @property
    def reg_adv_cum(self) -> np.ndarray:
        return np.cumsum(self.reg_adv)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        sp, adv = self.reg_selfplay_cum, self.reg_adv_cum
        for k, r in enumerate(self.records):
            vals = (r.V_star, r.V_pi_br, r.V_nu_br, r.V_joint, sp[k], adv[k], r.wall_ms)
            buf.write(f"{r.t},{r.model_idx_main},{r.model_idx_exploiter},"
                      + ",".join(f"{v:.17g}" for v in vals) + "\n")
        return buf.getvalue()

    def records_as_dicts(self) -> list:
        return [asdict(r) for r in self.records]


class RegretTerms(NamedTuple):
    V_star: float
    V_pi_br: float
    V_nu_br: float
    V_joint: float


class _TruthEvaluator:
    """Exact regret terms under the true model, memoized on policy digests."""

    def __init__(self, planner: ClassPlanner, index: int):
        self.planner = planner
        self.index = index
        self.V_star = planner.nash(index)[0]
        self._joint: dict = {}

    def terms(self, pi, nu, pi_digest=None, nu_digest=None) -> RegretTerms:
        pd = pi_digest or policy_digest(pi)
        nd = nu_digest or policy_digest(nu)
        v_pi = self.planner.best_response(self.index, pi, "min", pd)[0]
        v_nu = self.planner.best_response(self.index, nu, "max", nd)[0]
        key = (pd, nd)
        if key not in self._joint:
            self._joint[key] = self.planner.value(self.index, pi, nu)
        return RegretTerms(self.V_star, v_pi, v_nu, self._joint[key])


def evaluate_regret_terms(true_model: Model, pi_t, nu_t, tol: float = DEFAULT_TOL) -> RegretTerms:
    """(V*, V^{pi,*}, V^{*,nu}, V^{pi,nu}) under the true model."""
    return _TruthEvaluator(ClassPlanner([true_model], tol), 0).terms(pi_t, nu_t)


def _locate_truth(model_class: ModelClass, true_model: Model, allow_unrealizable: bool):
    """Return (planner models, index of f*) and enforce realizability."""
    models = list(model_class.models)
    if model_class.true_index is not None and models[model_class.true_index] is true_model:
        return models, model_class.true_index
    digest = true_model.digest()
    for i, m in enumerate(models):
        if m.digest() == digest:
            return models, i
    if not allow_unrealizable:
        raise ModelError("true model is not in the model class (set allow_unrealizable to override)")
    if true_model.kind != model_class.kind or true_model.dims != model_class.models[0].dims:
        raise ModelError("true model does not match the class dimensions")
    return models + [true_model], len(models)


class Adversary:
    """Per-episode opponent policy source for the adversarial learner.

    Only the ``best_response`` kind looks at the learner's policy; the
    learner never sees the opponent's policy.
    """

    def __init__(self, kind: str, true_model: Model, rng: np.random.Generator,
                 period: int = 50, tol: float = DEFAULT_TOL):
        if kind not in ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary kind {kind!r}; expected one of {ADVERSARY_KINDS}")
        if period < 1:
            raise ValueError("switching period must be positive")
        self.kind = kind
        self.true_model = true_model
        self.rng = rng
        self.period = period
        self._planner = ClassPlanner([true_model], tol)

    def policy(self, t: int, pi_t=None):
        kind = self.kind
        if kind == "switching":
            kind = "nash" if ((t - 1) // self.period) % 2 == 0 else "random"
        if kind == "nash":
            return self._planner.nash(0)[2]
        if kind == "random":
            return planning.random_policy(self.true_model, "min", self.rng)
        if pi_t is None:
            raise ValueError("best_response adversary needs the learner's policy")
        return self._planner.best_response(0, pi_t, "min")[1]


def make_adversary(kind: str, true_model: Model, rng: np.random.Generator, period: int = 50,
                   tol: float = DEFAULT_TOL) -> Adversary:
    return Adversary(kind, true_model, rng, period, tol)


def run_selfplay(model_class: ModelClass, true_model: Model, config: LearnerConfig) -> RegretTrace:
    models, ti = _locate_truth(model_class, true_model, config.allow_unrealizable)
    planner = ClassPlanner(models, config.tol)
    truth = _TruthEvaluator(planner, ti)
    n = len(model_class)
    g1, g2, _ = config.resolved_gammas(model_class)
    v_star = planner.nash_values()[:n]
    digests = {}

    def nash_parts(i):
        if i not in digests:
            _, pi, nu = planner.nash(i)
            digests[i] = (policy_digest(pi), policy_digest(nu))
        return planner.nash(i), digests[i]

    post_max = PosteriorState.from_class(model_class, v_star)
    post_min = PosteriorState.from_class(model_class, v_star)
    draw_max, draw_min = stream(config.seed, "posterior-max"), stream(config.seed, "posterior-min")
    env_max, env_min = stream(config.seed, "env-max"), stream(config.seed, "env-min")
    trace = RegretTrace("selfplay")
    if config.retain_round_data:
        trace.rounds = {"max": [], "min": []}

    for t in range(1, config.T + 1):
        t0 = time.perf_counter()
        # max-player learner: optimistic main model, pessimistic exploiter
        f_bar = sample_model(posterior_weights(post_max, g1, v_star, +1), draw_max)
        (_, pi_t, _), (pi_d, _) = nash_parts(f_bar)
        opt = exploiter_optimism(model_class, pi_t, planner, "min")
        f_low = sample_model(posterior_weights(post_max, g2, opt, -1), draw_max)
        nu_low = planner.best_response(f_low, pi_t, "min", pi_d)[1]
        traj = planning.simulate(true_model, pi_t, nu_low, env_max)
        post_max.update(model_class, traj, config.eta, config.likelihood)

        # min-player learner, mirrored signs
        g_bar = sample_model(posterior_weights(post_min, g1, v_star, -1), draw_min)
        (_, _, nu_t), (_, nu_d) = nash_parts(g_bar)
        opt2 = exploiter_optimism(model_class, nu_t, planner, "max")
        g_low = sample_model(posterior_weights(post_min, g2, opt2, +1), draw_min)
        pi_low = planner.best_response(g_low, nu_t, "max", nu_d)[1]
        traj2 = planning.simulate(true_model, pi_low, nu_t, env_min)
        post_min.update(model_class, traj2, config.eta, config.likelihood)

        terms = truth.terms(pi_t, nu_t, pi_d, nu_d)
        wall = (time.perf_counter() - t0) * 1e3 if config.record_timing else 0.0
        trace.records.append(EpisodeRecord(
            t, f_bar, f_low, g_bar, g_low, f"{pi_d[:8]}:{nu_d[:8]}", traj.total_reward,
            terms.V_star, terms.V_pi_br, terms.V_nu_br, terms.V_joint, wall))
        if config.retain_round_data:
            trace.rounds["max"].append(RoundData(f_bar, f_low, pi_t, nu_low))
            trace.rounds["min"].append(RoundData(g_bar, g_low, pi_low, nu_t))
    return trace


def run_adversarial(model_class: ModelClass, true_model: Model, config: LearnerConfig,
                    adversary: Adversary | None = None) -> RegretTrace:
    models, ti = _locate_truth(model_class, true_model, config.allow_unrealizable)
    planner = ClassPlanner(models, config.tol)
    truth = _TruthEvaluator(planner, ti)
    n = len(model_class)
    _, _, gamma = config.resolved_gammas(model_class)
    v_star = planner.nash_values()[:n]
    if adversary is None:
        adversary = make_adversary(config.adversary, true_model, stream(config.seed, "adversary"),
                                   config.switch_period, config.tol)
    post = PosteriorState.from_class(model_class, v_star)
    draw, env = stream(config.seed, "posterior-max"), stream(config.seed, "env-max")
    trace = RegretTrace("adversarial")
    if config.retain_round_data:
        trace.rounds = {"main": []}

    for t in range(1, config.T + 1):
        t0 = time.perf_counter()
        f_t = sample_model(posterior_weights(post, gamma, v_star, +1), draw)
        _, pi_t, _ = planner.nash(f_t)
        nu_t = adversary.policy(t, pi_t)
        traj = planning.simulate(true_model, pi_t, nu_t, env)
        post.update(model_class, traj, config.eta, config.likelihood)

        pi_d, nu_d = policy_digest(pi_t), policy_digest(nu_t)
        terms = truth.terms(pi_t, nu_t, pi_d, nu_d)
        wall = (time.perf_counter() - t0) * 1e3 if config.record_timing else 0.0
        trace.records.append(EpisodeRecord(
            t, f_t, -1, -1, -1, f"{pi_d[:8]}:{nu_d[:8]}", traj.total_reward,
            terms.V_star, terms.V_pi_br, terms.V_nu_br, terms.V_joint, wall))
        if config.retain_round_data:
            trace.rounds["main"].append(RoundData(f_t, -1, pi_t, nu_t))
    return trace


def sqrt_fit(reg_cum) -> tuple[float, float]:
    """Least-squares fit reg(t) ≈ c·sqrt(t); returns (c, R^2)."""
    y = np.asarray(reg_cum, dtype=np.float64)
    x = np.sqrt(np.arange(1, len(y) + 1, dtype=np.float64))
    c = float(x @ y / (x @ x))
    ss_res = float(np.sum((y - c * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -math.inf)
    return c, r2


def _averages(reg_cum, T: int | None):
    y = np.asarray(reg_cum, dtype=np.float64)
    T = len(y) if T is None else int(T)
    if T < 10 or T > len(y):
        raise ValueError("need at least 10 episodes of cumulative regret")
    t10 = T // 10
    return y[T - 1] / T, y[t10 - 1] / t10


def sublinearity_ratio(reg_cum, T: int | None = None) -> float:
    """[reg(T)/T] / [reg(T/10)/(T/10)]; nan when the early average is exactly 0."""
    late, early = _averages(reg_cum, T)
    return float(late / early) if early != 0 else math.nan


@dataclass(frozen=True)
class SublinearityReport:
    c: float
    r2: float
    ratio: float
    avg_late: float
    avg_early: float
    r2_min: float
    passed: bool

    def line(self) -> str:
        return (f"c={self.c:.4g} R2={self.r2:.4f} (>= {self.r2_min}) "
                f"avg(T)={self.avg_late:.4g} avg(T/10)={self.avg_early:.4g} ratio={self.ratio:.4f} (< 0.5)")


def sublinearity_check(reg_cum, T: int | None = None, r2_min: float = 0.9) -> SublinearityReport:
    """c·sqrt(t) fit with R^2 >= r2_min and reg(T)/T < 0.5·reg(T/10)/(T/10)."""
    y = np.asarray(reg_cum, dtype=np.float64)[: (len(reg_cum) if T is None else T)]
    c, r2 = sqrt_fit(y)
    late, early = _averages(y, None)
    ok = bool(r2 >= r2_min and late < 0.5 * early)
    return SublinearityReport(c, r2, sublinearity_ratio(y), float(late), float(early), r2_min, ok)
