"""Likelihoods and the optimism-weighted posterior over a finite model class.

Sampling weights take the form

    weight(f) ∝ prior(f) · exp(± gamma · optimism(f) + Σ_{past episodes} Σ_h L_h(f)),

with per-step log-likelihood terms L_h(f) = eta · log P_{f,h}(s_{h+1} | s_h, a_h, b_h)
for fully observable games and L_h(f) = eta · log P_{f,h}(tau_h) for partially
observable ones (one term per trajectory prefix).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FomgModel, ModelClass, ModelError, PomgModel, Trajectory
from .pomg import prefix_logliks

DEFAULT_ETA = 0.5
LIKELIHOOD_VARIANTS = ("sum", "final")


class RealizabilityError(RuntimeError):
    """Every model in the class has been ruled out by the data."""


def episode_loglik_fomg(model: FomgModel, traj: Trajectory, eta: float = DEFAULT_ETA) -> float:
    if eta <= 0:
        raise ValueError("eta must be positive")
    traj.validate_fomg(model)
    total = 0.0
    for h in range(model.H):
        p = model.transition[h, traj.states[h], traj.actions_max[h], traj.actions_min[h], traj.states[h + 1]]
        if p <= 0:
            return -math.inf
        total += eta * math.log(p)
    return total


def episode_loglik_pomg(model: PomgModel, traj: Trajectory, eta: float = DEFAULT_ETA,
                        variant: str = "sum") -> float:
    """Sum over prefixes h = 1..H of eta·log P_{f,h}(tau_h).

    ``variant='final'`` keeps only the full-trajectory term h = H.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if variant not in LIKELIHOOD_VARIANTS:
        raise ValueError(f"unknown likelihood variant {variant!r}")
    ll = prefix_logliks(model, traj)
    if not np.isfinite(ll[-1]):
        return -math.inf
    return eta * float(ll.sum() if variant == "sum" else ll[-1])


def class_logliks(model_class: ModelClass, traj: Trajectory, eta: float = DEFAULT_ETA,
                  variant: str = "sum") -> np.ndarray:
    """Per-model episode log-likelihood Σ_h L_h(f) for one trajectory."""
    if model_class.kind == "fomg":
        traj.validate_fomg(model_class.models[0])
        P = model_class.stacked_transitions()
        h = np.arange(traj.H)
        s = np.asarray(traj.states)
        probs = P[:, h, s[:-1], traj.actions_max, traj.actions_min, s[1:]]
        with np.errstate(divide="ignore"):
            return eta * np.log(probs).sum(axis=1)
    return np.array([episode_loglik_pomg(m, traj, eta, variant) for m in model_class.models])


@dataclass
class PosteriorState:
    """Per-model cumulative log-likelihood Σ_{tau<t} Σ_h L_h^tau(f) plus the log prior."""

    log_prior: np.ndarray
    cum_loglik: np.ndarray
    nash_values: np.ndarray | None = None
    t: int = 0

    @classmethod
    def from_class(cls, model_class: ModelClass, nash_values=None) -> "PosteriorState":
        with np.errstate(divide="ignore"):
            lp = np.log(model_class.prior)
        return cls(lp, np.zeros(len(model_class)),
                   None if nash_values is None else np.asarray(nash_values, dtype=np.float64))

    def add(self, episode_loglik: np.ndarray) -> None:
        episode_loglik = np.asarray(episode_loglik, dtype=np.float64)
        if episode_loglik.shape != self.cum_loglik.shape:
            raise ValueError("episode log-likelihood has wrong length")
        self.cum_loglik = self.cum_loglik + episode_loglik
        self.t += 1

    def update(self, model_class: ModelClass, traj: Trajectory, eta: float = DEFAULT_ETA,
               variant: str = "sum") -> np.ndarray:
        ll = class_logliks(model_class, traj, eta, variant)
        self.add(ll)
        return ll

    def snapshot(self, gamma: float = 0.0, optimism=None, sign: int = 1) -> dict:
        opt = np.zeros_like(self.cum_loglik) if optimism is None else optimism
        w = posterior_weights(self, gamma, opt, sign)
        return {
            "t": self.t,
            "weights": w.tolist(),
            "cum_loglik": [float(x) if np.isfinite(x) else None for x in self.cum_loglik],
        }


def posterior_weights(state: PosteriorState, gamma: float, optimism, sign: int = 1) -> np.ndarray:
    """Normalized weights ∝ exp(log_prior ± gamma·optimism + cum_loglik)."""
    if sign not in (1, -1, "+", "-"):
        raise ValueError("sign must be +1 or -1")
    sgn = -1.0 if sign in (-1, "-") else 1.0
    optimism = np.asarray(optimism, dtype=np.float64)
    base = state.log_prior + state.cum_loglik
    alive = np.isfinite(base)
    if not alive.any():
        raise RealizabilityError("all models have zero posterior mass (f* not in class or corrupted data)")
    if not np.all(np.isfinite(optimism[alive])):
        raise ValueError("optimism must be finite for models with finite likelihood")
    logits = np.full(base.shape, -np.inf)
    logits[alive] = base[alive] + sgn * gamma * optimism[alive]
    logits -= logits[alive].max()
    w = np.exp(logits)
    return w / w.sum()


def sample_model(weights, rng: np.random.Generator) -> int:
    w = np.asarray(weights, dtype=np.float64)
    c = np.cumsum(w)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(w) - 1))


def exploiter_optimism(model_class: ModelClass, pi_t, planner, side: str = "min") -> np.ndarray:
    """V_f^{pi_t,*} (side='min') or V_f^{*,nu_t} (side='max') for every model."""
    if len(planner.models) < len(model_class):
        raise ModelError("planner does not cover the model class")
    return planner.br_values(pi_t, side)[: len(model_class)]


def default_gamma(n_models: int, T: int, d_hint: float) -> float:
    """2·sqrt(omega·T/d) with omega bounded by log|F| for a uniform prior."""
    if d_hint <= 0:
        raise ValueError("GEC hint must be positive")
    return 2.0 * math.sqrt(math.log(n_models) * T / d_hint)
