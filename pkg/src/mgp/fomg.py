"""Exact planning in tabular fully observable Markov games.

Steps ``h`` in the public API are 1-based (h = 1..H) to match the usual
episodic convention; arrays are indexed from 0 internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FomgModel, ModelError, Trajectory, validate_markov_policy
from .matrix_game import DEFAULT_TOL, TIE_TOL, solve_matrix_game


@dataclass(frozen=True, eq=False)
class FomgPlan:
    nash_value: float
    q_values: np.ndarray  # [h, s, a, b]
    state_values: np.ndarray  # [h, s], includes the terminal row h = H (zeros)
    pi_star: np.ndarray
    nu_star: np.ndarray


def continuation(model: FomgModel, h: int, V_next: np.ndarray) -> np.ndarray:
    """Q_h(s,a,b) = r_h(s,a,b) + <P_h(.|s,a,b), V_{h+1}> for 0-based h."""
    return model.reward[h] + model.transition[h] @ V_next


def nash_plan(model: FomgModel, tol: float = DEFAULT_TOL) -> FomgPlan:
    H, S, A, B = model.dims
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A, B))
    pi = np.zeros((H, S, A))
    nu = np.zeros((H, S, B))
    for h in reversed(range(H)):
        Q[h] = continuation(model, h, V[h + 1])
        for s in range(S):
            sol = solve_matrix_game(Q[h, s], tol)
            V[h, s] = sol.value
            pi[h, s] = sol.row_strategy
            nu[h, s] = sol.col_strategy
    return FomgPlan(float(V[0, model.initial_state]), Q, V, pi, nu)


def best_response(model: FomgModel, policy, side: str) -> tuple[float, np.ndarray]:
    """Exact best response of the ``side`` player against a fixed Markov policy.

    ``side='min'`` responds to a max-player policy pi (returns min_nu V^{pi,nu});
    ``side='max'`` responds to a min-player policy nu. The response is
    deterministic with lowest-index tie-breaking.
    """
    H, S, A, B = model.dims
    if side == "min":
        policy = validate_markov_policy(policy, H, S, A, "pi")
        n_resp = B
    elif side == "max":
        policy = validate_markov_policy(policy, H, S, B, "nu")
        n_resp = A
    else:
        raise ModelError(f"side must be 'max' or 'min', got {side!r}")
    V = np.zeros(S)
    response = np.zeros((H, S, n_resp))
    for h in reversed(range(H)):
        Qh = continuation(model, h, V)
        if side == "min":
            W = np.einsum("sa,sab->sb", policy[h], Qh)
            best = W.min(axis=1, keepdims=True)
            choice = np.argmax(W <= best + TIE_TOL, axis=1)
        else:
            W = np.einsum("sab,sb->sa", Qh, policy[h])
            best = W.max(axis=1, keepdims=True)
            choice = np.argmax(W >= best - TIE_TOL, axis=1)
        V = best[:, 0]
        response[h, np.arange(S), choice] = 1.0
    return float(V[model.initial_state]), response


def plan_exploitability(model: FomgModel, pi, nu) -> float:
    """max(V^{*,nu} - V^{pi,nu}, V^{pi,nu} - V^{pi,*}); zero at an exact NE."""
    v = policy_value(model, pi, nu)
    return max(best_response(model, nu, "max")[0] - v, v - best_response(model, pi, "min")[0])


def occupancy(model: FomgModel, pi, nu, h: int) -> np.ndarray:
    """Exact distribution over (s, a, b) at 1-based step h."""
    H, S, A, B = model.dims
    if not 1 <= h <= H:
        raise ModelError(f"step {h} out of range 1..{H}")
    return occupancies(model, pi, nu)[h - 1]


def occupancies(model: FomgModel, pi, nu) -> np.ndarray:
    """All step occupancies, shape [H, S, A, B]."""
    H, S, A, B = model.dims
    pi = validate_markov_policy(pi, H, S, A, "pi")
    nu = validate_markov_policy(nu, H, S, B, "nu")
    out = np.zeros((H, S, A, B))
    d = np.zeros(S)
    d[model.initial_state] = 1.0
    for h in range(H):
        out[h] = d[:, None, None] * pi[h][:, :, None] * nu[h][:, None, :]
        d = np.einsum("sab,sabt->t", out[h], model.transition[h])
    return out


def policy_value(model: FomgModel, pi, nu) -> float:
    occ = occupancies(model, pi, nu)
    return float(np.sum(occ * model.reward))


def _draw(p: np.ndarray, rng: np.random.Generator) -> int:
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(p) - 1))


def simulate(model: FomgModel, pi, nu, rng: np.random.Generator) -> Trajectory:
    s = model.initial_state
    states, acts_a, acts_b, rewards = [s], [], [], []
    for h in range(model.H):
        a = _draw(pi[h, s], rng)
        b = _draw(nu[h, s], rng)
        rewards.append(float(model.reward[h, s, a, b]))
        s = _draw(model.transition[h, s, a, b], rng)
        acts_a.append(a)
        acts_b.append(b)
        states.append(s)
    return Trajectory(tuple(acts_a), tuple(acts_b), tuple(rewards), states=tuple(states))
