"""Exact planning in small common-observation POMGs.

Both players see the same observation and both actions, so the belief over
the latent state given the public history is common knowledge. Beliefs do
not depend on the policies (actions are observed), which makes the game a
stochastic game on the history tree and backward induction over belief
nodes exact.

Steps ``h`` in the public API are 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    DEFAULT_NODE_BUDGET,
    HistoryPolicy,
    HistoryTree,
    ModelError,
    PomgModel,
    Trajectory,
    enumerate_histories,
)
from .matrix_game import DEFAULT_TOL, TIE_TOL, solve_matrix_game


@dataclass(frozen=True, eq=False)
class BeliefTree:
    """Policy-independent filtering quantities for every history node.

    ``belief[n]``       Pr(s_h | history of n), uniform where unreachable.
    ``reach[n]``        P_f(o_1, a_1, b_1, ..., o_h) with actions held fixed.
    ``obs_prob[n]``     Pr(o_{h+1} | history, a_h, b_h) of shape (A, B, O); zero rows at leaves.
    ``reachable[n]``    reach > 0.
    """

    tree: HistoryTree
    belief: np.ndarray
    reach: np.ndarray
    obs_prob: np.ndarray
    root_obs_prob: np.ndarray
    reachable: np.ndarray


def tree_for(model: PomgModel, budget: int = DEFAULT_NODE_BUDGET) -> HistoryTree:
    return enumerate_histories(model.H, model.O, model.A, model.B, budget)


def _check_tree(model: PomgModel, tree: HistoryTree) -> None:
    if (tree.H, tree.O, tree.A, tree.B) != (model.H, model.O, model.A, model.B):
        raise ModelError("history tree does not match model dimensions")


@lru_cache(maxsize=512)
def belief_tree(model: PomgModel) -> BeliefTree:
    tree = tree_for(model)
    H, S, A, B, O = model.dims
    N = tree.size
    belief = np.full((N, S), 1.0 / S)
    reach = np.zeros(N)
    obs_prob = np.zeros((N, A, B, O))

    joint0 = model.mu1[:, None] * model.emission[0]  # (S, O)
    root_obs = joint0.sum(axis=0)
    kids = tree.root_children
    reach[kids] = root_obs
    pos = root_obs > 0
    belief[kids[pos]] = (joint0[:, pos] / root_obs[pos]).T

    for h in range(1, H):
        nodes = tree.nodes_at_depth[h]
        b = belief[nodes]
        pred = np.einsum("ns,sabt->nabt", b, model.transition[h - 1])
        joint = pred[..., :, None] * model.emission[h][None, None, None, :, :]  # n,a,b,s',o
        op = joint.sum(axis=3)
        live = reach[nodes] > 0
        op[~live] = 0.0
        obs_prob[nodes] = op
        child = tree.children[nodes]  # n,a,b,o
        reach[child] = reach[nodes][:, None, None, None] * op
        ok = op > 0
        cb = np.moveaxis(joint, 3, -1)  # n,a,b,o,s'
        normed = np.divide(cb, op[..., None], out=np.zeros_like(cb), where=ok[..., None])
        belief[child[ok]] = normed[ok]
    reachable = reach > 0
    for arr in (belief, reach, obs_prob, root_obs, reachable):
        arr.setflags(write=False)
    return BeliefTree(tree, belief, reach, obs_prob, root_obs, reachable)


def _continuation(model: PomgModel, bt: BeliefTree, h: int, nodes: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Stage payoffs Q[n, a, b] at 1-based depth h for the given nodes."""
    tree = bt.tree
    Q = model.reward[h - 1][tree.last_obs[nodes]].copy()
    if h < model.H:
        child_vals = V[tree.children[nodes]]
        Q += np.einsum("nabo,nabo->nab", bt.obs_prob[nodes], child_vals)
    return Q


def _root_value(bt: BeliefTree, V: np.ndarray) -> float:
    return float(bt.root_obs_prob @ V[bt.tree.root_children])


@dataclass(frozen=True, eq=False)
class PomgPlan:
    nash_value: float
    pi_star: HistoryPolicy
    nu_star: HistoryPolicy
    node_values: np.ndarray


def nash_plan_pomg(model: PomgModel, tree: HistoryTree | None = None, tol: float = DEFAULT_TOL) -> PomgPlan:
    bt = belief_tree(model)
    tree = bt.tree if tree is None else tree
    _check_tree(model, tree)
    H, A, B = model.H, model.A, model.B
    V = np.zeros(tree.size)
    pi = np.full((tree.size, A), 1.0 / A)
    nu = np.full((tree.size, B), 1.0 / B)
    for h in range(H, 0, -1):
        nodes = tree.nodes_at_depth[h]
        Q = _continuation(model, bt, h, nodes, V)
        for k, n in enumerate(nodes):
            if not bt.reachable[n]:
                continue
            sol = solve_matrix_game(Q[k], tol)
            V[n] = sol.value
            pi[n] = sol.row_strategy
            nu[n] = sol.col_strategy
    return PomgPlan(_root_value(bt, V), HistoryPolicy(tree, pi), HistoryPolicy(tree, nu), V)


def best_response_pomg(model: PomgModel, opponent: HistoryPolicy, side: str) -> tuple[float, HistoryPolicy]:
    """Best response of the ``side`` player to a fixed opponent history policy."""
    bt = belief_tree(model)
    tree = bt.tree
    if opponent.tree is not tree and opponent.tree.size != tree.size:
        raise ModelError("opponent policy is defined on a different history tree")
    _check_tree(model, opponent.tree)
    if side == "min":
        if opponent.probs.shape[1] != model.A:
            raise ModelError("opponent policy must be over the max-player's actions")
        n_resp = model.B
    elif side == "max":
        if opponent.probs.shape[1] != model.B:
            raise ModelError("opponent policy must be over the min-player's actions")
        n_resp = model.A
    else:
        raise ModelError(f"side must be 'max' or 'min', got {side!r}")
    V = np.zeros(tree.size)
    resp = np.full((tree.size, n_resp), 1.0 / n_resp)
    for h in range(model.H, 0, -1):
        nodes = tree.nodes_at_depth[h]
        Q = _continuation(model, bt, h, nodes, V)
        opp = opponent.probs[nodes]
        if side == "min":
            W = np.einsum("na,nab->nb", opp, Q)
            best = W.min(axis=1, keepdims=True)
            choice = np.argmax(W <= best + TIE_TOL, axis=1)
        else:
            W = np.einsum("nab,nb->na", Q, opp)
            best = W.max(axis=1, keepdims=True)
            choice = np.argmax(W >= best - TIE_TOL, axis=1)
        V[nodes] = best[:, 0]
        r = np.zeros((len(nodes), n_resp))
        r[np.arange(len(nodes)), choice] = 1.0
        resp[nodes] = r
    return _root_value(bt, V), HistoryPolicy(tree, resp)


def plan_exploitability_pomg(model: PomgModel, pi: HistoryPolicy, nu: HistoryPolicy) -> float:
    """Largest unilateral gain for either player against the history-tree best response."""
    v = policy_value_pomg(model, pi, nu)
    return max(best_response_pomg(model, nu, "max")[0] - v, v - best_response_pomg(model, pi, "min")[0])


def _policy_reach(model: PomgModel, pi: HistoryPolicy, nu: HistoryPolicy) -> tuple[BeliefTree, np.ndarray]:
    """w[n] = P_f^{pi,nu}(o_1, a_1, b_1, ..., o_h) for every node."""
    bt = belief_tree(model)
    tree = bt.tree
    for p, n_act, name in ((pi, model.A, "pi"), (nu, model.B, "nu")):
        _check_tree(model, p.tree)
        if p.probs.shape != (tree.size, n_act):
            raise ModelError(f"{name} does not match the model's history tree")
    w = np.zeros(tree.size)
    w[tree.root_children] = bt.root_obs_prob
    for h in range(1, model.H):
        nodes = tree.nodes_at_depth[h]
        step = (w[nodes][:, None, None, None] * pi.probs[nodes][:, :, None, None]
                * nu.probs[nodes][:, None, :, None] * bt.obs_prob[nodes])
        w[tree.children[nodes]] = step
    return bt, w


def policy_value_pomg(model: PomgModel, pi: HistoryPolicy, nu: HistoryPolicy) -> float:
    bt, w = _policy_reach(model, pi, nu)
    tree = bt.tree
    total = 0.0
    for h in range(1, model.H + 1):
        nodes = tree.nodes_at_depth[h]
        r = model.reward[h - 1][tree.last_obs[nodes]]
        total += float(np.einsum("n,na,nb,nab->", w[nodes], pi.probs[nodes], nu.probs[nodes], r))
    return total


def joint_distribution(model: PomgModel, pi: HistoryPolicy, nu: HistoryPolicy, h: int) -> tuple[np.ndarray, np.ndarray]:
    """P_{f,h}^{pi,nu}(tau_h) over depth-h nodes crossed with (a_h, b_h).

    Returns ``(node_ids, probs)`` with ``probs`` of shape (len(node_ids), A, B).
    """
    if not 1 <= h <= model.H:
        raise ModelError(f"step {h} out of range 1..{model.H}")
    bt, w = _policy_reach(model, pi, nu)
    nodes = bt.tree.nodes_at_depth[h]
    probs = w[nodes][:, None, None] * pi.probs[nodes][:, :, None] * nu.probs[nodes][:, None, :]
    return nodes, probs


def prefix_logliks(model: PomgModel, traj: Trajectory, h: int | None = None) -> np.ndarray:
    """log P_{f,k}(tau_k) for k = 1..h by a scaled forward recursion.

    The scale factors are accumulated in log space so long prefixes of small
    probabilities do not underflow. Entries after a zero-probability prefix
    are -inf.
    """
    h = model.H if h is None else h
    if not 1 <= h <= model.H:
        raise ModelError(f"prefix length {h} out of range 1..{model.H}")
    traj.validate_pomg(model, h)
    out = np.full(h, -np.inf)
    obs, a, b = traj.observations, traj.actions_max, traj.actions_min
    alpha = model.mu1 * model.emission[0][:, obs[0]]
    log_scale = 0.0
    for k in range(h):
        if k > 0:
            alpha = (alpha @ model.transition[k - 1][:, a[k - 1], b[k - 1], :]) * model.emission[k][:, obs[k]]
        c = alpha.sum()
        if c <= 0:
            break
        log_scale += math.log(c)
        alpha = alpha / c
        out[k] = log_scale
    return out


def trajectory_likelihood(model: PomgModel, traj: Trajectory, h: int | None = None) -> float:
    """P_{f,h}(tau_h): probability of the observation prefix under do(actions)."""
    ll = prefix_logliks(model, traj, h)
    return float(math.exp(ll[-1])) if np.isfinite(ll[-1]) else 0.0


def _draw(p: np.ndarray, rng: np.random.Generator) -> int:
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(p) - 1))


def simulate_pomg(model: PomgModel, pi: HistoryPolicy, nu: HistoryPolicy, rng: np.random.Generator) -> Trajectory:
    tree = pi.tree
    s = _draw(model.mu1, rng)
    states, obs, acts_a, acts_b, rewards = [s], [], [], [], []
    node = 0
    for h in range(model.H):
        o = _draw(model.emission[h, s], rng)
        node = int(tree.root_children[o]) if h == 0 else int(tree.children[node, acts_a[-1], acts_b[-1], o])
        a = _draw(pi.probs[node], rng)
        b = _draw(nu.probs[node], rng)
        obs.append(o)
        acts_a.append(a)
        acts_b.append(b)
        rewards.append(float(model.reward[h, o, a, b]))
        s = _draw(model.transition[h, s, a, b], rng)
        states.append(s)
    return Trajectory(tuple(acts_a), tuple(acts_b), tuple(rewards), states=tuple(states), observations=tuple(obs))
