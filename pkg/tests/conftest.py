"""Shared fixtures and brute-force oracles.

The oracles enumerate full state/observation paths directly from the model
tables; they share no code with the planners under test.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from mgp.core import FomgModel, HistoryPolicy, PomgModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_markov(rng, H, S, n):
    return rng.dirichlet(np.ones(n), size=(H, S))


def random_history_policy(rng, tree, n):
    return HistoryPolicy(tree, rng.dirichlet(np.ones(n), size=tree.size))


def brute_fomg_value(model: FomgModel, pi, nu) -> float:
    """E[Σ r] by recursion over every (s, a, b, s') path."""

    def go(h, s):
        if h == model.H:
            return 0.0
        total = 0.0
        for a in range(model.A):
            for b in range(model.B):
                w = pi[h, s, a] * nu[h, s, b]
                if w == 0:
                    continue
                nxt = sum(model.transition[h, s, a, b, t] * go(h + 1, t) for t in range(model.S))
                total += w * (model.reward[h, s, a, b] + nxt)
        return total

    return go(0, model.initial_state)


def deterministic_markov_plans(H, S, n):
    """Every deterministic Markov plan as one-hot arrays of shape (H, S, n)."""
    for choice in itertools.product(range(n), repeat=H * S):
        plan = np.zeros((H, S, n))
        for k, c in enumerate(choice):
            plan[k // S, k % S, c] = 1.0
        yield plan


def brute_likelihood(model: PomgModel, obs, acts_a, acts_b, h) -> float:
    """P_h(o_1..o_h | do(a_1..a_{h-1}, b_1..b_{h-1})) summed over every state sequence."""
    total = 0.0
    for states in itertools.product(range(model.S), repeat=h):
        p = model.mu1[states[0]] * model.emission[0, states[0], obs[0]]
        for k in range(1, h):
            p *= model.transition[k - 1, states[k - 1], acts_a[k - 1], acts_b[k - 1], states[k]]
            p *= model.emission[k, states[k], obs[k]]
        total += p
    return total


def brute_pomg_value(model: PomgModel, pi: HistoryPolicy, nu: HistoryPolicy) -> float:
    """E[Σ r] by recursion over latent states, observations and actions."""
    tree = pi.tree

    def go(h, s, parent, a_prev, b_prev):
        if h == model.H:
            return 0.0
        total = 0.0
        for o in range(model.O):
            po = model.emission[h, s, o]
            if po == 0:
                continue
            node = tree.root_children[o] if h == 0 else tree.children[parent, a_prev, b_prev, o]
            for a in range(model.A):
                for b in range(model.B):
                    w = po * pi.probs[node, a] * nu.probs[node, b]
                    if w == 0:
                        continue
                    nxt = 0.0
                    if h + 1 < model.H:
                        nxt = sum(model.transition[h, s, a, b, t] * go(h + 1, t, node, a, b)
                                  for t in range(model.S))
                    total += w * (model.reward[h, o, a, b] + nxt)
        return total

    return sum(model.mu1[s] * go(0, s, -1, 0, 0) for s in range(model.S))


def brute_joint_distribution(model: PomgModel, pi: HistoryPolicy, nu: HistoryPolicy, h: int) -> dict:
    """{(node, a, b): P^{π,ν}_h} by enumerating latent paths."""
    tree = pi.tree
    out: dict = {}

    def go(k, s, parent, a_prev, b_prev, w):
        for o in range(model.O):
            po = model.emission[k, s, o]
            if po == 0:
                continue
            node = tree.root_children[o] if k == 0 else tree.children[parent, a_prev, b_prev, o]
            for a in range(model.A):
                for b in range(model.B):
                    wa = w * po * pi.probs[node, a] * nu.probs[node, b]
                    if k + 1 == h:
                        out[(int(node), a, b)] = out.get((int(node), a, b), 0.0) + wa
                    else:
                        for t in range(model.S):
                            go(k + 1, t, node, a, b, wa * model.transition[k, s, a, b, t])

    for s in range(model.S):
        go(0, s, -1, 0, 0, model.mu1[s])
    return out


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one summary line per acceptance criterion: ``acceptance(n, ok, detail)``."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(n: int, ok: bool, detail: str) -> bool:
        lines[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(lines[n])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
