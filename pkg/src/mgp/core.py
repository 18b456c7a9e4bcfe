"""Domain types for tabular two-player zero-sum Markov games.

Index conventions (all arrays are float64, row-major):

* ``FomgModel.transition[h, s, a, b, s']`` is P_h(s'|s,a,b), ``reward[h, s, a, b]``.
* ``PomgModel.transition[h, s, a, b, s']``, ``emission[h, s, o]`` is O_h(o|s),
  ``reward[h, o, a, b]`` and ``mu1[s]``.
* Markov policies are ``pi[h, s, a]`` / ``nu[h, s, b]``.
* History policies are ``probs[node, action]`` over the nodes of a
  :class:`HistoryTree`; the root row is unused and kept uniform.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

PROB_ATOL = 1e-12
DEFAULT_NODE_BUDGET = 10**6


class ModelError(ValueError):
    """Raised when a model, policy or trajectory violates its invariants."""


class BudgetExceededError(RuntimeError):
    """Raised when a history tree would exceed the configured node budget."""

    def __init__(self, required: int, budget: int):
        super().__init__(f"history tree needs {required} nodes, budget is {budget}")
        self.required = required
        self.budget = budget


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def check_distribution(p: np.ndarray, name: str, axis: int = -1) -> None:
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ModelError(f"{name}: non-finite probabilities")
    if np.any(p < 0):
        raise ModelError(f"{name}: negative probabilities")
    err = np.max(np.abs(p.sum(axis=axis) - 1.0)) if p.size else 0.0
    if err > PROB_ATOL:
        raise ModelError(f"{name}: rows do not sum to 1 (max deviation {err:.3e})")


def _check_rewards(r: np.ndarray) -> None:
    if not np.all(np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
        raise ModelError("rewards must lie in [0, 1]")


def array_digest(*arrays: np.ndarray) -> str:
    h = hashlib.blake2b(digest_size=16)
    for arr in arrays:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class FomgModel:
    """Finite-horizon fully observable zero-sum Markov game with fixed s_1."""

    transition: np.ndarray
    reward: np.ndarray
    initial_state: int = 0

    def __post_init__(self):
        P = _frozen(self.transition)
        r = _frozen(self.reward)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        if P.ndim != 5 or P.shape[1] != P.shape[4]:
            raise ModelError(f"transition must have shape (H,S,A,B,S), got {P.shape}")
        if r.shape != P.shape[:4]:
            raise ModelError(f"reward shape {r.shape} does not match transition {P.shape[:4]}")
        check_distribution(P, "transition")
        _check_rewards(r)
        if not 0 <= int(self.initial_state) < P.shape[1]:
            raise ModelError(f"initial_state {self.initial_state} out of range")
        object.__setattr__(self, "initial_state", int(self.initial_state))

    kind = "fomg"

    @property
    def H(self) -> int:
        return self.transition.shape[0]

    @property
    def S(self) -> int:
        return self.transition.shape[1]

    @property
    def A(self) -> int:
        return self.transition.shape[2]

    @property
    def B(self) -> int:
        return self.transition.shape[3]

    @property
    def dims(self) -> tuple:
        return (self.H, self.S, self.A, self.B)

    def digest(self) -> str:
        return array_digest(self.transition, self.reward, np.array([self.initial_state]))

    def to_json(self) -> dict:
        return {
            "kind": "fomg",
            "H": self.H,
            "S": self.S,
            "A": self.A,
            "B": self.B,
            "transition": self.transition.ravel().tolist(),
            "rewards": self.reward.ravel().tolist(),
            "initial_state": self.initial_state,
        }


@dataclass(frozen=True, eq=False)
class PomgModel:
    """Finite-horizon partially observable zero-sum Markov game, theta = (mu1, P, O)."""

    mu1: np.ndarray
    transition: np.ndarray
    emission: np.ndarray
    reward: np.ndarray

    def __post_init__(self):
        mu1 = _frozen(self.mu1)
        P = _frozen(self.transition)
        E = _frozen(self.emission)
        r = _frozen(self.reward)
        for name, val in (("mu1", mu1), ("transition", P), ("emission", E), ("reward", r)):
            object.__setattr__(self, name, val)
        if P.ndim != 5 or P.shape[1] != P.shape[4]:
            raise ModelError(f"transition must have shape (H,S,A,B,S), got {P.shape}")
        H, S, A, B = P.shape[:4]
        if mu1.shape != (S,):
            raise ModelError(f"mu1 must have shape ({S},)")
        if E.ndim != 3 or E.shape[:2] != (H, S):
            raise ModelError(f"emission must have shape (H,S,O), got {E.shape}")
        if r.shape != (H, E.shape[2], A, B):
            raise ModelError(f"reward must have shape (H,O,A,B), got {r.shape}")
        check_distribution(mu1, "mu1")
        check_distribution(P, "transition")
        check_distribution(E, "emission")
        _check_rewards(r)

    kind = "pomg"

    @property
    def H(self) -> int:
        return self.transition.shape[0]

    @property
    def S(self) -> int:
        return self.transition.shape[1]

    @property
    def A(self) -> int:
        return self.transition.shape[2]

    @property
    def B(self) -> int:
        return self.transition.shape[3]

    @property
    def O(self) -> int:  # noqa: E743
        return self.emission.shape[2]

    @property
    def dims(self) -> tuple:
        return (self.H, self.S, self.A, self.B, self.O)

    def digest(self) -> str:
        return array_digest(self.mu1, self.transition, self.emission, self.reward)

    def to_json(self) -> dict:
        return {
            "kind": "pomg",
            "H": self.H,
            "S": self.S,
            "A": self.A,
            "B": self.B,
            "O": self.O,
            "mu1": self.mu1.tolist(),
            "transition": self.transition.ravel().tolist(),
            "emission": self.emission.ravel().tolist(),
            "rewards": self.reward.ravel().tolist(),
        }


Model = Union[FomgModel, PomgModel]


def model_from_json(d: dict) -> Model:
    kind = d.get("kind")
    H, S, A, B = (int(d[k]) for k in ("H", "S", "A", "B"))
    P = np.asarray(d["transition"], dtype=np.float64).reshape(H, S, A, B, S)
    if kind == "fomg":
        r = np.asarray(d["rewards"], dtype=np.float64).reshape(H, S, A, B)
        return FomgModel(P, r, int(d.get("initial_state", 0)))
    if kind == "pomg":
        O = int(d["O"])
        E = np.asarray(d["emission"], dtype=np.float64).reshape(H, S, O)
        r = np.asarray(d["rewards"], dtype=np.float64).reshape(H, O, A, B)
        return PomgModel(np.asarray(d["mu1"], dtype=np.float64), P, E, r)
    raise ModelError(f"unknown model kind {kind!r}")


def dumps_model(model: Model) -> str:
    # repr-precision floats make the round trip bit-identical
    return json.dumps(model.to_json())


def loads_model(text: str) -> Model:
    return model_from_json(json.loads(text))


@dataclass(frozen=True, eq=False)
class MarkovJointPolicy:
    pi: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen(self.pi))
        object.__setattr__(self, "nu", _frozen(self.nu))
        check_distribution(self.pi, "pi")
        check_distribution(self.nu, "nu")


def uniform_markov_policy(H: int, S: int, n: int) -> np.ndarray:
    return np.full((H, S, n), 1.0 / n)


def validate_markov_policy(policy: np.ndarray, H: int, S: int, n: int, name: str = "policy") -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (H, S, n):
        raise ModelError(f"{name} has shape {policy.shape}, expected {(H, S, n)}")
    check_distribution(policy, name)
    return policy


@dataclass(frozen=True, eq=False)
class HistoryTree:
    """Complete public-history tree for (H, O, A, B), numbered in preorder.

    The root (id 0) is the empty history. A node at depth h >= 1 is the
    history (o_1, a_1, b_1, ..., o_h); its children append (a_h, b_h, o_{h+1}).
    """

    H: int
    O: int
    A: int
    B: int
    parent: np.ndarray
    depth: np.ndarray
    last_obs: np.ndarray
    last_a: np.ndarray
    last_b: np.ndarray
    root_children: np.ndarray
    children: np.ndarray
    nodes_at_depth: tuple

    @property
    def size(self) -> int:
        return len(self.parent)

    def node_of(self, obs: Sequence[int], a: Sequence[int], b: Sequence[int]) -> int:
        """Node id of (o_1, a_1, b_1, ..., o_h) with ``h = len(obs)``."""
        h = len(obs)
        if h < 1 or h > self.H or len(a) < h - 1 or len(b) < h - 1:
            raise ModelError("malformed history prefix")
        node = int(self.root_children[obs[0]])
        for k in range(1, h):
            node = int(self.children[node, a[k - 1], b[k - 1], obs[k]])
        return node

    def path(self, node: int) -> tuple:
        """Return (obs, a, b) of a node; a and b have one fewer entry than obs."""
        obs, acts_a, acts_b = [], [], []
        while node > 0:
            obs.append(int(self.last_obs[node]))
            if self.depth[node] > 1:
                acts_a.append(int(self.last_a[node]))
                acts_b.append(int(self.last_b[node]))
            node = int(self.parent[node])
        return obs[::-1], acts_a[::-1], acts_b[::-1]


def history_tree_size(H: int, O: int, A: int, B: int) -> int:
    return 1 + sum(O * (A * B * O) ** (h - 1) for h in range(1, H + 1))


def enumerate_histories(H: int, O: int, A: int, B: int, budget: int = DEFAULT_NODE_BUDGET) -> HistoryTree:
    if min(H, O, A, B) < 1:
        raise ModelError("H, O, A, B must be positive")
    n = history_tree_size(H, O, A, B)
    if n > budget:
        raise BudgetExceededError(n, budget)
    return _build_tree(H, O, A, B)


@lru_cache(maxsize=32)
def _build_tree(H: int, O: int, A: int, B: int) -> HistoryTree:
    n = history_tree_size(H, O, A, B)
    parent = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    last_obs = np.full(n, -1, dtype=np.int64)
    last_a = np.full(n, -1, dtype=np.int64)
    last_b = np.full(n, -1, dtype=np.int64)
    root_children = np.zeros(O, dtype=np.int64)
    children = np.full((n, A, B, O), -1, dtype=np.int64)

    counter = 1
    # explicit stack; children pushed in reverse so ids follow preorder
    stack = [(o, 0, -1, -1, 1) for o in reversed(range(O))]
    while stack:
        o, par, a, b, d = stack.pop()
        nid = counter
        counter += 1
        parent[nid] = par
        depth[nid] = d
        last_obs[nid], last_a[nid], last_b[nid] = o, a, b
        if par == 0:
            root_children[o] = nid
        else:
            children[par, a, b, o] = nid
        if d < H:
            for a2 in reversed(range(A)):
                for b2 in reversed(range(B)):
                    for o2 in reversed(range(O)):
                        stack.append((o2, nid, a2, b2, d + 1))
    by_depth = tuple(np.flatnonzero(depth == h) for h in range(H + 1))
    for arr in (parent, depth, last_obs, last_a, last_b, root_children, children, *by_depth):
        arr.setflags(write=False)
    return HistoryTree(H, O, A, B, parent, depth, last_obs, last_a, last_b, root_children, children, by_depth)


@dataclass(frozen=True, eq=False)
class HistoryPolicy:
    """One player's history-dependent policy: ``probs[node]`` over its actions."""

    tree: HistoryTree
    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 2 or probs.shape[0] != self.tree.size:
            raise ModelError(f"history policy must have {self.tree.size} rows, got shape {probs.shape}")
        check_distribution(probs, "history policy")

    @classmethod
    def uniform(cls, tree: HistoryTree, n_actions: int) -> "HistoryPolicy":
        return cls(tree, np.full((tree.size, n_actions), 1.0 / n_actions))

    def digest(self) -> str:
        return array_digest(self.probs)


@dataclass(frozen=True)
class Trajectory:
    """One executed episode.

    FOMG trajectories carry ``states`` of length H+1 (s_1..s_{H+1}); POMG
    trajectories carry ``observations`` of length H and ``states`` holds the
    latent states for bookkeeping only (never shown to learners).
    """

    actions_max: tuple
    actions_min: tuple
    rewards: tuple
    states: tuple = ()
    observations: tuple = ()

    @property
    def H(self) -> int:
        return len(self.actions_max)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    def validate_fomg(self, model: FomgModel) -> None:
        H, S, A, B = model.dims
        if len(self.actions_max) != H or len(self.actions_min) != H or len(self.states) != H + 1:
            raise ModelError("trajectory length does not match horizon")
        if not (all(0 <= s < S for s in self.states) and all(0 <= a < A for a in self.actions_max)
                and all(0 <= b < B for b in self.actions_min)):
            raise ModelError("trajectory index out of range")

    def validate_pomg(self, model: PomgModel, h: int | None = None) -> None:
        h = model.H if h is None else h
        if len(self.observations) < h or len(self.actions_max) < h or len(self.actions_min) < h:
            raise ModelError("trajectory prefix shorter than requested step")
        if not (all(0 <= o < model.O for o in self.observations[:h])
                and all(0 <= a < model.A for a in self.actions_max[:h])
                and all(0 <= b < model.B for b in self.actions_min[:h])):
            raise ModelError("trajectory index out of range")


@dataclass(frozen=True, eq=False)
class ModelClass:
    """Finite model class F with prior weights and (optionally) the index of f*."""

    models: tuple
    prior: np.ndarray
    true_index: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        models = tuple(self.models)
        object.__setattr__(self, "models", models)
        if not models:
            raise ModelError("model class is empty")
        kinds = {m.kind for m in models}
        if len(kinds) != 1:
            raise ModelError("model class mixes FOMG and POMG models")
        if len({m.dims for m in models}) != 1:
            raise ModelError("models in a class must share dimensions")
        prior = _frozen(self.prior)
        object.__setattr__(self, "prior", prior)
        if prior.shape != (len(models),):
            raise ModelError("prior length must match number of models")
        check_distribution(prior, "prior")
        if self.true_index is not None and not 0 <= self.true_index < len(models):
            raise ModelError("true_index out of range")

    @classmethod
    def uniform(cls, models: Sequence[Model], true_index: int | None = None) -> "ModelClass":
        n = len(models)
        return cls(tuple(models), np.full(n, 1.0 / n), true_index)

    def __len__(self) -> int:
        return len(self.models)

    @property
    def kind(self) -> str:
        return self.models[0].kind

    @property
    def true_model(self) -> Model:
        if self.true_index is None:
            raise ModelError("model class has no designated true model")
        return self.models[self.true_index]

    def stacked_transitions(self) -> np.ndarray:
        if "P" not in self._cache:
            self._cache["P"] = np.stack([m.transition for m in self.models])
        return self._cache["P"]

    def to_json(self) -> dict:
        return {
            "models": [m.to_json() for m in self.models],
            "prior": self.prior.tolist(),
            "true_index": self.true_index,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ModelClass":
        return cls(tuple(model_from_json(m) for m in d["models"]),
                   np.asarray(d["prior"], dtype=np.float64), d.get("true_index"))
