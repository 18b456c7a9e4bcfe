"""Setting-agnostic planning facade over a finite model class.

Learners never branch on FOMG vs POMG; they call a :class:`ClassPlanner`,
which dispatches to the exact planners and memoizes everything that is
data-independent: Nash plans per model and best-response values keyed on
(model, side, policy digest).
"""

from __future__ import annotations

import numpy as np

from . import fomg, pomg
from .core import FomgModel, HistoryPolicy, Model, ModelError, Trajectory, array_digest
from .matrix_game import DEFAULT_TOL


def policy_digest(policy) -> str:
    if isinstance(policy, HistoryPolicy):
        return policy.digest()
    return array_digest(np.asarray(policy))


def policy_array(policy) -> np.ndarray:
    return policy.probs if isinstance(policy, HistoryPolicy) else np.asarray(policy)


def nash(model: Model, tol: float = DEFAULT_TOL) -> tuple[float, object, object]:
    if isinstance(model, FomgModel):
        plan = fomg.nash_plan(model, tol)
        return plan.nash_value, plan.pi_star, plan.nu_star
    plan = pomg.nash_plan_pomg(model, tol=tol)
    return plan.nash_value, plan.pi_star, plan.nu_star


def best_response(model: Model, policy, side: str):
    if isinstance(model, FomgModel):
        return fomg.best_response(model, policy, side)
    return pomg.best_response_pomg(model, policy, side)


def value(model: Model, pi, nu) -> float:
    if isinstance(model, FomgModel):
        return fomg.policy_value(model, pi, nu)
    return pomg.policy_value_pomg(model, pi, nu)


def simulate(model: Model, pi, nu, rng: np.random.Generator) -> Trajectory:
    if isinstance(model, FomgModel):
        return fomg.simulate(model, pi, nu, rng)
    return pomg.simulate_pomg(model, pi, nu, rng)


def random_policy(model: Model, side: str, rng: np.random.Generator):
    """Fresh random conditional distributions for one player."""
    n = model.A if side == "max" else model.B
    if isinstance(model, FomgModel):
        return rng.dirichlet(np.ones(n), size=(model.H, model.S))
    tree = pomg.tree_for(model)
    probs = rng.dirichlet(np.ones(n), size=tree.size)
    return HistoryPolicy(tree, probs)


class ClassPlanner:
    """Memoized planners for every model of a class (plus optional extra models)."""

    def __init__(self, models, tol: float = DEFAULT_TOL):
        self.models = tuple(models)
        self.tol = tol
        self._nash: dict[int, tuple] = {}
        self._br: dict[tuple, tuple] = {}
        kinds = {m.kind for m in self.models}
        if len(kinds) != 1:
            raise ModelError("planner models must share a kind")
        self.kind = kinds.pop()

    def nash(self, i: int) -> tuple[float, object, object]:
        if i not in self._nash:
            self._nash[i] = nash(self.models[i], self.tol)
        return self._nash[i]

    def nash_values(self) -> np.ndarray:
        return np.array([self.nash(i)[0] for i in range(len(self.models))])

    def best_response(self, i: int, policy, side: str, digest: str | None = None):
        key = (i, side, digest or policy_digest(policy))
        if key not in self._br:
            self._br[key] = best_response(self.models[i], policy, side)
        return self._br[key]

    def br_values(self, policy, side: str) -> np.ndarray:
        d = policy_digest(policy)
        return np.array([self.best_response(i, policy, side, d)[0] for i in range(len(self.models))])

    def value(self, i: int, pi, nu) -> float:
        return value(self.models[i], pi, nu)
