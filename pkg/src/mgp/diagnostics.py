"""Divergences, the GEC inequality checker and the prior-coverage quantity ω.

GEC check: given the rounds of a learner run, computes exactly

    LHS   = | Σ_t (V_{ρ^t}^{π^t,ν^t} - V_{f*}^{π^t,ν^t}) |
    Train = Σ_h Σ_t Σ_{τ<t} E_{(σ^τ,h)} ℓ(ρ^t, ξ_h^τ)

and the smallest d with LHS <= sqrt(d·Train) + 2H·sqrt(d·H·T) + ε·H·T.

ω(β, p0) = inf_ε { β·ε - ln p0[F(ε)] } over a finite class, where F(ε)
holds the models whose KL^{1/2} distance to f* is at most ε.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fomg, pomg
from .core import FomgModel, HistoryPolicy, ModelClass, ModelError, PomgModel
from .planning import value

PROB_CHECK_ATOL = 1e-9


class DiagnosticsError(ValueError):
    pass


def _as_dist(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > PROB_CHECK_ATOL:
        raise DiagnosticsError(f"{name} is not a probability distribution")
    return p


def _pair(P, Q):
    P, Q = _as_dist(P, "P"), _as_dist(Q, "Q")
    if P.shape != Q.shape:
        raise DiagnosticsError("distributions have different supports")
    return P, Q


def hellinger_sq(P, Q) -> float:
    """Squared Hellinger distance 1 - Σ sqrt(P·Q), clipped to [0, 1].

    Evaluated as ½·Σ (sqrt(P) - sqrt(Q))^2, which equals the above for
    normalized inputs and is exactly zero when P == Q.
    """
    P, Q = _pair(P, Q)
    return float(min(0.5 * np.sum((np.sqrt(P) - np.sqrt(Q)) ** 2), 1.0))


def kl(P, Q) -> float:
    """KL(P || Q) with 0·log(0/q) = 0; +inf when P is not absolutely continuous w.r.t. Q."""
    P, Q = _pair(P, Q)
    m = P > 0
    if np.any(Q[m] == 0):
        return math.inf
    return float(max(np.sum(P[m] * (np.log(P[m]) - np.log(Q[m]))), 0.0))


def total_variation(P, Q) -> float:
    P, Q = _pair(P, Q)
    return float(0.5 * np.abs(P - Q).sum())


def l1_hellinger_bound_check(P, Q) -> bool:
    """‖P - Q‖_1^2 <= 8·D_He^2(P, Q)."""
    P, Q = _pair(P, Q)
    l1 = float(np.abs(P - Q).sum())
    return l1 * l1 <= 8.0 * hellinger_sq(P, Q) + 1e-12


def _hellinger_rows(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return np.minimum(0.5 * np.sum((np.sqrt(P) - np.sqrt(Q)) ** 2, axis=-1), 1.0)


def gec_loss_fomg(f: FomgModel, f_star: FomgModel, xi=None, h: int | None = None):
    """Hellinger loss between next-state rows of f and f*.

    With ``xi=(s, a, b)`` and 1-based ``h`` returns one value; otherwise the
    full table of shape (H, S, A, B).
    """
    if f.dims != f_star.dims:
        raise ModelError("model dimensions differ")
    if xi is None:
        return _hellinger_rows(f.transition, f_star.transition)
    s, a, b = xi
    return hellinger_sq(f.transition[h - 1, s, a, b], f_star.transition[h - 1, s, a, b])


def _pomg_node_loss(f: PomgModel, f_star: PomgModel) -> np.ndarray:
    """½(sqrt(P_f(τ_h)/P_f*(τ_h)) - 1)^2 per history node; 0 where f* gives zero mass."""
    r_f = pomg.belief_tree(f).reach
    r_s = pomg.belief_tree(f_star).reach
    out = np.zeros_like(r_s)
    m = r_s > 0
    out[m] = 0.5 * (np.sqrt(r_f[m] / r_s[m]) - 1.0) ** 2
    return out


def gec_loss_pomg(f: PomgModel, f_star: PomgModel, pi: HistoryPolicy, nu: HistoryPolicy, h: int) -> float:
    """E_{τ_h ~ P^{σ}_{f*,h}} ½(sqrt(P_{f,h}(τ_h)/P_{f*,h}(τ_h)) - 1)^2 by enumeration."""
    if f.dims != f_star.dims:
        raise ModelError("model dimensions differ")
    nodes, probs = pomg.joint_distribution(f_star, pi, nu, h)
    loss = _pomg_node_loss(f, f_star)[nodes]
    return float(np.sum(probs.sum(axis=(1, 2)) * loss))


# ------------------------------------------------------------------ GEC check


@dataclass
class GecCheckReport:
    prediction_errors: np.ndarray
    lhs: float
    train_per_round: np.ndarray
    train_total: float
    epsilon: float
    H: int
    T: int
    minimal_d: float
    bound_d: dict = field(default_factory=dict)
    bound_satisfied: dict = field(default_factory=dict)

    def rhs(self, d: float) -> float:
        return math.sqrt(d * self.train_total) + 2 * self.H * math.sqrt(d * self.H * self.T) + self.epsilon * self.H * self.T

    def to_json(self) -> dict:
        return {
            "lhs": self.lhs,
            "train_total": self.train_total,
            "epsilon": self.epsilon,
            "H": self.H,
            "T": self.T,
            "minimal_d": self.minimal_d,
            "bound_d": self.bound_d,
            "bound_satisfied": self.bound_satisfied,
            "prediction_errors": self.prediction_errors.tolist(),
            "train_per_round": self.train_per_round.tolist(),
        }


def minimal_gec_d(lhs: float, train: float, H: int, T: int, epsilon: float) -> float:
    """Smallest d >= 0 with lhs <= sqrt(d)·(sqrt(train) + 2H·sqrt(HT)) + εHT."""
    excess = abs(lhs) - epsilon * H * T
    if excess <= 0:
        return 0.0
    slope = math.sqrt(train) + 2 * H * math.sqrt(H * T)
    return (excess / slope) ** 2


def linear_mg_gec(H: int, d: int, T: int, epsilon: float) -> float:
    """Closed-form GEC bound for linear MGs: 16 H^3 d log(1 + HT/ε)."""
    return 16 * H**3 * d * math.log(1 + H * T / epsilon)


def linear_mixture_gec(H: int, d: int, T: int, epsilon: float, bound: float = 1.0) -> float:
    """Closed-form GEC bound for linear mixture MGs: 16 H^3 d log(1 + T B^2 / (d ε H))."""
    return 16 * H**3 * d * math.log(1 + T * bound**2 / (d * epsilon * H))


def check_gec(rounds, model_class: ModelClass, epsilon: float | None = None, use_alt: bool = False,
              closed_forms: dict | None = None) -> GecCheckReport:
    """Evaluate the GEC inequality on recorded rounds.

    ``rounds`` is a sequence of objects with ``rho``/``rho_alt`` (model
    indices) and the executed pair ``pi``/``nu``; the exploration policy is
    that executed pair. ``use_alt`` selects ``rho_alt`` (the exploiter's
    model) as ρ^t. ``closed_forms`` maps a label to a candidate d that is
    tested against the inequality.
    """
    rounds = list(rounds)
    if not rounds:
        raise DiagnosticsError("no round data; rerun with retain_round_data enabled")
    f_star = model_class.true_model
    H, T = f_star.H, len(rounds)
    epsilon = 1.0 / math.sqrt(H * T) if epsilon is None else float(epsilon)
    models = model_class.models

    if model_class.kind == "fomg":
        loss_tables = {}

        def loss(i):
            if i not in loss_tables:
                loss_tables[i] = gec_loss_fomg(models[i], f_star)
            return loss_tables[i]

        def occ(r):
            return fomg.occupancies(f_star, r.pi, r.nu)
    else:
        bt = pomg.belief_tree(f_star)
        depth = bt.tree.depth
        loss_tables = {}

        def loss(i):
            if i not in loss_tables:
                # per-node loss, summed over steps because each node sits at exactly one depth
                loss_tables[i] = _pomg_node_loss(models[i], f_star)
            return loss_tables[i]

        def occ(r):
            _, w = pomg._policy_reach(f_star, r.pi, r.nu)
            return np.where(depth > 0, w, 0.0)

    pred = np.zeros(T)
    train = np.zeros(T)
    cum_occ = None
    for t, r in enumerate(rounds):
        rho = r.rho_alt if use_alt else r.rho
        if rho < 0:
            raise DiagnosticsError("round has no model for the requested stream")
        pred[t] = value(models[rho], r.pi, r.nu) - value(f_star, r.pi, r.nu)
        if cum_occ is not None:
            train[t] = float(np.sum(loss(rho) * cum_occ))
        o = occ(r)
        cum_occ = o if cum_occ is None else cum_occ + o
    lhs = abs(float(pred.sum()))
    train_total = float(train.sum())
    report = GecCheckReport(pred, lhs, train, train_total, epsilon, H, T,
                            minimal_gec_d(lhs, train_total, H, T, epsilon))
    for label, d in (closed_forms or {}).items():
        report.bound_d[label] = float(d)
        report.bound_satisfied[label] = bool(lhs <= report.rhs(float(d)) + 1e-12)
    return report


# ------------------------------------------------------------------ omega


def fomg_distance(f_star: FomgModel, f: FomgModel) -> float:
    """sup_{h,s,a,b} KL(P_{f*,h}(.|s,a,b) || P_{f,h}(.|s,a,b))^{1/2}."""
    P, Q = f_star.transition, f.transition
    if P.shape != Q.shape:
        raise ModelError("model dimensions differ")
    if np.any((P > 0) & (Q == 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * (np.log(P) - np.log(np.where(Q > 0, Q, 1.0))), 0.0)
    return float(math.sqrt(max(terms.sum(axis=-1).max(), 0.0)))


def pomg_sup_kl(f_star: PomgModel, f: PomgModel) -> float:
    """sup over history policies of KL(P^{π,ν}_{f*,H} || P^{π,ν}_{f,H}).

    Policy factors cancel in the likelihood ratio, so the objective is the
    expected terminal log-ratio under f*, maximized by a cooperative DP over
    deterministic joint actions.
    """
    if f.dims != f_star.dims:
        raise ModelError("model dimensions differ")
    bs, bf = pomg.belief_tree(f_star), pomg.belief_tree(f)
    tree = bs.tree
    leaves = tree.nodes_at_depth[f_star.H]
    V = np.zeros(tree.size)
    rs, rf = bs.reach[leaves], bf.reach[leaves]
    live = rs > 0
    if np.any(live & (rf == 0)):
        # some policy reaches a history f rules out; that policy has infinite KL
        return math.inf
    V[leaves[live]] = np.log(rs[live]) - np.log(rf[live])
    for h in range(f_star.H - 1, 0, -1):
        nodes = tree.nodes_at_depth[h]
        cont = np.einsum("nabo,nabo->nab", bs.obs_prob[nodes], V[tree.children[nodes]])
        V[nodes] = cont.reshape(len(nodes), -1).max(axis=1)
    return float(max(bs.root_obs_prob @ V[tree.root_children], 0.0))


def pomg_kl_under(f_star: PomgModel, f: PomgModel, pi: HistoryPolicy, nu: HistoryPolicy) -> float:
    """KL(P^{π,ν}_{f*,H} || P^{π,ν}_{f,H}) for a given policy pair."""
    nodes, probs = pomg.joint_distribution(f_star, pi, nu, f_star.H)
    w = probs.sum(axis=(1, 2))
    rs = pomg.belief_tree(f_star).reach[nodes]
    rf = pomg.belief_tree(f).reach[nodes]
    m = w > 0
    if np.any(rf[m] == 0):
        return math.inf
    return float(max(np.sum(w[m] * (np.log(rs[m]) - np.log(rf[m]))), 0.0))


def pomg_distance(f_star: PomgModel, f: PomgModel) -> float:
    return math.sqrt(pomg_sup_kl(f_star, f))


def class_distances(model_class: ModelClass) -> np.ndarray:
    f_star = model_class.true_model
    dist = fomg_distance if model_class.kind == "fomg" else pomg_distance
    return np.array([0.0 if i == model_class.true_index else dist(f_star, m)
                     for i, m in enumerate(model_class.models)])


def omega(model_class: ModelClass, beta: float, distances: np.ndarray | None = None) -> float:
    """ω(β, p0) by an exact sweep over the realized distances (and ε → 0)."""
    if model_class.true_index is None:
        raise DiagnosticsError("omega needs a model class with true_index set")
    if beta <= 0:
        raise DiagnosticsError("beta must be positive")
    dist = class_distances(model_class) if distances is None else np.asarray(distances, dtype=np.float64)
    prior = model_class.prior
    candidates = np.unique(np.concatenate([[0.0], dist[np.isfinite(dist)]]))
    best = math.inf
    for eps in candidates:
        mass = float(prior[dist <= eps].sum())
        if mass > 0:
            best = min(best, beta * eps - math.log(mass))
    return best


def random_policy_kl_bound(model_class: ModelClass, index: int, n_pairs: int, rng: np.random.Generator) -> float:
    """Largest KL seen under random history-policy pairs (a lower bound on the sup)."""
    f_star = model_class.true_model
    tree = pomg.tree_for(f_star)
    best = 0.0
    for _ in range(n_pairs):
        pi = HistoryPolicy(tree, rng.dirichlet(np.ones(f_star.A), size=tree.size))
        nu = HistoryPolicy(tree, rng.dirichlet(np.ones(f_star.B), size=tree.size))
        best = max(best, pomg_kl_under(f_star, model_class.models[index], pi, nu))
    return best
