"""Generators and validators for tabular game families.

Covers random tabular games, linear mixture games (transition = θ_h^T φ),
α-weakly-revealing POMGs (S-th singular value of every emission matrix at
least α) and decodable POMGs (disjoint emission supports), plus finite
model classes built around a designated true model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import FomgModel, ModelClass, ModelError, PomgModel

MAX_ATTEMPTS = 1000
SVD_MAX_DIM = 32


class InfeasibleSpecError(RuntimeError):
    pass


def _random_rows(rng, shape, n: int, support: int | None = None) -> np.ndarray:
    """Dirichlet(1) rows over ``n`` outcomes, optionally on ``support`` random outcomes."""
    if n == 1:
        return np.ones((*shape, 1))
    if support is None or support >= n:
        return rng.dirichlet(np.ones(n), size=shape)
    if support < 1:
        raise ValueError("sparsity must be at least 1")
    out = np.zeros((*shape, n))
    flat = out.reshape(-1, n)
    for row in flat:
        idx = rng.choice(n, size=support, replace=False)
        row[idx] = rng.dirichlet(np.ones(support)) if support > 1 else 1.0
    return out


def _steps(rng, H: int, stationary: bool, make):
    if stationary:
        one = make(rng)
        return np.repeat(one[None], H, axis=0)
    return np.stack([make(rng) for _ in range(H)])


def gen_tabular_fomg(dims, rng: np.random.Generator, sparsity: int | None = None,
                     stationary: bool = False) -> FomgModel:
    """Random FOMG; ``sparsity`` is the number of reachable next states per row."""
    H, S, A, B = dims
    P = _steps(rng, H, stationary, lambda g: _random_rows(g, (S, A, B), S, sparsity))
    r = rng.uniform(0.0, 1.0, size=(H, S, A, B))
    return FomgModel(P, r, 0)


def gen_tabular_pomg(dims, rng: np.random.Generator, stationary: bool = False) -> PomgModel:
    H, S, A, B, O = dims
    mu1 = rng.dirichlet(np.ones(S))
    P = _steps(rng, H, stationary, lambda g: _random_rows(g, (S, A, B), S))
    E = _steps(rng, H, stationary, lambda g: _random_rows(g, (S,), O))
    r = rng.uniform(0.0, 1.0, size=(H, O, A, B))
    return PomgModel(mu1, P, E, r)


# ---------------------------------------------------------------- linear mixture


@dataclass(frozen=True, eq=False)
class LinearMixtureSpec:
    """P_h(s'|s,a,b) = θ_h^T φ(s,a,b,s').

    ``features`` has shape (d, S, A, B, S): feature i is a basis kernel.
    ``theta`` has shape (H, d). Leave either as None to have it sampled.
    """

    d: int
    S: int
    A: int
    B: int
    H: int
    bound: float = 1.0
    features: np.ndarray | None = None
    theta: np.ndarray | None = None

    def kernel(self, theta: np.ndarray | None = None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        return np.einsum("hd,dsabt->hsabt", theta, self.features)


def _valid_kernel(P: np.ndarray, atol: float = 1e-10) -> bool:
    return bool(np.all(P >= -atol) and np.allclose(P.sum(-1), 1.0, atol=atol, rtol=0))


def gen_linear_mixture(spec: LinearMixtureSpec, rng: np.random.Generator,
                       reward: np.ndarray | None = None) -> tuple[FomgModel, LinearMixtureSpec]:
    d, S, A, B, H = spec.d, spec.S, spec.A, spec.B, spec.H
    if d < 1 or d > S * A * B * S:
        raise InfeasibleSpecError(f"mixture dimension {d} must lie in [1, S·A·B·S]")
    features = spec.features
    if features is None:
        # each feature is a random valid kernel so simplex weights give valid mixtures
        features = rng.dirichlet(np.ones(S), size=(d, S, A, B))
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (d, S, A, B, S):
        raise ModelError(f"features must have shape {(d, S, A, B, S)}")
    theta = spec.theta
    attempts = 0
    while True:
        attempts += 1
        if theta is None or attempts > 1:
            theta = rng.dirichlet(np.ones(d), size=H) if spec.theta is None else _project_simplex(theta)
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (H, d):
            raise ModelError(f"theta must have shape {(H, d)}")
        P = np.einsum("hd,dsabt->hsabt", theta, features)
        if _valid_kernel(P) and np.all(np.linalg.norm(theta, axis=1) <= spec.bound + 1e-12):
            break
        if attempts >= MAX_ATTEMPTS:
            raise InfeasibleSpecError("could not find parameters inducing a valid kernel")
    # clip rounding noise; renormalizing keeps the reconstruction error at machine precision
    P = np.clip(P, 0.0, None)
    P = P / P.sum(-1, keepdims=True)
    if reward is None:
        reward = rng.uniform(0.0, 1.0, size=(H, S, A, B))
    out_spec = replace(spec, features=features, theta=theta)
    return FomgModel(P, reward, 0), out_spec


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    k = np.arange(1, v.shape[1] + 1)
    cond = u - css / k > 0
    rho = cond.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(len(v)), rho] / (rho + 1)
    return np.maximum(v - tau[:, None], 0.0)


def linear_mixture_class_around(spec: LinearMixtureSpec, f_star: FomgModel, n_models: int,
                                perturbation: float, rng: np.random.Generator) -> ModelClass:
    """Class of linear mixture models sharing φ and rewards, with θ perturbed in the simplex."""
    _check_class_args(n_models, perturbation)
    models = []
    for _ in range(n_models - 1):
        theta = (1 - perturbation) * spec.theta + perturbation * rng.dirichlet(np.ones(spec.d), size=spec.H)
        P = spec.kernel(theta)
        P = P / P.sum(-1, keepdims=True)
        models.append(FomgModel(P, f_star.reward, f_star.initial_state))
    return _insert_truth(models, f_star, rng)


# ---------------------------------------------------------------- model classes


def _check_class_args(n_models: int, perturbation: float) -> None:
    if n_models < 1:
        raise ValueError("n_models must be at least 1")
    if not 0 < perturbation <= 1:
        raise ValueError("perturbation must lie in (0, 1]")


def _insert_truth(others: list, f_star, rng) -> ModelClass:
    pos = int(rng.integers(len(others) + 1))
    models = others[:pos] + [f_star] + others[pos:]
    return ModelClass.uniform(models, true_index=pos)


def _mix(base: np.ndarray, w: float, rng, n: int) -> np.ndarray:
    draw = rng.dirichlet(np.ones(n), size=base.shape[:-1])
    out = (1 - w) * base + w * draw
    return out / out.sum(-1, keepdims=True)


def perturb_model(f_star, perturbation: float, rng: np.random.Generator):
    """Mix every probability row of f* with a fresh Dirichlet draw at weight ``perturbation``."""
    if isinstance(f_star, FomgModel):
        return FomgModel(_mix(f_star.transition, perturbation, rng, f_star.S), f_star.reward,
                         f_star.initial_state)
    return PomgModel(_mix(f_star.mu1, perturbation, rng, f_star.S),
                     _mix(f_star.transition, perturbation, rng, f_star.S),
                     _mix(f_star.emission, perturbation, rng, f_star.O),
                     f_star.reward)


def model_class_around(f_star, n_models: int, perturbation: float, rng: np.random.Generator,
                       accept: Callable | None = None) -> ModelClass:
    """Uniform-prior class holding f* and ``n_models - 1`` perturbed variants.

    ``accept`` optionally filters variants (e.g. to keep a revealing margin);
    rejected draws are retried up to 1000 times per model.
    """
    _check_class_args(n_models, perturbation)
    others = []
    for _ in range(n_models - 1):
        for _attempt in range(MAX_ATTEMPTS):
            m = perturb_model(f_star, perturbation, rng)
            if accept is None or accept(m):
                break
        else:
            raise InfeasibleSpecError("no perturbed model passed the acceptance check")
        others.append(m)
    return _insert_truth(others, f_star, rng)


# ---------------------------------------------------------------- revealing POMGs


@dataclass(frozen=True)
class RevealingSpec:
    alpha: float
    S: int
    O: int
    A: int
    B: int
    H: int
    stationary: bool = False


def smallest_singular_value(M: np.ndarray) -> float:
    """σ_min(M) for a tall matrix via the symmetric eigenproblem of M^T M."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or max(M.shape) > SVD_MAX_DIM:
        raise ValueError(f"expected a matrix of at most {SVD_MAX_DIM}x{SVD_MAX_DIM}")
    if M.shape[0] < M.shape[1]:
        return 0.0
    lam = np.linalg.eigvalsh(M.T @ M)
    return float(np.sqrt(max(lam[0], 0.0)))


def emission_matrix(model: PomgModel, h: int) -> np.ndarray:
    """O_h as an (O x S) matrix whose (o, s) entry is O_h(o|s); h is 1-based."""
    return model.emission[h - 1].T


def revealing_alpha(model: PomgModel) -> float:
    """min_h σ_S(O_h)."""
    return min(smallest_singular_value(emission_matrix(model, h)) for h in range(1, model.H + 1))


def _identity_padded(S: int, O: int) -> np.ndarray:
    """(S, O) emission rows: state s emits observation s."""
    E = np.zeros((S, O))
    E[np.arange(S), np.arange(S)] = 1.0
    return E


def gen_weakly_revealing_pomg(spec: RevealingSpec, rng: np.random.Generator) -> PomgModel:
    S, O, A, B, H = spec.S, spec.O, spec.A, spec.B, spec.H
    if O < S:
        raise InfeasibleSpecError("revealing POMGs here are undercomplete: need O >= S")
    if spec.alpha <= 0:
        raise ValueError("alpha must be positive")
    base = gen_tabular_pomg((H, S, A, B, O), rng, spec.stationary)
    E = base.emission.copy()
    ident = _identity_padded(S, O)
    for _ in range(MAX_ATTEMPTS):
        sig = [smallest_singular_value(E[h].T) for h in range(H)]
        bad = [h for h in range(H) if sig[h] < spec.alpha]
        if not bad:
            return PomgModel(base.mu1, base.transition, E, base.reward)
        for h in bad:
            # move toward the identity-padded emission, which has σ_S = 1
            E[h] = 0.9 * E[h] + 0.1 * ident
            E[h] /= E[h].sum(-1, keepdims=True)
    raise InfeasibleSpecError(f"could not reach alpha={spec.alpha} within {MAX_ATTEMPTS} attempts")


# ---------------------------------------------------------------- decodable POMGs


def gen_decodable_pomg(dims, rng: np.random.Generator, stationary: bool = False) -> tuple[PomgModel, np.ndarray]:
    """POMG whose observations identify the state: observation blocks partition O across states.

    Returns the model and the decoder array mapping observation -> state.
    """
    H, S, A, B, O = dims
    if O < S:
        raise InfeasibleSpecError("decodable POMGs need O >= S")
    blocks = np.array_split(np.arange(O), S)
    decoder = np.empty(O, dtype=np.int64)
    for s, blk in enumerate(blocks):
        decoder[blk] = s

    def make(g):
        E = np.zeros((S, O))
        for s, blk in enumerate(blocks):
            E[s, blk] = g.dirichlet(np.ones(len(blk)))
        return E

    base = gen_tabular_pomg((H, S, A, B, O), rng, stationary)
    E = _steps(rng, H, stationary, make)
    return PomgModel(base.mu1, base.transition, E, base.reward), decoder


def is_decodable(model: PomgModel) -> bool:
    return bool(np.all((model.emission > 0).sum(axis=1) <= 1))
