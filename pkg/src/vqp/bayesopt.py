"""Gaussian-process Bayesian optimization with a lower-confidence-bound acquisition.

Minimizes a black-box objective over a box (normally the unit box produced by
:func:`vqp.params.normalize`). The surrogate is an exact GP with an RBF
kernel whose hyperparameters are set by heuristics at every fit: lengthscale
from the median pairwise distance, signal variance from ``var(y)``, prior mean
``mean(y)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.spatial.distance import cdist, pdist

from .exceptions import OptimizationError
from .rng import stream

log = logging.getLogger(__name__)

BASE_NOISE = 1e-6
MAX_NOISE = 1e-2
KAPPA = 2.0
N_CANDIDATES = 1024
N_REFINE = 8
N_PERTURB = 5
PERTURB_SIGMA = 0.05
N_TOTAL = 30


def rbf(a, b, lengthscale: float, signal_var: float) -> np.ndarray:
    d2 = cdist(np.atleast_2d(a), np.atleast_2d(b), "sqeuclidean")
    return signal_var * np.exp(-0.5 * d2 / lengthscale**2)


def median_lengthscale(x, floor: float = 0.0) -> float:
    """Median pairwise distance; ``sqrt(d)/2`` when undefined."""
    x = np.atleast_2d(x)
    fallback = 0.5 * np.sqrt(x.shape[1])
    if len(x) < 2:
        return max(fallback, floor)
    med = float(np.median(pdist(x)))
    return max(med if med > 0 else fallback, floor)


@dataclass(frozen=True, eq=False)
class GPModel:
    X: np.ndarray
    y: np.ndarray
    lengthscale: float
    signal_var: float
    noise_var: float
    mean: float
    chol: np.ndarray  # lower factor of K + noise I
    alpha: np.ndarray

    def predict(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance (clamped at 0) at the rows of ``xs``."""
        xs = np.atleast_2d(xs)
        ks = rbf(xs, self.X, self.lengthscale, self.signal_var)
        mu = self.mean + ks @ self.alpha
        v = cho_solve((self.chol, True), ks.T)
        var = self.signal_var - np.einsum("ij,ji->i", ks, v)
        return mu, np.maximum(var, 0.0)

    @cached_property
    def kinv(self) -> np.ndarray:
        return cho_solve((self.chol, True), np.eye(len(self.X)))

    def lcb(self, xs, kappa: float = KAPPA) -> np.ndarray:
        mu, var = self.predict(xs)
        return mu - kappa * np.sqrt(var)


def fit(X, y, *, lengthscale: float | None = None, lengthscale_floor: float = 0.0, noise: float = BASE_NOISE) -> GPModel:
    """Condition an RBF GP on ``(X, y)``.

    Raises:
        OptimizationError: if ``K + noise I`` cannot be factorized even with
            jitter raised to 1e-2.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) < 1 or len(X) != len(y):
        raise OptimizationError(f"need matching, non-empty X and y (got {len(X)} and {len(y)})")
    ell = median_lengthscale(X, lengthscale_floor) if lengthscale is None else float(lengthscale)
    sf2 = float(np.var(y)) if np.var(y) > 0 else 1.0
    mean = float(np.mean(y))
    K = rbf(X, X, ell, sf2)
    while True:
        try:
            L = cholesky(K + noise * np.eye(len(X)), lower=True)
            break
        except np.linalg.LinAlgError:
            noise *= 10
            if noise > MAX_NOISE:
                raise OptimizationError("covariance not positive definite even with jitter 1e-2") from None
    alpha = cho_solve((L, True), y - mean)
    return GPModel(X, y, ell, sf2, noise, mean, L, alpha)


def _refine(model, x, lo, hi, kappa, step0=0.05, min_step=1e-6, max_iter=500):
    """Best-improvement coordinate descent on the LCB from ``x``.

    Each candidate move changes one coordinate, so squared distances to the
    training points are updated in place rather than recomputed.
    """
    X, ell2, sf2 = model.X, model.lengthscale**2, model.signal_var
    kinv = model.kinv
    d = x.size
    diff = x[None, :] - X  # (n, d)
    d2 = np.sum(diff**2, axis=1)
    val = model.lcb(x, kappa)[0]
    step = step0 * (hi - lo)
    idx = np.arange(d)
    for _ in range(max_iter):
        if np.all(step < min_step):
            break
        up = np.minimum(x + step, hi) - x
        down = np.maximum(x - step, lo) - x
        delta = np.concatenate([up, down])  # (2d,)
        coord = np.concatenate([idx, idx])
        # |x + delta e_j - X_i|^2 = d2_i + 2 delta (x_j - X_ij) + delta^2
        m_d2 = d2[None, :] + 2 * delta[:, None] * diff[:, coord].T + delta[:, None] ** 2
        k = sf2 * np.exp(-0.5 * np.maximum(m_d2, 0.0) / ell2)
        mu = model.mean + k @ model.alpha
        var = np.maximum(sf2 - np.einsum("ij,ij->i", k @ kinv, k), 0.0)
        vals = mu - kappa * np.sqrt(var)
        j = int(np.argmin(vals))
        if vals[j] < val and delta[j] != 0.0:
            c = coord[j]
            x = x.copy()
            x[c] += delta[j]
            d2 = m_d2[j]
            diff[:, c] += delta[j]
            val = vals[j]
        else:
            step = step / 2
    return x, model.lcb(x, kappa)[0]


def propose(
    model: GPModel,
    bounds,
    rng: np.random.Generator,
    kappa: float = KAPPA,
    n_candidates: int = N_CANDIDATES,
    n_refine: int = N_REFINE,
) -> np.ndarray:
    """Approximate argmin of ``mu - kappa * sigma`` inside ``bounds = (lo, hi)``."""
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    cand = lo + (hi - lo) * rng.random((n_candidates, lo.size))
    vals = model.lcb(cand, kappa)
    best_x, best_v = None, np.inf
    for i in np.argsort(vals, kind="stable")[:n_refine]:
        x, v = _refine(model, cand[i], lo, hi, kappa)
        if v < best_v:
            best_x, best_v = x, v
    return np.clip(best_x, lo, hi)


@dataclass
class BOState:
    X: list = field(default_factory=list)
    y: list = field(default_factory=list)
    n_total: int = N_TOTAL
    n_init: int = 0
    kappa: float = KAPPA
    seed: int = 0
    trace: list = field(default_factory=list)

    @property
    def iteration(self) -> int:
        return max(0, len(self.y) - self.n_init)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.y))  # first occurrence on ties

    @property
    def incumbent(self) -> tuple[np.ndarray, float]:
        i = self.best_index
        return np.asarray(self.X[i]), float(self.y[i])

    def incumbent_trace(self) -> list[float]:
        return [r["incumbent"] for r in self.trace]


class ObjectiveFailed(OptimizationError):
    """Objective raised; ``state`` holds every evaluation completed so far."""

    def __init__(self, message, state: BOState):
        super().__init__(message)
        self.state = state


def _record(state: BOState, x, y, trace_path):
    state.X.append(np.asarray(x, dtype=float))
    state.y.append(float(y))
    rec = {"iter": len(state.y) - 1, "x": [float(v) for v in x], "y": float(y), "incumbent": min(state.y)}
    state.trace.append(rec)
    if trace_path is not None:
        with open(trace_path, "a") as fh:
            fh.write(json.dumps(rec) + "\n")


def run(
    objective: Callable[[np.ndarray], float],
    x_init,
    n_total: int = N_TOTAL,
    *,
    bounds=None,
    kappa: float = KAPPA,
    seed: int = 0,
    n_perturb: int = N_PERTURB,
    perturb_sigma: float = PERTURB_SIGMA,
    lengthscale_floor: float = 0.0,
    trace_path=None,
) -> BOState:
    """Minimize ``objective`` starting from ``x_init``.

    The initial design is ``x_init`` plus ``n_perturb`` Gaussian perturbations
    of it (clipped to the box); then ``n_total`` rounds of fit, propose,
    evaluate. Total evaluations: ``1 + n_perturb + n_total``.

    Args:
        objective: maps a point of the box to a scalar to minimize.
        x_init: starting point, already in the box.
        n_total: number of BO iterations after the initial design.
        bounds: ``(lo, hi)``; defaults to the unit box.
        kappa: LCB exploration weight.
        seed: seeds the perturbation and candidate streams.
        trace_path: JSONL file; one record appended per evaluation.

    Raises:
        ObjectiveFailed: if the objective raises; carries the partial state.
    """
    if n_total < 1:
        raise OptimizationError("n_total must be >= 1")
    x0 = np.asarray(x_init, dtype=float).ravel()
    lo, hi = (np.zeros_like(x0), np.ones_like(x0)) if bounds is None else (np.asarray(b, float) for b in bounds)
    if np.any(x0 < lo - 1e-12) or np.any(x0 > hi + 1e-12):
        raise OptimizationError("x_init outside bounds")
    x0 = np.clip(x0, lo, hi)
    if trace_path is not None:
        Path(trace_path).write_text("")
    init_rng = stream(seed, "bo-init")
    prop_rng = stream(seed, "bo-propose")
    init = [x0] + [np.clip(x0 + perturb_sigma * init_rng.standard_normal(x0.size), lo, hi) for _ in range(n_perturb)]
    state = BOState(n_total=n_total, n_init=len(init), kappa=kappa, seed=seed)

    def evaluate(x):
        try:
            y = float(objective(x))
        except Exception as exc:
            raise ObjectiveFailed(f"objective failed at evaluation {len(state.y)}: {exc}", state) from exc
        if not np.isfinite(y):
            raise ObjectiveFailed(f"objective returned {y} at evaluation {len(state.y)}", state)
        _record(state, x, y, trace_path)

    for x in init:
        evaluate(x)
    for _ in range(n_total):
        model = fit(np.array(state.X), np.array(state.y), lengthscale_floor=lengthscale_floor)
        evaluate(propose(model, (lo, hi), prop_rng, kappa))
        log.debug("bo iter %d y=%.4f best=%.4f", state.iteration, state.y[-1], min(state.y))
    return state
