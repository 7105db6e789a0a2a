"""Calibration weights: entropy balancing (MAIC), model-assisted (MA),
MAIC+MA and an IPW comparator.

Entropy-balancing weights take the exponential-tilting form
``w_i = exp(-beta' Z_i) / sum_j exp(-beta' Z_j)`` and ``beta`` minimises the
convex dual

    f(beta) = log sum_i exp(-beta' Z_i) + beta' target

whose gradient ``target - sum_i w_i Z_i`` vanishes exactly at balance.
Columns are centred and scaled before solving; ``beta`` is reported on the
original scale.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit, logit

from .cohort import Cohort
from .errors import ConvergenceError, DesignError, FeasibilityError, WeightOverflowError
from .pseudo import PseudoObservations
from .survival import WeightSet

NEWTON_MAX_K = 20
BETA_NORM_LIMIT = 1e6
STALL_LIMIT = 25
ETA_LIMIT = 35.0


class CalibrationWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class EntropyDualProblem:
    design: np.ndarray
    target: np.ndarray
    tol: float = 1e-8
    max_iter: int = 300
    names: tuple = ()

    def __post_init__(self):
        Z = np.asarray(self.design, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        target = np.atleast_1d(np.asarray(self.target, dtype=float))
        if Z.shape[1] < 1 or target.shape != (Z.shape[1],):
            raise DesignError(f"design has {Z.shape[1]} columns but target has {target.size}")
        if not np.all(np.isfinite(target)) or not np.all(np.isfinite(Z)):
            raise DesignError("design and target must be finite")
        if Z.shape[0] <= Z.shape[1]:
            warnings.warn(f"only {Z.shape[0]} rows for {Z.shape[1]} balancing constraints",
                          CalibrationWarning, stacklevel=3)
        names = tuple(self.names) or tuple(f"z{k + 1}" for k in range(Z.shape[1]))
        object.__setattr__(self, "design", Z)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "names", names)

    @property
    def k(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True, eq=False)
class OutcomeModelFit:
    """Logistic-link quasi-score fit; ``coefficients[0]`` is the intercept."""

    coefficients: np.ndarray
    converged: bool
    iterations: int

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[1:]

    def predict(self, covariates) -> np.ndarray:
        X = np.asarray(covariates, dtype=float)
        if len(self.coefficients) == 1:
            return np.full(X.shape[0], expit(self.intercept))
        return expit(self.intercept + X @ self.slopes)


def _tilt(Zs, beta):
    eta = -Zs @ beta
    top = eta.max()
    e = np.exp(eta - top)
    s = e.sum()
    return e / s, top + np.log(s)


def _hull_slack(Z, target):
    """Largest s with w_i >= s, sum w = 1, Z'w = target (LP); <= 0 means infeasible."""
    n, k = Z.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_eq = np.zeros((k + 1, n + 1))
    A_eq[:k, :n] = Z.T
    A_eq[k, :n] = 1.0
    b_eq = np.concatenate((target, [1.0]))
    A_ub = np.hstack((-np.eye(n), np.ones((n, 1))))
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * n + [(None, None)], method="highs")
    if res.status != 0:
        return -np.inf
    return -res.fun


def _flat_but_better(f_c, f, g_c, g):
    # near the optimum the objective stops changing in floating point;
    # accept a step that does not raise f and shrinks the gradient
    return f_c - f <= 4 * np.finfo(float).eps * max(1.0, abs(f)) and np.abs(g_c).max() < np.abs(g).max()


def _newton(Zs, ts, beta, max_iter, done):
    f_prev = None
    it = 0
    for it in range(1, max_iter + 1):
        w, lse = _tilt(Zs, beta)
        f = lse + beta @ ts
        if f_prev is not None and f > f_prev + 1e-12 * max(1.0, abs(f_prev)):
            raise AssertionError("dual objective increased across an accepted step")
        f_prev = f
        m = w @ Zs
        grad = ts - m
        if done(w):
            return beta, w, it, True
        H = (Zs * w[:, None]).T @ Zs - np.outer(m, m)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        slope = grad @ step
        if not np.isfinite(slope) or slope <= 0:
            step, slope = grad, grad @ grad
        t = 1.0
        while True:
            cand = beta - t * step
            w_c, lse_c = _tilt(Zs, cand)
            f_c = lse_c + cand @ ts
            if f_c <= f - 1e-4 * t * slope or _flat_but_better(f_c, f, ts - w_c @ Zs, grad):
                break
            t *= 0.5
            if t < 1e-14:
                return beta, w, it, False
        beta = cand
        if np.linalg.norm(beta) > BETA_NORM_LIMIT:
            return beta, w, it, False
    w, _ = _tilt(Zs, beta)
    return beta, w, it, done(w)


def _bfgs(Zs, ts, beta, max_iter, done):
    k = len(beta)
    Hinv = np.eye(k)
    w, lse = _tilt(Zs, beta)
    f = lse + beta @ ts
    grad = ts - w @ Zs
    stall = 0
    best = np.abs(grad).max()
    it = 0
    for it in range(1, max_iter + 1):
        if done(w):
            return beta, w, it, True
        d = -(Hinv @ grad)
        slope = grad @ d
        if slope >= 0:
            Hinv = np.eye(k)
            d, slope = -grad, -(grad @ grad)
        t = 1.0
        while True:
            cand = beta + t * d
            w_c, lse_c = _tilt(Zs, cand)
            f_c = lse_c + cand @ ts
            if f_c <= f + 1e-4 * t * slope or _flat_but_better(f_c, f, ts - w_c @ Zs, grad):
                break
            t *= 0.5
            if t < 1e-14:
                return beta, w, it, False
        g_c = ts - w_c @ Zs
        s, y = cand - beta, g_c - grad
        sy = s @ y
        if sy > 1e-16:
            rho = 1.0 / sy
            V = np.eye(k) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        beta, w, f, grad = cand, w_c, f_c, g_c
        cur = np.abs(grad).max()
        stall = stall + 1 if cur >= best else 0
        best = min(best, cur)
        if stall >= STALL_LIMIT or np.linalg.norm(beta) > BETA_NORM_LIMIT:
            return beta, w, it, False
    return beta, w, it, done(w)


def solve_entropy_weights(problem: EntropyDualProblem, method: str = "maic") -> WeightSet:
    """Entropy-balancing weights meeting ``sum_i w_i Z_i = target``.

    Newton's method is used for up to 20 constraints, BFGS beyond that (and
    as a fallback when Newton stalls). Constant design columns are dropped
    with a :class:`CalibrationWarning`.

    Raises
    ------
    FeasibilityError
        The target is not in the interior of the convex hull of the rows.
    ConvergenceError
        Feasible, but balance to ``tol`` was not reached in ``max_iter``.
    """
    Z, target, tol = problem.design, problem.target, problem.tol
    n, k = Z.shape
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    scale = np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
    const = (hi - lo) <= 1e-12 * scale
    for j in range(k):
        if const[j]:
            if abs(target[j] - lo[j]) > 1e-12 * scale[j]:
                raise FeasibilityError(
                    f"constraint {problem.names[j]!r}: column is constant at {lo[j]:.6g} "
                    f"but target is {target[j]:.6g}")
        elif not lo[j] < target[j] < hi[j]:
            raise FeasibilityError(
                f"constraint {problem.names[j]!r}: target {target[j]:.6g} outside the "
                f"open range ({lo[j]:.6g}, {hi[j]:.6g}) of the design column")
    if np.any(const):
        dropped = [problem.names[j] for j in np.flatnonzero(const)]
        warnings.warn(f"dropping constant balancing column(s): {', '.join(dropped)}",
                      CalibrationWarning, stacklevel=2)
    keep = ~const
    beta = np.zeros(k)
    if not np.any(keep):
        w = np.full(n, 1.0 / n)
        return WeightSet.from_raw(w, method, beta, w @ Z - target, 0)

    Zk = Z[:, keep]
    mu, sd = Zk.mean(axis=0), Zk.std(axis=0)
    Zs = (Zk - mu) / sd
    ts = (target[keep] - mu) / sd

    def done(w):
        return np.abs(w @ Z - target).max() < tol

    b0 = np.zeros(Zs.shape[1])
    if Zs.shape[1] <= NEWTON_MAX_K:
        bs, w, iters, ok = _newton(Zs, ts, b0, problem.max_iter, done)
        if not ok and np.linalg.norm(bs) <= BETA_NORM_LIMIT:
            bs2, w2, it2, ok = _bfgs(Zs, ts, bs, problem.max_iter, done)
            bs, w, iters = bs2, w2, iters + it2
    else:
        bs, w, iters, ok = _bfgs(Zs, ts, b0, problem.max_iter, done)

    residuals = w @ Z - target
    if not ok:
        if np.linalg.norm(bs) > BETA_NORM_LIMIT or _hull_slack(Zk, target[keep]) <= 1e-12 / n:
            worst = problem.names[int(np.flatnonzero(keep)[np.argmax(np.abs(residuals[keep]))])]
            raise FeasibilityError(
                f"target is outside the convex hull of the design (largest imbalance in "
                f"constraint {worst!r}: {np.abs(residuals).max():.3g})")
        raise ConvergenceError(
            f"entropy balancing did not reach tol={tol:g} in {iters} iterations "
            f"(max residual {np.abs(residuals).max():.3g})", residuals)
    if w.min() < 1e-10 / n and _hull_slack(Zk, target[keep]) <= 1e-12 / n:
        raise FeasibilityError("target lies on the boundary of the convex hull of the design; "
                               "balancing needs zero weight on some subjects")
    beta[keep] = bs / sd
    return WeightSet.from_raw(w, method, beta, residuals, iters)


def maic_weights(historical: Cohort, target, tol=1e-8, max_iter=300) -> WeightSet:
    """Balance raw covariate means to ``target`` (a CovariateTarget or vector)."""
    means = getattr(target, "means", target)
    problem = EntropyDualProblem(historical.covariates, means, tol, max_iter,
                                 historical.covariate_names)
    return solve_entropy_weights(problem, "maic")


def _logistic_newton(D, y, w, tol=1e-10, max_iter=100, max_halvings=30, start=None):
    """Solve sum_i w_i (y_i - expit(D_i'g)) D_i = 0 by damped Newton."""
    if np.linalg.matrix_rank(D) < D.shape[1]:
        raise DesignError(f"design matrix is rank deficient (rank "
                          f"{np.linalg.matrix_rank(D)} < {D.shape[1]} columns)")
    g = np.zeros(D.shape[1])
    if start is not None:
        g[0] = start

    def quasi_loglik(eta):
        return np.sum(w * (y * eta - np.logaddexp(0.0, eta)))

    eta = D @ g
    q = quasi_loglik(eta)
    last_step = None
    for it in range(1, max_iter + 1):
        mu = expit(eta)
        score = D.T @ (w * (y - mu))
        # a vanishing score alone also happens while drifting to infinity
        # (separation, boundary mean), so require a settled step too
        if np.abs(score).max() < tol and (last_step is None or np.abs(last_step).max() < 1e-6):
            return g, it, True
        info = (D * (w * mu * (1 - mu))[:, None]).T @ D
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular information matrix in logistic fit", score) from None
        for _ in range(max_halvings + 1):
            cand = g + step
            eta_c = D @ cand
            q_c = quasi_loglik(eta_c)
            if np.isfinite(q_c) and q_c >= q - 1e-15 * abs(q):
                break
            step = step / 2
        else:
            raise ConvergenceError("logistic fit: step-halving budget exhausted", score)
        last_step = cand - g
        g, eta, q = cand, eta_c, q_c
        if np.abs(eta).max() > ETA_LIMIT:
            raise ConvergenceError(
                "logistic fit diverged: fitted probabilities numerically 0 or 1 "
                "(separation or boundary mean)", score)
    raise ConvergenceError(f"logistic fit did not converge in {max_iter} iterations", score)


def fit_pseudo_logistic(pos: PseudoObservations | np.ndarray, cohort: Cohort | None = None,
                        weights: WeightSet | None = None, intercept_only: bool = False,
                        covariates=None) -> OutcomeModelFit:
    """Pseudo-logistic regression of pseudo-observations on covariates.

    Solves ``sum_i w_i (Y_i - expit(g0 + X_i'g)) (1, X_i) = 0``. Responses
    outside [0, 1] are allowed (quasi-likelihood). Uniform weights when
    ``weights`` is None.
    """
    y = np.asarray(getattr(pos, "values", pos), dtype=float)
    n = len(y)
    if intercept_only:
        D = np.ones((n, 1))
    else:
        X = covariates if covariates is not None else cohort.covariates
        D = np.column_stack((np.ones(n), np.asarray(X, dtype=float)))
    if D.shape[0] != n:
        raise DesignError("pseudo-observations and covariates differ in length")
    if not np.all(np.isfinite(y)):
        raise DesignError("pseudo-observations must be finite")
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights.weights)
    ybar = float(w @ y)
    start = logit(min(max(ybar, 0.01), 0.99))
    g, it, ok = _logistic_newton(D, y, w, start=start)
    return OutcomeModelFit(g, ok, it)


def _trial_covariates(trial):
    return trial.covariates if isinstance(trial, Cohort) else np.asarray(trial, dtype=float)


def ma_balance_design(fit: OutcomeModelFit, historical, trial, tol=1e-8, max_iter=300) -> EntropyDualProblem:
    """Balance fitted cure probabilities: historical predictions against the trial mean."""
    if not fit.converged:
        raise ConvergenceError("outcome model fit did not converge")
    Xh = _trial_covariates(historical)
    pred_h = fit.predict(Xh)
    target = fit.predict(_trial_covariates(trial)).mean()
    return EntropyDualProblem(pred_h[:, None], np.array([target]), tol, max_iter, ("prediction",))


def maic_ma_design(fit: OutcomeModelFit, historical, trial, tol=1e-8, max_iter=300) -> EntropyDualProblem:
    """Balance covariate means and the fitted-prediction mean jointly."""
    if not fit.converged:
        raise ConvergenceError("outcome model fit did not converge")
    Xh, Xt = _trial_covariates(historical), _trial_covariates(trial)
    pred_h = fit.predict(Xh)
    Z = np.column_stack((Xh, pred_h))
    target = np.concatenate((Xt.mean(axis=0), [fit.predict(Xt).mean()]))
    names = tuple(getattr(historical, "covariate_names", ())) or tuple(
        f"x{k + 1}" for k in range(Xh.shape[1]))
    sd = Z.std(axis=0)
    if np.any(sd == 0):
        warnings.warn("prediction column is constant; MAIC+MA reduces to MAIC",
                      CalibrationWarning, stacklevel=2)
    else:
        cond = np.linalg.cond((Z - Z.mean(axis=0)) / sd)
        if cond > 1e6:
            warnings.warn(f"prediction column nearly collinear with covariates "
                          f"(condition number {cond:.3g})", CalibrationWarning, stacklevel=2)
    return EntropyDualProblem(Z, target, tol, max_iter, (*names, "prediction"))


def odds_weights(eta) -> np.ndarray:
    """Normalised propensity odds ``exp(eta)``; raises on overflow."""
    eta = np.asarray(eta, dtype=float)
    with np.errstate(over="ignore"):
        odds = np.exp(eta)
    p = expit(eta)
    if not np.all(np.isfinite(odds)) or np.any(p >= 1.0):
        raise WeightOverflowError("propensity numerically equal to 1; IPW odds overflow")
    return odds / odds.sum()


def ipw_weights(historical: Cohort, trial) -> WeightSet:
    """ATT-style odds weights from a logistic model for trial membership.

    Historical subject ``i`` gets weight ``p_i / (1 - p_i)`` (normalised),
    where ``p_i`` is its fitted probability of belonging to the trial.
    """
    Xh, Xt = historical.covariates, _trial_covariates(trial)
    X = np.vstack((Xh, Xt))
    y = np.concatenate((np.zeros(len(Xh)), np.ones(len(Xt))))
    D = np.column_stack((np.ones(len(y)), X))
    w = np.full(len(y), 1.0 / len(y))
    g, it, _ = _logistic_newton(D, y, w, start=logit(len(Xt) / len(y)))
    eta_h = g[0] + Xh @ g[1:]
    wts = odds_weights(eta_h)
    residuals = wts @ Xh - Xt.mean(axis=0)
    return WeightSet.from_raw(wts, "ipw", g, residuals, it)


def write_weights(weights: WeightSet, csv_path, json_path=None) -> None:
    """Weights CSV (subject, weight) plus an optional JSON diagnostics blob."""
    lines = ["subject,weight"] + [f"{i},{float(v)!r}" for i, v in enumerate(weights.weights)]
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if json_path is not None:
        Path(json_path).write_text(json.dumps(weight_diagnostics(weights), indent=2), encoding="utf-8")


def weight_diagnostics(weights: WeightSet) -> dict:
    return {
        "method": weights.method,
        "n": weights.n,
        "ess": weights.ess,
        "iterations": weights.iterations,
        "dual_coefficients": [float(v) for v in weights.dual_coefficients],
        "balance_residuals": [float(v) for v in weights.balance_residuals],
        "max_abs_residual": float(np.abs(weights.balance_residuals).max())
        if weights.balance_residuals.size else 0.0,
    }
