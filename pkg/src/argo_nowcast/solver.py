"""Differentially penalized L1 regression by cyclic coordinate descent.

The objective for coefficients ``b`` and intercept ``mu`` is::

    sum_t (y_t - mu - x_t @ b)**2 + lam * sum_j m_j * |b_j|

Predictors with a positive multiplier ``m_j`` are standardized within the
training window before fitting (the penalty acts on the standardized
coefficient); unpenalized predictors are only centered. Coefficients are
reported on the original predictor scale.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

DEFAULT_TOL = 1e-7
DEFAULT_MAX_SWEEPS = 10_000
KKT_TOL = 1e-5
_POLISH_EVERY = 5


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    """Coordinate descent hit the sweep limit; ``result`` holds the last iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PenaltySpec:
    """Per-coefficient L1 multipliers; the effective penalty is ``lam * m``."""

    lag_multipliers: tuple[float, ...] = ()
    query_multipliers: tuple[float, ...] = ()

    def __post_init__(self):
        lag = tuple(float(v) for v in self.lag_multipliers)
        qry = tuple(float(v) for v in self.query_multipliers)
        for v in lag + qry:
            if not v >= 0:
                raise ValueError(f"penalty multipliers must be nonnegative, got {v}")
        object.__setattr__(self, "lag_multipliers", lag)
        object.__setattr__(self, "query_multipliers", qry)

    @classmethod
    def uniform(cls, n_lags: int, n_queries: int, value: float = 1.0) -> "PenaltySpec":
        return cls((value,) * n_lags, (value,) * n_queries)

    @property
    def n_lags(self) -> int:
        return len(self.lag_multipliers)

    @property
    def n_queries(self) -> int:
        return len(self.query_multipliers)

    @property
    def multipliers(self) -> np.ndarray:
        return np.array(self.lag_multipliers + self.query_multipliers, dtype=float)

    def __len__(self) -> int:
        return self.n_lags + self.n_queries


@dataclass(frozen=True, eq=False)
class FitResult:
    """One penalized fit; ``alpha`` are lag and ``beta`` query coefficients (original scale)."""

    intercept: float
    alpha: np.ndarray
    beta: np.ndarray
    lam: float
    objective: float
    window: tuple | None = None
    n_sweeps: int = 0
    converged: bool = True
    history: np.ndarray | None = field(default=None, repr=False)

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta])

    def predict(self, design) -> np.ndarray:
        design = np.atleast_2d(np.asarray(design, dtype=float))
        return self.intercept + design @ self.coef

    def with_window(self, first, last) -> "FitResult":
        return dataclasses.replace(self, window=(first, last))


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

def soft_threshold(z, gamma):
    """``sign(z) * max(|z| - gamma, 0)``."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("threshold must be nonnegative")
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


@njit(cache=True)
def _cd_sweeps(G, c, w, b, g, tol, max_sweeps, yy, hist):
    # g holds c - G @ b and is kept in sync with b.
    p = b.shape[0]
    for sweep in range(max_sweeps):
        dmax = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = b[j]
            z = g[j] + gjj * old
            thr = 0.5 * w[j]
            if z > thr:
                new = (z - thr) / gjj
            elif z < -thr:
                new = (z + thr) / gjj
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                b[j] = new
                for k in range(p):
                    g[k] -= G[k, j] * d
                if abs(d) > dmax:
                    dmax = abs(d)
        if sweep < hist.shape[0]:
            obj = yy
            for k in range(p):
                obj -= (c[k] + g[k]) * b[k] - w[k] * abs(b[k])
            hist[sweep] = obj
        if dmax < tol:
            return sweep + 1, True
    return max_sweeps, False


@njit(cache=True)
def _standardize_kernel(X, m):
    n, p = X.shape
    mean = np.zeros(p)
    scale = np.ones(p)
    live = np.ones(p, dtype=np.bool_)
    Z = np.empty((n, p))
    for j in range(p):
        mu = 0.0
        big = 1.0
        for i in range(n):
            mu += X[i, j]
            if abs(X[i, j]) > big:
                big = abs(X[i, j])
        mu /= n
        var = 0.0
        for i in range(n):
            var += (X[i, j] - mu) ** 2
        sd = np.sqrt(var / n)
        mean[j] = mu
        if sd <= 1e-12 * big:
            live[j] = False
            for i in range(n):
                Z[i, j] = 0.0
            continue
        if m[j] > 0.0:
            scale[j] = sd
        for i in range(n):
            Z[i, j] = (X[i, j] - mu) / scale[j]
    return Z, mean, scale, live


@njit(cache=True)
def _face_solve(A, rhs):
    # Cholesky solve of the support system; flags (numerically) singular faces.
    k = A.shape[0]
    dmax = 0.0
    for a in range(k):
        if A[a, a] > dmax:
            dmax = A[a, a]
    try:
        L = np.linalg.cholesky(A)
    except Exception:
        return np.zeros(k), True
    for a in range(k):
        if L[a, a] ** 2 <= 1e-12 * dmax:
            return np.zeros(k), True
    z = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, z), False


@njit(cache=True)
def _polish_kernel(G, c, w, b, g, live):
    # Feature-sign refinement of a coordinate-descent iterate. On a regular
    # support, minimize the objective with signs fixed; on a sign flip step
    # only to the first zero crossing and drop that coordinate. On a singular
    # support, move along a null direction of the design (the fit is
    # unchanged, the penalty decreases) until a coordinate reaches zero. Once
    # sign-consistent, activate the worst optimality violator. Returns True
    # with b, g at an exact optimum, or False with b, g never worse than given.
    p = b.shape[0]
    cmax = 0.0
    for j in range(p):
        if abs(c[j]) > cmax:
            cmax = abs(c[j])
    ktol = 1e-9 * (1.0 + cmax)
    theta = np.sign(b)
    active = np.zeros(p, dtype=np.bool_)
    for j in range(p):
        active[j] = live[j] and (w[j] == 0.0 or b[j] != 0.0)
    idx = np.empty(p, dtype=np.int64)
    entering = -1
    for _ in range(4 * p + 4):
        k = 0
        for j in range(p):
            if active[j]:
                idx[k] = j
                k += 1
        if k == 0:
            new = np.zeros(p)
        else:
            A = np.empty((k, k))
            rhs = np.empty(k)
            for a in range(k):
                ja = idx[a]
                rhs[a] = c[ja] - 0.5 * w[ja] * theta[ja]
                for q in range(k):
                    A[a, q] = G[ja, idx[q]]
            sol, singular = _face_solve(A, rhs)
            if singular:
                v = np.linalg.svd(A)[2][k - 1]
                slope = 0.0
                for a in range(k):
                    slope += w[idx[a]] * theta[idx[a]] * v[a]
                flip = False
                if entering >= 0:
                    for a in range(k):
                        if idx[a] == entering and theta[entering] * v[a] < 0.0:
                            flip = True
                elif slope > 0.0:
                    flip = True
                if flip:
                    v = -v
                step = np.inf
                hit = -1
                for a in range(k):
                    ja = idx[a]
                    if w[ja] > 0.0 and ja != entering and theta[ja] * v[a] < 0.0:
                        t = abs(b[ja]) / abs(v[a])
                        if t < step:
                            step = t
                            hit = ja
                if hit < 0:
                    return False
                for a in range(k):
                    b[idx[a]] += step * v[a]
                b[hit] = 0.0
                active[hit] = False
                theta[hit] = 0.0
                entering = -1
                gnew = c - G @ b
                for j in range(p):
                    g[j] = gnew[j]
                continue
            new = np.zeros(p)
            step = 1.0
            hit = -1
            for a in range(k):
                ja = idx[a]
                new[ja] = sol[a]
                if w[ja] > 0.0 and sol[a] * theta[ja] < 0.0:
                    denom = b[ja] - sol[a]
                    t = b[ja] / denom if denom != 0.0 else 0.0
                    if t < step:
                        step = t
                        hit = ja
            if hit >= 0:
                if step <= 0.0:
                    return False
                for a in range(k):
                    ja = idx[a]
                    b[ja] = b[ja] + step * (new[ja] - b[ja])
                b[hit] = 0.0
                active[hit] = False
                theta[hit] = 0.0
                entering = -1
                gnew = c - G @ b
                for j in range(p):
                    g[j] = gnew[j]
                continue
        gnew = c - G @ new
        for a in range(k):
            ja = idx[a]
            if abs(gnew[ja] - 0.5 * w[ja] * theta[ja]) > ktol:
                return False
        for j in range(p):
            b[j] = new[j]
            g[j] = gnew[j]
        worst = -1
        viol = ktol
        for j in range(p):
            if live[j] and not active[j]:
                d = abs(g[j]) - 0.5 * w[j]
                if d > viol:
                    viol = d
                    worst = j
        if worst < 0:
            return True
        active[worst] = True
        theta[worst] = np.sign(g[worst])
        entering = worst
    return False


@njit(cache=True)
def _solve_kernel(G, c, w, b, g, live, tol, max_sweeps, every):
    if _polish_kernel(G, c, w, b, g, live):
        return 0, True
    hist = np.empty(0)
    sweeps = 0
    while sweeps < max_sweeps:
        chunk = min(every, max_sweeps - sweeps)
        done, conv = _cd_sweeps(G, c, w, b, g, tol, chunk, 0.0, hist)
        sweeps += done
        if _polish_kernel(G, c, w, b, g, live) or conv:
            return sweeps, True
    return sweeps, False


@njit(cache=True)
def _path_dev_ratio(X, y, m, grid, tol, max_sweeps):
    # fraction of centered sum of squares explained along a descending grid
    n, p = X.shape
    yc = y - y.mean()
    yy = yc @ yc
    Z, mean, scale, live = _standardize_kernel(X, m)
    Zt = np.ascontiguousarray(Z.T)
    G = Zt @ Z
    c = Zt @ yc
    b = np.zeros(p)
    g = c.copy()
    out = np.zeros(grid.shape[0])
    active = np.zeros(grid.shape[0], dtype=np.int64)
    for l in range(grid.shape[0]):
        _solve_kernel(G, c, grid[l] * m, b, g, live, tol, max_sweeps, 5)
        fit = 0.0
        for j in range(p):
            fit += (c[j] + g[j]) * b[j]
            if b[j] != 0.0:
                active[l] += 1
        out[l] = fit / yy if yy > 0 else 1.0
    return out, active


@njit(cache=True)
def _loo_path_errors(X, y, m, grid, tol, max_sweeps):
    n, p = X.shape
    L = grid.shape[0]
    err = np.zeros((n, L))
    Xt = np.empty((n - 1, p))
    yt = np.empty(n - 1)
    for i in range(n):
        r = 0
        for k in range(n):
            if k != i:
                Xt[r, :] = X[k, :]
                yt[r] = y[k]
                r += 1
        ybar = yt.mean()
        yc = yt - ybar
        Z, mean, scale, live = _standardize_kernel(Xt, m)
        Zt = np.ascontiguousarray(Z.T)
        G = Zt @ Z
        cvec = Zt @ yc
        zi = np.empty(p)
        for j in range(p):
            zi[j] = (X[i, j] - mean[j]) / scale[j] if live[j] else 0.0
        b = np.zeros(p)
        g = cvec.copy()
        for l in range(L):
            w = grid[l] * m
            _solve_kernel(G, cvec, w, b, g, live, tol, max_sweeps, 5)
            pred = ybar
            for j in range(p):
                pred += zi[j] * b[j]
            err[i, l] = (y[i] - pred) ** 2
    return err


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------

def _validate(design, target, spec: PenaltySpec | None = None, min_rows: int = 3):
    X = np.asarray(design, dtype=float)
    y = np.asarray(target, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"design must be 2-d, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError(f"target length {y.shape} does not match {X.shape[0]} design rows")
    if X.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} rows, got {X.shape[0]}")
    if spec is not None and X.shape[1] != len(spec):
        raise ValueError(f"design has {X.shape[1]} columns but penalty covers {len(spec)}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("design and target must be finite")
    return np.ascontiguousarray(X), np.ascontiguousarray(y)


def standardize(design, multipliers):
    """Center all columns, scale penalized ones to unit (population) variance.

    Returns ``(Z, mean, scale, live)``; constant columns are zeroed and
    marked dead in ``live``.
    """
    X = np.ascontiguousarray(design, dtype=float)
    return _standardize_kernel(X, np.asarray(multipliers, dtype=float))


def _objective(X, y, intercept, coef, w_std):
    r = y - intercept - X @ coef
    return float(r @ r + np.sum(w_std))


def _refine_support(Z, yc, w, b):
    # Re-solve the sign-fixed support system by QR on the design rather than
    # through the Gram matrix, which squares its condition number. Kept only
    # if signs survive and the objective does not rise.
    act = np.flatnonzero(b)
    if act.size == 0 or act.size > Z.shape[0]:
        return b
    Q, R = np.linalg.qr(Z[:, act])
    d = np.abs(np.diag(R))
    if d.min() <= 1e-12 * d.max():
        return b
    half = 0.5 * w[act] * np.sign(b[act])
    sol = np.linalg.solve(R, Q.T @ yc - np.linalg.solve(R.T, half))
    if np.any(np.sign(sol) != np.sign(b[act])):
        return b
    out = b.copy()
    out[act] = sol

    def obj(v):
        r = yc - Z @ v
        return r @ r + np.sum(w * np.abs(v))

    return out if obj(out) <= obj(b) else b


def fit_penalized(design, target, spec: PenaltySpec, lam: float, *, tol: float = DEFAULT_TOL,
                  max_sweeps: int = DEFAULT_MAX_SWEEPS, warm_start=None,
                  record_history: bool = False) -> FitResult:
    """Minimize the differentially penalized least-squares objective at ``lam``.

    Parameters
    ----------
    design : array of shape (n, n_lags + n_queries)
    target : array of shape (n,)
    spec : PenaltySpec
        Multipliers; lag columns come first.
    lam : float
        Scalar penalty; coefficient j is penalized by ``lam * m_j``.
    warm_start : array, optional
        Starting coefficients on the standardized scale.
    record_history : bool
        Keep the objective value after every sweep in ``FitResult.history``.

    Raises
    ------
    ConvergenceError
        When ``max_sweeps`` is reached; the error carries the last iterate.
    """
    if not lam >= 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    X, y = _validate(design, target, spec)
    m = spec.multipliers
    n, p = X.shape
    Z, mean, scale, live = standardize(X, m)
    ybar = y.mean()
    yc = y - ybar
    if np.all(yc == 0):
        live = np.zeros(p, dtype=bool)
    G = np.ascontiguousarray(Z.T @ Z)
    c = Z.T @ yc
    w = lam * m
    yy = float(yc @ yc)

    b = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    b[~live] = 0.0
    g = c - G @ b
    hist_chunks = []
    sweeps = 0
    converged = False
    polished = _polish_kernel(G, c, w, b, g, live)
    while not polished and sweeps < max_sweeps:
        chunk = min(_POLISH_EVERY, max_sweeps - sweeps)
        hist = np.empty(chunk if record_history else 0)
        done, cd_conv = _cd_sweeps(G, c, w, b, g, tol, chunk, yy, hist)
        hist_chunks.append(hist[:done])
        sweeps += done
        polished = _polish_kernel(G, c, w, b, g, live)
        if cd_conv:
            converged = True
            break
    if polished:
        converged = True
        if record_history:
            r = yc - Z @ b
            hist_chunks.append(np.array([r @ r + np.sum(w * np.abs(b))]))

    if polished:
        b = _refine_support(Z, yc, w, b)

    coef = np.where(live, b / scale, 0.0)
    intercept = float(ybar - mean @ coef)
    result = FitResult(
        intercept=intercept,
        alpha=coef[: spec.n_lags].copy(),
        beta=coef[spec.n_lags:].copy(),
        lam=float(lam),
        objective=_objective(X, y, intercept, coef, w * np.abs(b)),
        n_sweeps=sweeps,
        converged=converged,
        history=np.concatenate(hist_chunks) if record_history and hist_chunks else None,
    )
    if not converged:
        raise ConvergenceError(f"no convergence after {max_sweeps} sweeps", dataclasses.replace(result, converged=False))
    return result


def penalized_objective(result: FitResult, design, target, spec: PenaltySpec) -> float:
    """Objective value of ``result`` on the standardized-penalty scale."""
    X, y = _validate(design, target, spec)
    m = spec.multipliers
    _, _, scale, live = standardize(X, m)
    b_std = np.where(live, result.coef * scale, 0.0)
    return _objective(X, y, result.intercept, result.coef, result.lam * m * np.abs(b_std))


def lambda_max(design, target, spec: PenaltySpec) -> float:
    """Smallest ``lam`` at which every penalized coefficient is exactly zero."""
    X, y = _validate(design, target, spec)
    m = spec.multipliers
    Z, _, _, live = standardize(X, m)
    yc = y - y.mean()
    free = live & (m == 0)
    r = yc
    if free.any():
        sol = np.linalg.lstsq(Z[:, free], yc, rcond=None)[0]
        r = yc - Z[:, free] @ sol
    pen = live & (m > 0)
    if not pen.any():
        return 0.0
    return float(np.max(2.0 * np.abs(Z[:, pen].T @ r) / m[pen]))


def lambda_grid(lmax: float, n_lambdas: int = 30, min_ratio: float = 1e-4) -> np.ndarray:
    """Descending logarithmic grid from ``lmax`` down to ``min_ratio * lmax``."""
    if lmax <= 0:
        raise ValueError("lambda_max must be positive to build a grid")
    return np.geomspace(lmax, lmax * min_ratio, n_lambdas)


def truncate_path(design, target, spec: PenaltySpec, grid, max_dev_ratio: float | None = 0.999,
                  max_active: int | None = None, *, tol: float = DEFAULT_TOL,
                  max_sweeps: int = DEFAULT_MAX_SWEEPS) -> np.ndarray:
    """Drop the tail of a descending grid past the point where the fit saturates.

    The path stops at the first value whose full-data fit explains at least
    ``max_dev_ratio`` of the centered sum of squares (that value is kept), or
    just before the first value with more than ``max_active`` nonzero
    coefficients. Near-interpolating fits are not worth scoring: with as
    many columns as rows, a leave-one-out fold is underdetermined while the
    full fit is not, so fold errors say little about the full fit there.
    """
    X, y = _validate(design, target, spec)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) > 0):
        raise ValueError("grid must be sorted in descending order")
    ratio, active = _path_dev_ratio(X, y, spec.multipliers, grid, tol, max_sweeps)
    stop = grid.size
    if max_dev_ratio is not None:
        hit = np.flatnonzero(ratio >= max_dev_ratio)
        if hit.size:
            stop = min(stop, hit[0] + 1)
    if max_active is not None:
        hit = np.flatnonzero(active > max_active)
        if hit.size:
            stop = min(stop, max(hit[0], 1))
    return grid[:stop]


def loo_fold_errors(design, target, spec: PenaltySpec, grid, *, tol: float = DEFAULT_TOL,
                    max_sweeps: int = DEFAULT_MAX_SWEEPS) -> np.ndarray:
    """Squared leave-one-out prediction errors, shape ``(n_rows, n_grid)``.

    Each fold re-standardizes on its own rows and walks the grid from the
    largest value down with warm starts. ``grid`` must be sorted descending.
    """
    X, y = _validate(design, target, spec, min_rows=5)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) > 0):
        raise ValueError("grid must be sorted in descending order")
    return _loo_path_errors(X, y, spec.multipliers, grid, tol, max_sweeps)


def loo_errors(design, target, spec: PenaltySpec, grid, *, tol: float = DEFAULT_TOL,
               max_sweeps: int = DEFAULT_MAX_SWEEPS) -> np.ndarray:
    """Leave-one-out mean squared prediction error for each grid value (descending grid)."""
    return loo_fold_errors(design, target, spec, grid, tol=tol, max_sweeps=max_sweeps).mean(axis=0)


SELECTION_RULES = ("min", "1se")


def select_lambda(design, target, spec: PenaltySpec, grid, *, tie_rtol: float = 0.0,
                  rule: str = "min", tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
                  return_errors: bool = False):
    """Grid value with the smallest leave-one-out error.

    With ``rule="min"`` values whose error is within ``tie_rtol`` (relative)
    of the minimum count as tied. With ``rule="1se"`` the tie band is one
    standard error of the minimizer's per-row errors. Either way the largest
    tied value wins.
    """
    if rule not in SELECTION_RULES:
        raise ValueError(f"unknown selection rule {rule!r}; choose from {SELECTION_RULES}")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    if np.any(grid <= 0):
        raise ValueError("lambda grid values must be positive")
    if np.asarray(target).shape[0] < 5:
        raise ValueError("leave-one-out selection needs at least 5 rows")
    order = np.argsort(-grid, kind="stable")
    folds = loo_fold_errors(design, target, spec, grid[order], tol=tol, max_sweeps=max_sweeps)
    errs_sorted = folds.mean(axis=0)
    k = int(np.argmin(errs_sorted))
    best = errs_sorted[k]
    band = best * tie_rtol
    if rule == "1se":
        band = max(band, folds[:, k].std(ddof=1) / np.sqrt(folds.shape[0]))
    tied = np.flatnonzero(errs_sorted <= best + band + 1e-15 * max(best, 1.0))
    lam = float(grid[order][tied[0]])
    if return_errors:
        errs = np.empty_like(errs_sorted)
        errs[order] = errs_sorted
        return lam, errs
    return lam


def kkt_check(result: FitResult, design, target, spec: PenaltySpec, tol: float = KKT_TOL) -> bool:
    """Verify the subgradient optimality conditions of ``result``.

    Gradients are taken with respect to the standardized coefficients, i.e.
    on the scale where coefficient j carries penalty ``lam * m_j``.
    """
    X, y = _validate(design, target, spec)
    if result.coef.shape != (X.shape[1],):
        raise ValueError(f"result has {result.coef.size} coefficients, design has {X.shape[1]} columns")
    m = spec.multipliers
    _, _, scale, live = standardize(X, m)
    r = y - result.intercept - X @ result.coef
    if abs(2.0 * r.sum()) > tol:
        return False
    grad = -2.0 * (X.T @ r) / scale
    pen = result.lam * m
    coef = result.coef
    for j in range(X.shape[1]):
        if not live[j]:
            if coef[j] != 0.0:
                return False
            continue
        if coef[j] != 0.0:
            if abs(grad[j] + pen[j] * np.sign(coef[j])) > tol:
                return False
        elif abs(grad[j]) > pen[j] + tol:
            return False
    return True


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------

class DifferentialLasso(RegressorMixin, BaseEstimator):
    """L1-penalized linear regression with per-coefficient penalty multipliers.

    Parameters
    ----------
    lam : float or None
        Fixed penalty. ``None`` selects it by leave-one-out cross-validation
        over a logarithmic grid below ``lambda_max``.
    penalty : PenaltySpec, array-like or None
        Per-column multipliers (``None`` penalizes every column equally).
    n_lambdas, lambda_min_ratio : grid size and lower end relative to ``lambda_max``.
    lambda_grid : explicit grid, overrides the two above.
    tie_rtol : relative slack under which larger grid values count as tied.
    selection : ``"min"`` (smallest LOO error) or ``"1se"`` (largest value
        within one standard error of it).
    max_dev_ratio : float or None
        The generated grid stops once the fit explains this fraction of the
        target's variation (see :func:`truncate_path`). Explicit grids are
        used as given.
    max_active : int or None
        The generated grid also stops before fits with more nonzero
        coefficients than this.
    """

    def __init__(self, lam=None, penalty=None, n_lambdas=30, lambda_min_ratio=1e-4,
                 lambda_grid=None, tie_rtol=0.0, selection="min", max_dev_ratio=None,
                 max_active=None, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
        self.lam = lam
        self.penalty = penalty
        self.n_lambdas = n_lambdas
        self.lambda_min_ratio = lambda_min_ratio
        self.lambda_grid = lambda_grid
        self.tie_rtol = tie_rtol
        self.selection = selection
        self.max_dev_ratio = max_dev_ratio
        self.max_active = max_active
        self.tol = tol
        self.max_sweeps = max_sweeps

    def _spec(self, n_features) -> PenaltySpec:
        if self.penalty is None:
            return PenaltySpec.uniform(0, n_features)
        if isinstance(self.penalty, PenaltySpec):
            return self.penalty
        return PenaltySpec((), tuple(np.ravel(self.penalty)))

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, ensure_min_samples=3)
        self.n_features_in_ = X.shape[1]
        spec = self._spec(X.shape[1])
        self.loo_errors_ = None
        if self.lam is not None:
            lam = float(self.lam)
        else:
            if self.lambda_grid is not None:
                grid = np.sort(np.asarray(self.lambda_grid, dtype=float))[::-1]
            else:
                lmax = lambda_max(X, y, spec)
                grid = lambda_grid(lmax, self.n_lambdas, self.lambda_min_ratio) if lmax > 0 else None
                if grid is not None and (self.max_dev_ratio is not None or self.max_active is not None):
                    grid = truncate_path(X, y, spec, grid, self.max_dev_ratio, self.max_active,
                                         tol=self.tol, max_sweeps=self.max_sweeps)
            if grid is None:
                lam = 0.0
            else:
                lam, self.loo_errors_ = select_lambda(
                    X, y, spec, grid, tie_rtol=self.tie_rtol, rule=self.selection,
                    tol=self.tol, max_sweeps=self.max_sweeps, return_errors=True,
                )
            self.lambda_path_ = grid
        self.result_ = fit_penalized(X, y, spec, lam, tol=self.tol, max_sweeps=self.max_sweeps)
        self.lambda_ = lam
        self.coef_ = self.result_.coef
        self.intercept_ = self.result_.intercept
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_


class LeastSquares(RegressorMixin, BaseEstimator):
    """Ordinary least squares with an optional intercept.

    A rank-deficient design falls back to ridge with ``jitter`` on the
    (centered) normal equations and sets ``singular_``.
    """

    def __init__(self, fit_intercept=True, jitter=1e-8):
        self.fit_intercept = fit_intercept
        self.jitter = jitter

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, ensure_min_samples=1)
        self.n_features_in_ = X.shape[1]
        if self.fit_intercept:
            xm, ym = X.mean(axis=0), y.mean()
        else:
            xm, ym = np.zeros(X.shape[1]), 0.0
        Xc, yc = X - xm, y - ym
        A = Xc.T @ Xc
        rank = np.linalg.matrix_rank(Xc) if X.shape[1] else 0
        self.singular_ = rank < X.shape[1]
        if self.singular_:
            A = A + self.jitter * np.eye(X.shape[1])
        self.coef_ = np.linalg.solve(A, Xc.T @ yc) if X.shape[1] else np.zeros(0)
        self.intercept_ = float(ym - xm @ self.coef_)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_
