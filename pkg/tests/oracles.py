"""Independent reference implementations used by the tests.

Nothing here imports the package's solver internals, so agreement between
the two is evidence rather than tautology.
"""

import numpy as np
from scipy.optimize import minimize


def oracle_scales(X, m):
    """Population std for penalized columns, 1 for unpenalized or constant ones."""
    s = X.std(axis=0)
    return np.where((m > 0) & (s > 0), s, 1.0)


def penalized_objective_oracle(X, y, intercept, coef, lam, m):
    s = oracle_scales(X, m)
    r = y - intercept - X @ coef
    return float(r @ r + lam * np.sum(m * s * np.abs(coef)))


def lasso_oracle(X, y, lam, m, x0=None):
    """Minimize ``|y - mu - X b|^2 + lam * sum(m_j s_j |b_j|)`` by splitting b = u - v, u, v >= 0.

    The intercept is profiled out by centering; the bound-constrained smooth
    problem is solved with L-BFGS-B at tight tolerances. Returns
    ``(intercept, coef, objective)``.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, p = X.shape
    xm, ym = X.mean(axis=0), y.mean()
    s = oracle_scales(X, m)
    live = X.std(axis=0) > 0
    Z = np.where(live, (X - xm) / s, 0.0)
    yc = y - ym
    w = lam * m

    def fg(z):
        u, v = z[:p], z[p:]
        r = yc - Z @ (u - v)
        g = -2.0 * Z.T @ r
        return r @ r + w @ (u + v), np.concatenate([g + w, -g + w])

    z0 = np.zeros(2 * p) if x0 is None else np.concatenate([np.maximum(x0, 0), np.maximum(-x0, 0)])
    best = None
    for _ in range(4):
        res = minimize(fg, z0, jac=True, method="L-BFGS-B", bounds=[(0, None)] * (2 * p),
                       options={"maxiter": 50000, "maxfun": 100000, "ftol": 1e-16, "gtol": 1e-12, "maxcor": 50})
        if best is None or res.fun < best.fun:
            best = res
        z0 = res.x
    u = best.x[:p] - best.x[p:]
    coef = np.where(live, u / s, 0.0)
    intercept = ym - xm @ coef
    return intercept, coef, penalized_objective_oracle(X, y, intercept, coef, lam, m)


def pinv_ols(X, y, intercept=True):
    """Minimum-norm least squares via the pseudoinverse, optionally with an intercept."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if not intercept:
        return 0.0, np.linalg.pinv(X) @ y
    xm, ym = X.mean(axis=0), y.mean()
    coef = np.linalg.pinv(X - xm) @ (y - ym)
    return ym - xm @ coef, coef


def loo_oracle(X, y, lam_list, fit):
    """Mean squared leave-one-out error of ``fit(X_train, y_train, lam) -> (mu, b)`` for each lambda."""
    n = len(y)
    out = []
    for lam in lam_list:
        e = 0.0
        for i in range(n):
            keep = np.arange(n) != i
            mu, b = fit(X[keep], y[keep], lam)
            e += (y[i] - mu - X[i] @ b) ** 2
        out.append(e / n)
    return np.array(out)


def metrics_oracle(pred, obs):
    """Plain-loop evaluation of the five accuracy formulas."""
    n = len(obs)
    se = sum((p - o) ** 2 for p, o in zip(pred, obs)) / n
    ae = sum(abs(p - o) for p, o in zip(pred, obs)) / n
    pos = [(p, o) for p, o in zip(pred, obs) if o > 0]
    spe = sum(((p - o) / o) ** 2 for p, o in pos) / len(pos)
    ape = sum(abs((p - o) / o) for p, o in pos) / len(pos)
    mp, mo = sum(pred) / n, sum(obs) / n
    cov = sum((p - mp) * (o - mo) for p, o in zip(pred, obs))
    vp = sum((p - mp) ** 2 for p in pred)
    vo = sum((o - mo) ** 2 for o in obs)
    corr = cov / (vp * vo) ** 0.5 if vp > 0 and vo > 0 else None
    return {"rmse": se ** 0.5, "mae": ae, "rmspe": spe ** 0.5, "mape": ape, "corr": corr}


def weekly_oracle(weeks):
    """Day-by-day split of ``[(start_date, days, value)]`` into ``{(year, month): value}``."""
    import datetime as dt

    out = {}
    for start, days, value in weeks:
        for d in range(days):
            day = start + dt.timedelta(days=d)
            key = (day.year, day.month)
            out[key] = out.get(key, 0.0) + value / days
    return out
