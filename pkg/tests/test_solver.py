import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from argo_nowcast.solver import (
    ConvergenceError,
    DifferentialLasso,
    LeastSquares,
    PenaltySpec,
    fit_penalized,
    kkt_check,
    lambda_grid,
    lambda_max,
    loo_errors,
    loo_fold_errors,
    penalized_objective,
    select_lambda,
    soft_threshold,
    standardize,
    truncate_path,
)
from oracles import lasso_oracle, loo_oracle, penalized_objective_oracle, pinv_ols


def _problem(rng, n=24, p=5, n_lags=2, free=()):
    X = rng.standard_normal((n, p)) * rng.uniform(0.2, 5.0, p) + rng.uniform(-3, 3, p)
    y = X[:, : min(3, p)] @ rng.standard_normal(min(3, p)) + rng.standard_normal(n)
    m = np.ones(p)
    m[list(free)] = 0.0
    return X, y, PenaltySpec(tuple(m[:n_lags]), tuple(m[n_lags:]))


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0
    with pytest.raises(ValueError):
        soft_threshold(1.0, -1.0)


class TestPenaltySpec:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            PenaltySpec((1.0, -1.0), ())

    def test_layout(self):
        spec = PenaltySpec((0, 1), (1, 1, 0))
        assert len(spec) == 5 and spec.n_lags == 2 and spec.n_queries == 3
        np.testing.assert_array_equal(spec.multipliers, [0, 1, 1, 1, 0])


class TestFit:
    def test_lambda_zero_is_ols(self, rng):
        for n, p in [(24, 5), (24, 23), (40, 12)]:
            X, y, spec = _problem(rng, n, p)
            fit = fit_penalized(X, y, spec, 0.0)
            mu, b = pinv_ols(X, y)
            np.testing.assert_allclose(fit.coef, b, atol=1e-6)
            assert fit.intercept == pytest.approx(mu, abs=1e-6)

    def test_above_lambda_max_zeroes_penalized(self, rng):
        X, y, spec = _problem(rng, 30, 6, n_lags=3, free=(0, 2))
        lmax = lambda_max(X, y, spec)
        for lam in (lmax, 3 * lmax):
            fit = fit_penalized(X, y, spec, lam)
            pen = spec.multipliers > 0
            assert np.all(fit.coef[pen] == 0.0)
            mu, b = pinv_ols(X[:, ~pen], y)
            np.testing.assert_allclose(fit.coef[~pen], b, atol=1e-8)
            assert fit.intercept == pytest.approx(mu, abs=1e-8)
        below = fit_penalized(X, y, spec, 0.99 * lmax)
        assert np.any(below.coef[spec.multipliers > 0] != 0)

    def test_beats_random_perturbations(self):
        rng = np.random.default_rng(2024)
        X, y, spec = _problem(rng, 24, 5)
        fit = fit_penalized(X, y, spec, 0.1)
        m = spec.multipliers
        base = penalized_objective_oracle(X, y, fit.intercept, fit.coef, 0.1, m)
        steps = rng.standard_normal((10_000, 6))
        steps *= 1e-3 / np.linalg.norm(steps, axis=1, keepdims=True)
        worse = [penalized_objective_oracle(X, y, fit.intercept + d[0], fit.coef + d[1:], 0.1, m) for d in steps]
        assert base <= min(worse)
        _, _, ob = lasso_oracle(X, y, 0.1, m)
        assert penalized_objective(fit, X, y, spec) == pytest.approx(ob, abs=1e-5)

    def test_objective_matches_oracle_formula(self, rng):
        X, y, spec = _problem(rng, 24, 8, n_lags=4, free=(1,))
        fit = fit_penalized(X, y, spec, 0.7)
        assert fit.objective == pytest.approx(
            penalized_objective_oracle(X, y, fit.intercept, fit.coef, 0.7, spec.multipliers), rel=1e-12)

    def test_constant_target(self, rng):
        X, _, spec = _problem(rng)
        fit = fit_penalized(X, np.full(24, 3.5), spec, 0.5)
        assert np.all(fit.coef == 0) and fit.intercept == 3.5

    def test_constant_column_gets_zero(self, rng):
        X, y, spec = _problem(rng)
        X[:, 1] = 4.0
        fit = fit_penalized(X, y, spec, 0.0)
        assert fit.coef[1] == 0.0
        assert kkt_check(fit, X, y, spec)

    def test_nonconvergence_carries_iterate(self, rng, monkeypatch):
        import argo_nowcast.solver as solver

        # the active-set polish usually finishes first; disable it to exercise the sweep limit
        monkeypatch.setattr(solver, "_polish_kernel", lambda *a: False)
        X, y, spec = _problem(rng, 24, 23, n_lags=13)
        X[:, 1] = X[:, 0] + 1e-6 * rng.standard_normal(24)
        with pytest.raises(ConvergenceError) as info:
            fit_penalized(X, y, spec, 1e-6, max_sweeps=1, tol=1e-15)
        assert info.value.result is not None and not info.value.result.converged

    @pytest.mark.parametrize("bad", [
        dict(design=np.zeros((2, 2))),
        dict(target=np.zeros(5)),
        dict(lam=-1.0),
    ])
    def test_validation(self, rng, bad):
        X, y, spec = _problem(rng, 24, 2, n_lags=1)
        kw = dict(design=X, target=y, lam=0.1) | bad
        with pytest.raises(ValueError):
            fit_penalized(kw["design"], kw["target"], spec, kw["lam"])

    def test_non_finite(self, rng):
        X, y, spec = _problem(rng)
        X[3, 2] = np.nan
        with pytest.raises(ValueError, match="finite"):
            fit_penalized(X, y, spec, 0.1)

    def test_objective_nonincreasing_per_sweep(self, rng):
        for _ in range(20):
            X, y, spec = _problem(rng, 24, 10, n_lags=4, free=(0,))
            lam = lambda_max(X, y, spec) * 10 ** rng.uniform(-3, 0)
            fit = fit_penalized(X, y, spec, lam, record_history=True)
            h = fit.history
            assert h is not None and h.size >= 1
            assert np.all(np.diff(h) <= 1e-10 * max(1.0, h[0]))

    def test_sparsity_monotone_along_path(self, rng):
        for _ in range(20):
            X, y, spec = _problem(rng, 48, 6, n_lags=2)
            grid = lambda_grid(lambda_max(X, y, spec), 25, 1e-3)
            _, _, scale, _ = standardize(X, spec.multipliers)
            warm, counts = None, []
            for lam in grid:
                fit = fit_penalized(X, y, spec, lam, warm_start=warm)
                warm = fit.coef * scale
                counts.append(int(np.count_nonzero(fit.coef[spec.multipliers > 0])))
            assert all(a <= b for a, b in zip(counts, counts[1:])), counts

    def test_scale_equivariance(self, rng):
        X, y, spec = _problem(rng, 24, 6, n_lags=3, free=(1,))
        for j, s in [(0, 1000.0), (1, 0.01), (4, -7.0)]:
            lam = 0.3 * lambda_max(X, y, spec)
            a = fit_penalized(X, y, spec, lam)
            Xs = X.copy()
            Xs[:, j] *= s
            b = fit_penalized(Xs, y, spec, lam)
            assert b.coef[j] == pytest.approx(a.coef[j] / s, rel=1e-7, abs=1e-12)
            np.testing.assert_allclose(b.predict(Xs), a.predict(X), rtol=1e-9, atol=1e-9)

    def test_warm_start_same_answer(self, rng):
        X, y, spec = _problem(rng, 24, 10, n_lags=3)
        lam = 0.05 * lambda_max(X, y, spec)
        cold = fit_penalized(X, y, spec, lam)
        warm = fit_penalized(X, y, spec, lam, warm_start=rng.standard_normal(10))
        np.testing.assert_allclose(warm.coef, cold.coef, atol=1e-7)


class TestKKT:
    def test_accepts_converged(self, rng):
        for _ in range(30):
            X, y, spec = _problem(rng, 24, 12, n_lags=5, free=(0, 6))
            lam = lambda_max(X, y, spec) * 10 ** rng.uniform(-4, 0.5)
            assert kkt_check(fit_penalized(X, y, spec, lam), X, y, spec)

    def test_rejects_corrupted(self, rng):
        X, y, spec = _problem(rng)
        fit = fit_penalized(X, y, spec, 0.2 * lambda_max(X, y, spec))
        coef = fit.coef.copy()
        coef[0] += 0.1
        bad = type(fit)(fit.intercept, coef[: spec.n_lags], coef[spec.n_lags:], fit.lam, fit.objective)
        assert not kkt_check(bad, X, y, spec)
        shifted = type(fit)(fit.intercept + 0.1, fit.alpha, fit.beta, fit.lam, fit.objective)
        assert not kkt_check(shifted, X, y, spec)

    def test_lambda_zero_is_normal_equations(self, rng):
        X, y, spec = _problem(rng, 30, 6)
        fit = fit_penalized(X, y, spec, 0.0)
        r = y - fit.predict(X)
        # normal-equations oracle: residual orthogonal to the intercept and every column
        assert abs(r.sum()) < 1e-8 and np.max(np.abs(X.T @ r)) < 1e-6
        assert kkt_check(fit, X, y, spec)
        mu, b = pinv_ols(X, y)
        b[2] += 1e-3
        off = type(fit)(mu, b[: spec.n_lags], b[spec.n_lags:], 0.0, 0.0)
        assert not kkt_check(off, X, y, spec)

    def test_dimension_mismatch(self, rng):
        X, y, spec = _problem(rng)
        fit = fit_penalized(X, y, spec, 0.1)
        with pytest.raises(ValueError):
            kkt_check(fit, X[:, :4], y, PenaltySpec((1, 1), (1, 1)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(5, 30), st.integers(1, 12), st.floats(-4, 1))
    def test_property_kkt_and_oracle(self, seed, n, p, log_ratio):
        rng = np.random.default_rng(seed)
        X, y, spec = _problem(rng, n, p, n_lags=p // 2, free=(0,) if p > 2 else ())
        lmax = lambda_max(X, y, spec)
        lam = lmax * 10**log_ratio if lmax > 0 else 0.0
        fit = fit_penalized(X, y, spec, lam)
        assert kkt_check(fit, X, y, spec)
        _, _, ob = lasso_oracle(X, y, lam, spec.multipliers)
        assert penalized_objective(fit, X, y, spec) <= ob + 1e-6 * max(1.0, ob)


class TestSelection:
    def test_singleton(self, rng):
        X, y, spec = _problem(rng)
        assert select_lambda(X, y, spec, [0.3]) == 0.3

    def test_too_few_rows(self, rng):
        X, y, spec = _problem(rng, 4, 2, n_lags=1)
        with pytest.raises(ValueError, match="5 rows"):
            select_lambda(X, y, spec, [0.1, 0.2])

    def test_bad_grid(self, rng):
        X, y, spec = _problem(rng)
        with pytest.raises(ValueError):
            select_lambda(X, y, spec, [])
        with pytest.raises(ValueError):
            select_lambda(X, y, spec, [0.0, 1.0])
        with pytest.raises(ValueError):
            select_lambda(X, y, spec, [1.0], rule="median")
        with pytest.raises(ValueError, match="descending"):
            loo_errors(X, y, spec, [0.1, 1.0])

    def test_loo_matches_independent_oracle(self, rng):
        X, y, spec = _problem(rng, 12, 4, n_lags=2, free=(0,))
        grid = lambda_grid(lambda_max(X, y, spec), 6, 1e-2)

        def fit(Xt, yt, lam):
            mu, b, _ = lasso_oracle(Xt, yt, lam, spec.multipliers)
            return mu, b

        np.testing.assert_allclose(loo_errors(X, y, spec, grid), loo_oracle(X, y, grid, fit), rtol=1e-5, atol=1e-8)
        folds = loo_fold_errors(X, y, spec, grid)
        assert folds.shape == (12, 6)

    def test_noiseless_sparse_exhaustive(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((24, 10))
        y = 2.0 * X[:, 1] - 1.5 * X[:, 6]
        spec = PenaltySpec.uniform(0, 10)
        grid = np.geomspace(10, 1e-4, 21)
        lam, errs = select_lambda(X, y, spec, grid, return_errors=True)

        def fit(Xt, yt, lam):
            f = fit_penalized(Xt, yt, spec, lam)
            return f.intercept, f.coef

        exhaustive = loo_oracle(X, y, grid, fit)
        np.testing.assert_allclose(errs, exhaustive, rtol=1e-6, atol=1e-12)
        k = list(grid).index(lam)
        assert np.all(exhaustive[k] <= exhaustive + 1e-12)
        chosen = fit_penalized(X, y, spec, lam)
        assert set(np.flatnonzero(np.abs(chosen.coef) > 1e-3)) == {1, 6}

    def test_pure_noise_prefers_grid_max(self):
        hits = 0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            X, y = rng.standard_normal((24, 10)), rng.standard_normal(24)
            spec = PenaltySpec.uniform(0, 10)
            grid = lambda_grid(lambda_max(X, y, spec))
            hits += select_lambda(X, y, spec, grid, rule="1se") == grid[0]
        assert hits >= 160

    def test_ties_go_to_larger_lambda(self, rng):
        X, y, spec = _problem(rng)
        lmax = lambda_max(X, y, spec)
        grid = [2 * lmax, 3 * lmax, 5 * lmax]
        # every value above lambda_max gives the same intercept-only fit
        assert select_lambda(X, y, spec, grid) == 5 * lmax
        assert select_lambda(X, y, spec, grid[::-1]) == 5 * lmax

    def test_tie_rtol_widens(self, rng):
        X, y, spec = _problem(rng, 24, 8, n_lags=2)
        grid = lambda_grid(lambda_max(X, y, spec), 20)
        strict, errs = select_lambda(X, y, spec, grid, return_errors=True)
        loose = select_lambda(X, y, spec, grid, tie_rtol=10.0)
        assert loose >= strict
        assert loose == grid[0]
        assert errs.min() == errs[list(grid).index(strict)]


class TestTruncatePath:
    def test_dev_ratio_stop(self, rng):
        X, y, spec = _problem(rng, 24, 23, n_lags=13)
        grid = lambda_grid(lambda_max(X, y, spec), 30)
        cut = truncate_path(X, y, spec, grid, 0.9)
        assert 1 <= cut.size < grid.size
        np.testing.assert_array_equal(cut, grid[: cut.size])
        last = fit_penalized(X, y, spec, cut[-1])
        r = y - last.predict(X)
        yc = y - y.mean()
        assert 1 - (r @ r) / (yc @ yc) >= 0.9 - 1e-9
        if cut.size > 1:
            prev = fit_penalized(X, y, spec, cut[-2])
            rp = y - prev.predict(X)
            assert 1 - (rp @ rp) / (yc @ yc) < 0.9

    def test_active_cap(self, rng):
        X, y, spec = _problem(rng, 24, 23, n_lags=13)
        grid = lambda_grid(lambda_max(X, y, spec), 30)
        cut = truncate_path(X, y, spec, grid, None, 4)
        for lam in cut:
            assert np.count_nonzero(fit_penalized(X, y, spec, lam).coef) <= 4
        if cut.size < grid.size:
            assert np.count_nonzero(fit_penalized(X, y, spec, grid[cut.size]).coef) > 4

    def test_no_limits_keeps_grid(self, rng):
        X, y, spec = _problem(rng)
        grid = lambda_grid(lambda_max(X, y, spec), 10)
        np.testing.assert_array_equal(truncate_path(X, y, spec, grid, None, None), grid)

    def test_requires_descending(self, rng):
        X, y, spec = _problem(rng)
        with pytest.raises(ValueError):
            truncate_path(X, y, spec, [0.1, 1.0])


class TestEstimators:
    def test_fixed_lambda_matches_function(self, rng):
        X, y, spec = _problem(rng, 24, 6, n_lags=2, free=(0,))
        est = DifferentialLasso(lam=0.4, penalty=spec).fit(X, y)
        fit = fit_penalized(X, y, spec, 0.4)
        np.testing.assert_array_equal(est.coef_, fit.coef)
        np.testing.assert_allclose(est.predict(X), fit.predict(X))

    def test_cv_path(self, rng):
        X, y, spec = _problem(rng, 24, 10, n_lags=3)
        est = DifferentialLasso(penalty=spec, max_active=5).fit(X, y)
        assert est.lambda_ in est.lambda_path_
        assert est.loo_errors_.shape == est.lambda_path_.shape
        assert np.count_nonzero(est.coef_) <= 5
        assert kkt_check(est.result_, X, y, spec)

    def test_array_penalty_and_clone(self, rng):
        X, y, _ = _problem(rng)
        est = DifferentialLasso(lam=0.2, penalty=[0, 1, 1, 1, 1])
        c = clone(est)
        assert c.get_params()["penalty"] == [0, 1, 1, 1, 1]
        c.fit(X, y)
        assert c.result_.alpha.size == 0 and c.result_.beta.size == 5

    def test_default_uniform(self, rng):
        X, y, _ = _problem(rng)
        est = DifferentialLasso(lam=1e9).fit(X, y)
        assert np.all(est.coef_ == 0) and est.intercept_ == pytest.approx(y.mean())

    def test_least_squares_normal_equations(self, rng):
        for _ in range(20):
            X = rng.standard_normal((24, 6))
            y = rng.standard_normal(24)
            est = LeastSquares().fit(X, y)
            A = np.column_stack([np.ones(24), X])
            sol = np.linalg.solve(A.T @ A, A.T @ y)
            assert est.intercept_ == pytest.approx(sol[0], abs=1e-8)
            np.testing.assert_allclose(est.coef_, sol[1:], atol=1e-8)
            assert not est.singular_

    def test_least_squares_singular_fallback(self, rng):
        X = rng.standard_normal((24, 3))
        X[:, 2] = X[:, 0] + X[:, 1]
        y = rng.standard_normal(24)
        est = LeastSquares().fit(X, y)
        assert est.singular_
        assert np.all(np.isfinite(est.coef_))
        mu, b = pinv_ols(X, y)
        np.testing.assert_allclose(est.predict(X), mu + X @ b, atol=1e-6)

    def test_least_squares_no_intercept(self, rng):
        X = rng.standard_normal((24, 3))
        y = X @ [1.0, 2.0, 3.0]
        est = LeastSquares(fit_intercept=False).fit(X, y)
        assert est.intercept_ == 0.0
        np.testing.assert_allclose(est.coef_, [1, 2, 3], atol=1e-10)
