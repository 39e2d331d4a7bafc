import numpy as np
import pytest

from famadapt.analysis.lmm import (FINETUNED_FORMULA, RankDeficientDesign, design_matrix,
                                   fit_arrays, fit_lmm, loglik_at, parse_formula, records_frame,
                                   write_summary)
from famadapt.analysis.records import ResultRecord


def grouped_data(seed, a=8, n=6, sigma_b=2.0, sigma=1.0, beta=(3.0, -1.5)):
    rng = np.random.default_rng(seed)
    groups = np.repeat(np.arange(a), n)
    x = rng.normal(size=a * n)
    X = np.column_stack([np.ones(a * n), x])
    y = X @ np.array(beta) + rng.normal(0, sigma_b, a)[groups] + rng.normal(0, sigma, a * n)
    return X, y, groups


def test_zero_group_variance_recovers_ols():
    rng = np.random.default_rng(0)
    groups = np.repeat(np.arange(6), 10)
    X = np.column_stack([np.ones(60), rng.normal(size=60)])
    y = X @ [1.0, 2.0] + rng.normal(size=60)
    # remove group-mean structure in the residual so the boundary is optimal
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    r = y - X @ ols
    for g in range(6):
        r[groups == g] -= r[groups == g].mean()
    y = X @ ols + r
    fit = fit_arrays(X, y, groups)
    refit = np.linalg.lstsq(X, y, rcond=None)[0]
    np.testing.assert_allclose(fit.beta, refit, atol=1e-6)
    assert fit.sigma_b2 == 0.0
    assert fit.sigma2 == pytest.approx(np.sum((y - X @ refit) ** 2) / 60, abs=1e-9)


@pytest.mark.parametrize("method", ["ml", "reml"])
def test_balanced_one_way_closed_form(method):
    a, n = 7, 5
    X, y, groups = grouped_data(3, a, n)
    X = X[:, :1]
    means = np.array([y[groups == g].mean() for g in range(a)])
    msb = n * np.sum((means - y.mean()) ** 2) / (a - 1)
    msw = sum(np.sum((y[groups == g] - means[g]) ** 2) for g in range(a)) / (a * (n - 1))
    fit = fit_arrays(X, y, groups, method=method)
    if method == "ml":
        expected_b = ((1 - 1 / a) * msb - msw) / n
    else:
        expected_b = (msb - msw) / n
    assert expected_b > 0
    assert fit.sigma2 == pytest.approx(msw, abs=1e-6)
    assert fit.sigma_b2 == pytest.approx(expected_b, abs=1e-6)
    assert fit.beta[0] == pytest.approx(y.mean(), abs=1e-9)


@pytest.mark.parametrize("method", ["ml", "reml"])
def test_agrees_with_statsmodels(method):
    sm = pytest.importorskip("statsmodels.api")
    X, y, groups = grouped_data(11, a=9, n=7)
    ours = fit_arrays(X, y, groups, method=method)
    ref = sm.MixedLM(y, X, groups).fit(reml=method == "reml", method="lbfgs")
    np.testing.assert_allclose(ours.beta, ref.fe_params, atol=1e-4)
    assert ours.sigma2 == pytest.approx(ref.scale, rel=1e-3)
    assert ours.sigma_b2 == pytest.approx(float(np.asarray(ref.cov_re)[0, 0]), rel=1e-3)
    assert ours.loglik >= ref.llf - 1e-6


def test_equivariance():
    X, y, groups = grouped_data(5)
    base = fit_arrays(X, y, groups)
    scaled = fit_arrays(X, 3.0 * y, groups)
    np.testing.assert_allclose(scaled.beta, 3.0 * base.beta, rtol=1e-6)
    assert scaled.sigma_b2 == pytest.approx(9.0 * base.sigma_b2, rel=1e-5)
    shifted = fit_arrays(X, y + X @ [1.0, -2.0], groups)
    np.testing.assert_allclose(shifted.beta, base.beta + [1.0, -2.0], atol=1e-6)


def test_optimum_beats_boundary_and_neighbours():
    X, y, groups = grouped_data(8)
    fit = fit_arrays(X, y, groups)
    assert fit.loglik >= loglik_at(X, y, groups, 0.0) - 1e-9
    lam = fit.ratio
    for f in (0.5, 0.9, 1.1, 2.0):
        assert fit.loglik >= loglik_at(X, y, groups, lam * f) - 1e-9


def test_rank_deficiency_names_columns():
    X, y, groups = grouped_data(1)
    X = np.column_stack([X, 2 * X[:, 1]])
    with pytest.raises(RankDeficientDesign) as info:
        fit_arrays(X, y, groups, names=["(Intercept)", "x", "x2"])
    assert set(info.value.columns) == {"x", "x2"}


def test_fit_errors():
    X, y, groups = grouped_data(1)
    with pytest.raises(ValueError, match="two groups"):
        fit_arrays(X, y, np.zeros(len(y)))
    with pytest.raises(ValueError):
        fit_arrays(X, y, groups, method="bayes")


def test_formula_parsing_and_coding():
    f = parse_formula("y ~ a + f:x + (1 | g) - 1")
    assert f.response == "y" and f.group == "g" and not f.intercept
    assert f.terms == [("a",), ("f", "x")]
    with pytest.raises(ValueError):
        parse_formula("y a")
    data = {"y": [1, 2, 3, 4], "task": ["pos", "uas", "pos", "uas"], "x": [1.0, 2.0, 3.0, 4.0],
            "resource": ["low", "high", "high", "low"]}
    X, names = design_matrix(data, parse_formula("y ~ task + resource:x"))
    assert names == ["(Intercept)", "taskuas", "resourcehigh:x", "resourcelow:x"]
    np.testing.assert_array_equal(X[:, 1], [0, 1, 0, 1])
    np.testing.assert_array_equal(X[:, 2], [0, 2, 3, 0])


def records_grid(seed, beta, sigma_b=3.0, sigma=2.0):
    rng = np.random.default_rng(seed)
    langs = ["et", "fi", "hu", "ru", "kpv", "mdf", "myv", "olo", "sme", "sms", "krl"]
    offsets = dict(zip(langs, rng.normal(0, sigma_b, len(langs))))
    out = []
    for lang in langs:
        high = lang in ("et", "fi", "hu", "ru")
        for steps in (100_000, 200_000, 400_000):
            for vocab in (16384, 32768, 65536):
                for alpha in (0.1, 0.2, 0.3):
                    for task in ("pos", "uas"):
                        mean = (beta[0] + beta[1] * steps / 1e5 + beta[2] * vocab / 16384
                                + beta[3] * (task == "uas")
                                + (beta[4] if not high else 0.0) * alpha / 0.1)
                        score = mean + offsets[lang] + rng.normal(0, sigma)
                        out.append(ResultRecord(lang, task, "few_shot", steps, vocab, alpha,
                                                512, 0, float(np.clip(score, 0, 100))))
    return out


def test_fit_from_records_and_summary(tmp_path):
    recs = records_grid(0, (60.0, 1.5, 0.6, -14.0, -1.3))
    formula = "score ~ lapt_steps + vocab_size + task + resource:lapt_alpha + (1 | language)"
    fit = fit_lmm(recs, formula)
    assert fit.names == ["(Intercept)", "lapt_steps", "vocab_size", "taskuas",
                         "resourcehigh:lapt_alpha", "resourcelow:lapt_alpha"]
    assert abs(fit.coef("taskuas") + 14.0) < 3 * fit.se[3]
    assert set(fit.group_intercepts()) == {r.language for r in recs}
    write_summary(tmp_path / "s.tsv", fit)
    text = (tmp_path / "s.tsv").read_text()
    assert "significance is approximate" in text and "\ntaskuas\t" in text
    frame = records_frame(recs[:1], scale=False)
    assert frame["lapt_steps"] == [100_000.0] and frame["resource"] == ["high"]
    # finetuning_lines is constant in this grid, so the full formula is singular
    with pytest.raises(RankDeficientDesign):
        fit_lmm(recs, FINETUNED_FORMULA)
    with pytest.raises(ValueError, match="grouping"):
        fit_lmm(recs, "score ~ task")
