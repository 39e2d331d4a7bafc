"""Random-intercept linear mixed model, fit by profiled maximum likelihood.

Model: ``y = X b + u[group] + e`` with ``u ~ N(0, s_b^2)`` and
``e ~ N(0, s^2)``. Writing ``lam = s_b^2 / s^2`` the marginal covariance is
``s^2 H(lam)`` where each group block of ``H`` is ``I + lam * 11'``. For a
fixed ``lam`` the GLS estimate of ``b`` and the variance ``s^2`` are closed
form, so the likelihood reduces to a function of ``lam`` alone, which is
maximised by golden-section search on ``log lam`` (with ``lam = 0`` checked
separately as the boundary).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

# units used to put predictors on an interpretable scale
SCALES = {
    "lapt_steps": 100_000.0,
    "vocab_size": 16_384.0,
    "finetuning_lines": 512.0,
    "lapt_alpha": 0.1,
}
HIGH_RESOURCE = ("et", "fi", "hu", "ru")

FINETUNED_FORMULA = (
    "score ~ lapt_steps + vocab_size + finetuning_lines + task + resource:lapt_alpha + (1 | language)"
)
ZERO_SHOT_FORMULA = "score ~ lapt_steps + vocab_size + lapt_alpha + task + (1 | language)"

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_LOG_LAM_RANGE = (-18.0, 18.0)


class RankDeficientDesign(ValueError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__("design matrix is rank deficient; collinear columns: "
                         + ", ".join(self.columns))


class LmmConvergenceError(RuntimeError):
    def __init__(self, bracket, iterations):
        self.bracket = bracket
        super().__init__(f"variance-ratio search did not converge after {iterations} "
                         f"iterations; final log-ratio bracket {bracket}")


# ---------------------------------------------------------------- formulas

@dataclass
class Formula:
    response: str
    terms: list            # each term is a tuple of variable names
    intercept: bool = True
    group: str | None = None


def parse_formula(text: str) -> Formula:
    """Parse ``y ~ a + b + f:x + (1 | g)``; ``- 1`` or ``+ 0`` drops the intercept."""
    if "~" not in text:
        raise ValueError(f"formula needs '~': {text!r}")
    lhs, rhs = text.split("~", 1)
    response = lhs.strip()
    group = None
    m = re.search(r"\(\s*1\s*\|\s*([A-Za-z_][\w.]*)\s*\)", rhs)
    if m:
        group = m.group(1)
        rhs = rhs[: m.start()] + rhs[m.end():]
    intercept = True
    rhs = re.sub(r"-\s*1\b", lambda _: "+ __nointercept__", rhs)
    terms = []
    for piece in rhs.split("+"):
        piece = piece.strip()
        if not piece or piece == "1":
            continue
        if piece in ("0", "__nointercept__"):
            intercept = False
            continue
        names = tuple(p.strip() for p in piece.split(":"))
        if not all(re.fullmatch(r"[A-Za-z_][\w.]*", n) for n in names):
            raise ValueError(f"cannot parse term {piece!r}")
        if names not in terms:
            terms.append(names)
    if not response:
        raise ValueError("formula has no response")
    return Formula(response, terms, intercept, group)


def _is_categorical(values) -> bool:
    return any(isinstance(v, str) for v in values)


def design_matrix(data: dict, formula: Formula):
    """Treatment-coded design matrix with R-style column names.

    A factor inside a term is coded with contrasts (reference = first sorted
    level dropped) when the term with the factor removed is also in the model
    (the empty term counts when there is an intercept); otherwise every level
    gets its own indicator column.
    """
    n = len(data[formula.response])
    present = {frozenset(t) for t in formula.terms}
    if formula.intercept:
        present.add(frozenset())
    names, cols = [], []
    if formula.intercept:
        names.append("(Intercept)")
        cols.append(np.ones(n))
    for term in formula.terms:
        parts = [("", np.ones(n))]
        for var in term:
            if var not in data:
                raise KeyError(f"unknown column {var!r}")
            values = list(data[var])
            if _is_categorical(values):
                levels = sorted(set(map(str, values)))
                margin = frozenset(term) - {var}
                if margin in present:
                    levels = levels[1:]
                coded = [(f"{var}{lv}", np.array([str(v) == lv for v in values], dtype=float))
                         for lv in levels]
            else:
                coded = [(var, np.asarray(values, dtype=float))]
            parts = [(f"{a}:{b}" if a else b, x * y) for a, x in parts for b, y in coded]
        for name, col in parts:
            names.append(name)
            cols.append(col)
    X = np.column_stack(cols) if cols else np.zeros((n, 0))
    return X, names


def check_rank(X, names, tol=1e-10):
    if X.shape[1] == 0:
        return
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    cutoff = tol * s[0] * max(X.shape)
    null = vt[s <= cutoff]
    if len(null):
        involved = np.flatnonzero(np.abs(null).max(axis=0) > 1e-8)
        raise RankDeficientDesign([names[i] for i in involved])


# ---------------------------------------------------------------- fitting

class _Groups:
    def __init__(self, labels):
        self.levels, self.index = np.unique(np.asarray([str(g) for g in labels]),
                                            return_inverse=True)
        self.sizes = np.bincount(self.index, minlength=len(self.levels)).astype(float)

    def sums(self, A):
        out = np.zeros((len(self.levels),) + A.shape[1:])
        np.add.at(out, self.index, A)
        return out

    def h_inv(self, A, lam):
        """``H(lam)^-1 @ A`` using the block structure."""
        shrink = lam / (1.0 + lam * self.sizes)
        corr = self.sums(A) * (shrink[:, None] if A.ndim == 2 else shrink)
        return A - corr[self.index]

    def logdet(self, lam):
        return float(np.sum(np.log1p(lam * self.sizes)))


def _profile(X, y, groups, lam, reml):
    HiX = groups.h_inv(X, lam)
    Hiy = groups.h_inv(y, lam)
    A = X.T @ HiX
    beta = np.linalg.solve(A, X.T @ Hiy)
    r = y - X @ beta
    quad = float(r @ groups.h_inv(r, lam))
    n, p = X.shape
    dof = n - p if reml else n
    sigma2 = quad / dof
    ll = -0.5 * dof * (math.log(2 * math.pi * sigma2) + 1.0) - 0.5 * groups.logdet(lam)
    if reml:
        ll -= 0.5 * np.linalg.slogdet(A)[1]
    return ll, beta, sigma2, A


@dataclass
class LmmFit:
    names: list
    beta: np.ndarray
    se: np.ndarray
    sigma_b2: float
    sigma2: float
    loglik: float
    group_levels: list
    group_effects: np.ndarray     # predicted random intercepts (BLUPs)
    n_obs: int
    method: str = "ml"
    formula: str = ""
    covariance: np.ndarray = field(default=None, repr=False)

    @property
    def t(self):
        return self.beta / self.se

    @property
    def ratio(self):
        return self.sigma_b2 / self.sigma2 if self.sigma2 > 0 else 0.0

    def coef(self, name):
        return float(self.beta[self.names.index(name)])

    def group_intercepts(self):
        """Fixed intercept plus each group's predicted deviation."""
        base = self.coef("(Intercept)") if "(Intercept)" in self.names else 0.0
        return {g: base + float(u) for g, u in zip(self.group_levels, self.group_effects)}

    def summary_rows(self, threshold=1.96):
        rows = []
        for name, b, s, t in zip(self.names, self.beta, self.se, self.t):
            rows.append({"term": name, "estimate": float(b), "std_error": float(s),
                         "t_value": float(t), "approx_significant": bool(abs(t) >= threshold)})
        return rows

    def summary_table(self, threshold=1.96) -> str:
        lines = [f"# formula\t{self.formula}",
                 f"# method\t{self.method}\tn\t{self.n_obs}\tgroups\t{len(self.group_levels)}",
                 f"# loglik\t{self.loglik:.6f}",
                 f"# random\tlanguage_intercept_variance\t{self.sigma_b2:.6g}",
                 f"# random\tresidual_variance\t{self.sigma2:.6g}",
                 f"# significance is approximate: |t| >= {threshold}",
                 "term\testimate\tstd_error\tt_value\tapprox_significant"]
        for r in self.summary_rows(threshold):
            lines.append(f"{r['term']}\t{r['estimate']:.4f}\t{r['std_error']:.4f}\t"
                         f"{r['t_value']:.3f}\t{'*' if r['approx_significant'] else ''}")
        return "\n".join(lines) + "\n"


def _golden(f, lo, hi, tol, max_iter=500):
    """Maximise a unimodal ``f`` on [lo, hi]."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            return (a + b) / 2.0
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    raise LmmConvergenceError((a, b), max_iter)


def fit_arrays(X, y, groups, names=None, method="ml", tol=1e-8, grid=73) -> LmmFit:
    """Fit the random-intercept model to a design matrix and group labels."""
    if method not in ("ml", "reml"):
        raise ValueError("method must be 'ml' or 'reml'")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    names = list(names) if names is not None else [f"x{i}" for i in range(X.shape[1])]
    check_rank(X, names)
    g = _Groups(groups)
    if len(g.levels) < 2:
        raise ValueError("need at least two groups")
    if X.shape[0] <= X.shape[1]:
        raise ValueError("more observations than fixed effects are required")
    reml = method == "reml"

    def ll_log(theta):
        return _profile(X, y, g, math.exp(theta), reml)[0]

    thetas = np.linspace(*_LOG_LAM_RANGE, grid)
    values = [ll_log(t) for t in thetas]
    k = int(np.argmax(values))
    lo, hi = thetas[max(k - 1, 0)], thetas[min(k + 1, grid - 1)]
    theta = _golden(ll_log, lo, hi, tol)
    lam = math.exp(theta)
    if _profile(X, y, g, 0.0, reml)[0] >= ll_log(theta):
        lam = 0.0
    ll, beta, sigma2, A = _profile(X, y, g, lam, reml)
    cov = sigma2 * np.linalg.inv(A)
    r = y - X @ beta
    effects = lam * g.sums(r) / (1.0 + lam * g.sizes)
    return LmmFit(names=names, beta=beta, se=np.sqrt(np.diag(cov)), sigma_b2=lam * sigma2,
                  sigma2=sigma2, loglik=ll, group_levels=list(g.levels), group_effects=effects,
                  n_obs=len(y), method=method, covariance=cov)


def loglik_at(X, y, groups, lam, method="ml"):
    """Profiled log-likelihood at a fixed variance ratio."""
    return _profile(np.asarray(X, float), np.asarray(y, float), _Groups(groups), lam,
                    method == "reml")[0]


# ---------------------------------------------------------------- records

def records_frame(records, high_resource=HIGH_RESOURCE, scale=True) -> dict:
    """Columns for regression from ResultRecords, predictors in interpretation units."""
    high = set(high_resource)
    rows = list(records)
    f = (lambda name, v: v / SCALES[name]) if scale else (lambda name, v: float(v))
    return {
        "score": [r.score for r in rows],
        "accuracy": [r.score for r in rows],
        "language": [r.language for r in rows],
        "task": [r.task for r in rows],
        "setting": [r.setting for r in rows],
        "resource": ["high" if r.language in high else "low" for r in rows],
        "lapt_steps": [f("lapt_steps", r.lapt_steps) for r in rows],
        "vocab_size": [f("vocab_size", r.vocab_size) for r in rows],
        "finetuning_lines": [f("finetuning_lines", r.finetuning_lines) for r in rows],
        "lapt_alpha": [f("lapt_alpha", r.alpha) for r in rows],
        "seed": [r.seed for r in rows],
    }


def fit_lmm(data, formula=FINETUNED_FORMULA, group=None, method="ml",
            high_resource=HIGH_RESOURCE) -> LmmFit:
    """Fit ``formula`` to a column dict or a sequence of ResultRecords.

    The grouping factor comes from a ``(1 | g)`` term or ``group``.
    """
    if not isinstance(data, dict):
        data = records_frame(data, high_resource)
    spec = parse_formula(formula)
    group = group or spec.group
    if group is None:
        raise ValueError("no grouping factor: add '(1 | language)' or pass group=")
    X, names = design_matrix(data, spec)
    fit = fit_arrays(X, data[spec.response], data[group], names, method)
    fit.formula = formula
    return fit


def write_summary(path, fit: LmmFit):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(fit.summary_table())
