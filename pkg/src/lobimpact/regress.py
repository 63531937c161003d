"""Impact model fitting: OLS, CART regression tree, power law and Kyle's lambda.

The estimators follow the scikit-learn API (``fit``/``predict``,
``get_params``) so they can be cloned, cross-validated and dropped into
pipelines.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.model_selection import KFold, train_test_split
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class SingularMatrixError(LinAlgError):
    """The normal-equations matrix is not positive definite."""


def _as_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X.reshape(-1, 1) if X.ndim == 1 else X


# --------------------------------------------------------------------------
# OLS


class OLSRegressor(RegressorMixin, BaseEstimator):
    """Ordinary least squares via the normal equations with an intercept.

    Attributes
    ----------
    intercept_, coef_ : fitted coefficients
    beta_ : intercept followed by coef_
    xtx_inv_ : inverse of the (intercept-augmented) normal matrix
    sigma2_ : residual variance RSS / (n - p - 1)
    tvalues_ : t statistics aligned with ``beta_``
    """

    def fit(self, X, y):
        X, y = check_X_y(_as_features(X), y, y_numeric=True)
        n, p = X.shape
        if n <= p + 1:
            raise ValueError(f"need more than {p + 1} samples for {p} feature(s), got {n}")
        design = np.column_stack([np.ones(n), X])
        xtx = design.T @ design
        if np.linalg.matrix_rank(design) < p + 1:
            raise SingularMatrixError("design matrix is rank deficient; X^T X is not positive definite")
        try:
            factor = cho_factor(xtx)
        except LinAlgError as exc:
            raise SingularMatrixError("X^T X is not positive definite") from exc
        beta = cho_solve(factor, design.T @ y)
        # one refinement step tightens residual orthogonality for badly scaled inputs
        beta = beta + cho_solve(factor, design.T @ (y - design @ beta))

        resid = y - design @ beta
        self.beta_ = beta
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        self.xtx_inv_ = cho_solve(factor, np.eye(p + 1))
        self.rss_ = float(resid @ resid)
        self.n_samples_ = n
        self.n_features_in_ = p
        self.sigma2_ = self.rss_ / (n - p - 1)
        self.tvalues_ = _t_values(beta, self.sigma2_, np.diag(self.xtx_inv_), y)
        return self

    def predict(self, X):
        check_is_fitted(self, "beta_")
        X = check_array(_as_features(X))
        return self.intercept_ + X @ self.coef_

    @property
    def n_params_(self) -> int:
        return self.n_features_in_ + 1


def _t_values(beta, sigma2, v, y) -> np.ndarray:
    sigma = math.sqrt(sigma2)
    scale = max(1.0, float(np.max(np.abs(y)))) if len(y) else 1.0
    if sigma <= 1e-12 * scale:
        # zero-residual limit: every non-zero coefficient is infinitely significant
        return np.where(beta == 0, 0.0, np.copysign(np.inf, beta))
    return beta / (sigma * np.sqrt(v))


def ols_fit(x, y) -> OLSRegressor:
    return OLSRegressor().fit(x, y)


def t_statistics(model: OLSRegressor) -> np.ndarray:
    """Per-coefficient t values (intercept first)."""
    check_is_fitted(model, "tvalues_")
    return model.tvalues_


# --------------------------------------------------------------------------
# goodness of fit


@dataclass(frozen=True)
class FitMetrics:
    mse: float
    r2: float
    adjusted_r2: float
    aic: float
    bic: float
    n: int
    k: int

    def as_dict(self) -> dict:
        return asdict(self)


def _n_params(model) -> int:
    n_params = getattr(model, "n_params_", None)
    if n_params is None:
        n_params = getattr(model, "n_features_in_", 1) + 1
    return int(n_params)


def evaluate(model, X, y) -> FitMetrics:
    """MSE, R^2, adjusted R^2 and Gaussian AIC/BIC of ``model`` on ``(X, y)``.

    R^2 is NaN when ``y`` is constant. The likelihood uses the ML variance
    RSS/n and counts the variance as one extra parameter.
    """
    X = _as_features(X)
    y = np.asarray(y, dtype=float)
    if len(X) != len(y) or len(y) == 0:
        raise ValueError("X and y must be non-empty and of equal length")
    n = len(y)
    resid = y - model.predict(X)
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else math.nan
    p = X.shape[1]
    dof = n - p - 1
    adj = 1.0 - (1.0 - r2) * (n - 1) / dof if dof > 0 else math.nan
    k = _n_params(model) + 1
    if rss > 0:
        loglik = -0.5 * n * (math.log(2 * math.pi * rss / n) + 1)
    else:
        loglik = math.inf
    return FitMetrics(
        mse=rss / n,
        r2=r2,
        adjusted_r2=adj,
        aic=-2 * loglik + 2 * k,
        bic=-2 * loglik + math.log(n) * k,
        n=n,
        k=k,
    )


# --------------------------------------------------------------------------
# regression tree

_LEAF = -1


class RegressionTree(RegressorMixin, BaseEstimator):
    """CART regression tree grown by greedy variance reduction.

    Candidate thresholds are midpoints between consecutive distinct feature
    values; ``x <= threshold`` goes left. Among equally good splits the lowest
    feature index, then the lowest threshold, wins. Growth stops at
    ``max_depth``, when a child would hold fewer than ``min_samples_leaf``
    samples, or when a node's targets are constant.
    """

    def __init__(self, max_depth=None, min_samples_leaf=1):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y):
        X, y = check_X_y(_as_features(X), y, y_numeric=True)
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if len(y) < self.min_samples_leaf:
            raise ValueError(f"need at least min_samples_leaf={self.min_samples_leaf} samples")
        max_depth = math.inf if self.max_depth is None else self.max_depth

        feature, threshold, left, right, value, count = [], [], [], [], [], []

        def new_node(idx):
            feature.append(_LEAF)
            threshold.append(math.nan)
            left.append(_LEAF)
            right.append(_LEAF)
            value.append(float(np.mean(y[idx])))
            count.append(len(idx))
            return len(value) - 1

        root = new_node(np.arange(len(y)))
        stack = [(root, np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            if depth >= max_depth or len(idx) < 2 * self.min_samples_leaf:
                continue
            ys = y[idx]
            if ys.max() == ys.min():
                continue
            split = best_split(X[idx], ys, self.min_samples_leaf)
            if split is None:
                continue
            j, thr, _ = split
            go_left = X[idx, j] <= thr
            feature[node], threshold[node] = j, thr
            li, ri = idx[go_left], idx[~go_left]
            left[node] = new_node(li)
            right[node] = new_node(ri)
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))

        self.feature_ = np.array(feature, dtype=np.int64)
        self.threshold_ = np.array(threshold, dtype=float)
        self.children_left_ = np.array(left, dtype=np.int64)
        self.children_right_ = np.array(right, dtype=np.int64)
        self.value_ = np.array(value, dtype=float)
        self.n_node_samples_ = np.array(count, dtype=np.int64)
        self.n_features_in_ = X.shape[1]
        return self

    def apply(self, X) -> np.ndarray:
        """Index of the leaf each sample lands in."""
        check_is_fitted(self, "value_")
        X = check_array(_as_features(X))
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature_[node] != _LEAF
        while active.any():
            cur = node[active]
            go_left = X[active, self.feature_[cur]] <= self.threshold_[cur]
            node[active] = np.where(go_left, self.children_left_[cur], self.children_right_[cur])
            active = self.feature_[node] != _LEAF
        return node

    def predict(self, X):
        return self.value_[self.apply(X)]

    @property
    def n_leaves_(self) -> int:
        check_is_fitted(self, "value_")
        return int(np.sum(self.feature_ == _LEAF))

    @property
    def n_params_(self) -> int:
        return self.n_leaves_

    def get_depth(self) -> int:
        check_is_fitted(self, "value_")
        depth = np.zeros(len(self.value_), dtype=np.int64)
        for node in range(len(self.value_)):
            if self.feature_[node] != _LEAF:
                depth[self.children_left_[node]] = depth[node] + 1
                depth[self.children_right_[node]] = depth[node] + 1
        return int(depth.max())


def best_split(X: np.ndarray, y: np.ndarray, min_samples_leaf: int = 1):
    """Best ``(feature, threshold, children_sse)`` or None if no valid split."""
    n = len(y)
    yc = y - y.mean()
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], yc[order]
        cs = np.cumsum(ys)
        cq = np.cumsum(ys * ys)
        # i = number of samples sent left
        i = np.arange(min_samples_leaf, n - min_samples_leaf + 1)
        i = i[xs[i - 1] < xs[i]]
        if i.size == 0:
            continue
        sl, ql = cs[i - 1], cq[i - 1]
        sr, qr = cs[-1] - sl, cq[-1] - ql
        sse = (ql - sl * sl / i) + (qr - sr * sr / (n - i))
        k = int(np.argmin(sse))
        if best is None or sse[k] < best[2]:
            lo, hi = xs[i[k] - 1], xs[i[k]]
            thr = lo / 2 + hi / 2
            if thr >= hi or thr < lo:
                thr = lo
            best = (j, float(thr), float(sse[k]))
    return best


def tree_fit(x, y, max_depth=None, min_samples_leaf: int = 1) -> RegressionTree:
    return RegressionTree(max_depth=max_depth, min_samples_leaf=min_samples_leaf).fit(x, y)


def tree_predict(tree: RegressionTree, x) -> np.ndarray:
    return tree.predict(x)


# --------------------------------------------------------------------------
# power law and Kyle's lambda


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """``G = prefactor * (Q/V) ** exponent`` fitted by OLS in log-log space."""

    def fit(self, X, y):
        X, y = check_X_y(_as_features(X), y, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError("power law takes a single feature")
        if (X <= 0).any() or (y <= 0).any():
            raise ValueError("power-law fit needs strictly positive volume fractions and impacts")
        self.log_model_ = OLSRegressor().fit(np.log(X), np.log(y))
        self.exponent_ = float(self.log_model_.coef_[0])
        self.prefactor_ = math.exp(self.log_model_.intercept_)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "exponent_")
        X = check_array(_as_features(X))
        return self.prefactor_ * X[:, 0] ** self.exponent_

    n_params_ = 2


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    model: PowerLawRegressor = field(repr=False)


def power_law_fit(volume_fraction, impact) -> PowerLawFit:
    est = PowerLawRegressor().fit(volume_fraction, impact)
    return PowerLawFit(est.exponent_, est.prefactor_, est)


class KyleLambdaRegressor(RegressorMixin, BaseEstimator):
    """Slope of mid change on signed volume inside the linear region.

    The region is ``|dV| <= cutoff`` with ``cutoff`` either
    ``max_abs_imbalance`` or the ``quantile`` of ``|dV|``.
    """

    def __init__(self, quantile=0.5, max_abs_imbalance=None, min_samples=30):
        self.quantile = quantile
        self.max_abs_imbalance = max_abs_imbalance
        self.min_samples = min_samples

    def fit(self, X, y):
        X, y = check_X_y(_as_features(X), y, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError("Kyle's lambda takes a single feature (signed volume)")
        dv = X[:, 0]
        if self.max_abs_imbalance is not None:
            cutoff = float(self.max_abs_imbalance)
        else:
            if not 0 < self.quantile <= 1:
                raise ValueError("quantile must be in (0, 1]")
            cutoff = float(np.quantile(np.abs(dv), self.quantile))
        inside = np.abs(dv) <= cutoff
        n_in = int(inside.sum())
        if n_in < self.min_samples:
            raise ValueError(
                f"only {n_in} samples in linear region |dV| <= {cutoff:g}; need {self.min_samples}"
            )
        self.model_ = OLSRegressor().fit(X[inside], y[inside])
        self.lambda_ = float(self.model_.coef_[0])
        self.region_ = (-cutoff, cutoff)
        self.n_region_ = n_in
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "lambda_")
        return self.model_.predict(X)

    n_params_ = 2


@dataclass(frozen=True)
class KyleLambdaResult:
    lambda_: float
    intercept: float
    region: tuple[float, float]
    n_region: int
    model: OLSRegressor = field(repr=False)


def kyle_lambda(delta_v, delta_m=None, quantile: float = 0.5, max_abs_imbalance=None, min_samples: int = 30):
    """Kyle's lambda (cents per share) from imbalance samples.

    ``delta_v`` may be an ``ImbalanceSamples`` instance, in which case
    ``delta_m`` is taken from it.
    """
    if delta_m is None:
        delta_v, delta_m = delta_v.delta_v, delta_v.delta_m
    est = KyleLambdaRegressor(quantile, max_abs_imbalance, min_samples).fit(
        np.asarray(delta_v, dtype=float), delta_m
    )
    return KyleLambdaResult(est.lambda_, est.model_.intercept_, est.region_, est.n_region_, est.model_)


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class CVResult:
    folds: list[np.ndarray] = field(repr=False)
    mse: np.ndarray
    r2: np.ndarray

    @property
    def k(self) -> int:
        return len(self.folds)

    @property
    def mse_mean(self) -> float:
        return float(np.mean(self.mse))

    @property
    def mse_std(self) -> float:
        return float(np.std(self.mse))

    @property
    def r2_mean(self) -> float:
        return float(np.nanmean(self.r2)) if np.isfinite(self.r2).any() else math.nan

    @property
    def r2_std(self) -> float:
        return float(np.nanstd(self.r2)) if np.isfinite(self.r2).any() else math.nan

    def summary(self) -> dict:
        return {
            "k": self.k,
            "mse": self.mse.tolist(),
            "r2": [None if math.isnan(v) else v for v in self.r2.tolist()],
            "mse_mean": self.mse_mean,
            "mse_std": self.mse_std,
            "r2_mean": self.r2_mean,
            "r2_std": self.r2_std,
        }


def make_model(kind: str, **params):
    kinds = {
        "ols": OLSRegressor,
        "tree": RegressionTree,
        "powerlaw": PowerLawRegressor,
        "kyle": KyleLambdaRegressor,
    }
    try:
        return kinds[kind](**params)
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(kinds)}") from None


def kfold_splits(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Held-out index sets of a seeded shuffled k-fold partition."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    return [test for _, test in KFold(n_splits=k, shuffle=True, random_state=seed).split(np.empty((n, 1)))]


def kfold_cv(X, y, k: int = 10, model="ols", *, seed: int) -> CVResult:
    """Seeded k-fold cross-validation; the mean of fold MSEs is CV_k.

    The per-fold spread is reported as a population standard deviation.
    """
    X = _as_features(X)
    y = np.asarray(y, dtype=float)
    est = make_model(model) if isinstance(model, str) else model
    folds = kfold_splits(len(y), k, seed)
    mse, r2 = [], []
    all_idx = np.arange(len(y))
    for test in folds:
        train = np.setdiff1d(all_idx, test, assume_unique=True)
        fitted = clone(est).fit(X[train], y[train])
        m = evaluate(fitted, X[test], y[test])
        mse.append(m.mse)
        r2.append(m.r2)
    return CVResult(folds, np.array(mse), np.array(r2))


@dataclass(frozen=True)
class FitReport:
    model: str
    params: dict
    train: FitMetrics
    test: FitMetrics | None
    coefficients: dict
    cv: CVResult | None = None

    def as_dict(self) -> dict:
        out = {
            "model": self.model,
            "params": self.params,
            "coefficients": self.coefficients,
            "train": self.train.as_dict(),
            "test": None if self.test is None else self.test.as_dict(),
        }
        if self.cv is not None:
            out["cv"] = self.cv.summary()
        return out


def _coefficients(est) -> dict:
    if isinstance(est, OLSRegressor):
        return {
            "intercept": est.intercept_,
            "coef": est.coef_.tolist(),
            "t_values": est.tvalues_.tolist(),
            "sigma2": est.sigma2_,
        }
    if isinstance(est, KyleLambdaRegressor):
        return {"lambda": est.lambda_, "intercept": est.model_.intercept_, "region": list(est.region_),
                "n_region": est.n_region_, "t_values": est.model_.tvalues_.tolist()}
    if isinstance(est, PowerLawRegressor):
        return {"exponent": est.exponent_, "prefactor": est.prefactor_}
    if isinstance(est, RegressionTree):
        return {"n_leaves": est.n_leaves_, "depth": est.get_depth()}
    return {}


def fit_report(
    X, y, model="ols", *, test_fraction: float = 0.25, seed: int = 0, cv_folds: int | None = None
) -> FitReport:
    """Fit on a seeded random train split and score both partitions.

    With ``test_fraction=0`` the whole sample is used for training and no
    test metrics are reported. ``cv_folds`` adds k-fold cross-validation over
    the whole sample.
    """
    X = _as_features(X)
    y = np.asarray(y, dtype=float)
    est = make_model(model) if isinstance(model, str) else model
    name = model if isinstance(model, str) else type(model).__name__
    if test_fraction > 0:
        X_tr, X_te, y_tr, y_te = train_test_split(X, y, test_size=test_fraction, random_state=seed)
    else:
        X_tr, y_tr, X_te, y_te = X, y, None, None
    fitted = clone(est).fit(X_tr, y_tr)
    test = evaluate(fitted, X_te, y_te) if X_te is not None else None
    cv = kfold_cv(X, y, cv_folds, est, seed=seed) if cv_folds else None
    return FitReport(name, est.get_params(), evaluate(fitted, X_tr, y_tr), test, _coefficients(fitted), cv)
