"""scikit-learn compatible wrappers around the kernel smoothers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._base import LocalPolyConfig
from .local import estimate_propensity, local_linear_nd, local_poly


class LocalPolynomialRegressor(RegressorMixin, BaseEstimator):
    """Local constant (degree 0) or local linear (degree 1) kernel regression.

    With one feature the sorted-window smoother is used, otherwise a product
    kernel fit. ``bandwidth=None`` uses the rule of thumb per feature.
    """

    def __init__(self, bandwidth=None, degree=1, kernel="epanechnikov"):
        self.bandwidth = bandwidth
        self.degree = degree
        self.kernel = kernel

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.config_ = LocalPolyConfig(self.bandwidth, self.degree, self.kernel)
        self.X_ = X
        self.y_ = y
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        if self.n_features_in_ == 1:
            values, _ = local_poly(self.X_[:, 0], self.y_, X[:, 0], self.config_)
            return values
        values, _, _ = local_linear_nd(
            self.X_, self.y_, X, bandwidth=self.bandwidth, kernel=self.kernel, degree=self.degree
        )
        return values

    def gradient(self, X):
        """First derivatives of the fit, shape (n, n_features); needs degree 1."""
        check_is_fitted(self, "X_")
        if self.degree != 1:
            raise ValueError("derivatives need degree=1")
        X = check_array(X)
        if self.n_features_in_ == 1:
            _, slopes = local_poly(self.X_[:, 0], self.y_, X[:, 0], self.config_)
            return slopes[:, None]
        _, grads, _ = local_linear_nd(self.X_, self.y_, X, bandwidth=self.bandwidth, kernel=self.kernel)
        return np.moveaxis(grads, 0, -1).reshape(X.shape[0], -1)


class PropensityScore(BaseEstimator):
    """Kernel estimate of P(R = 1 | Z = z), clipped to [0, 1]."""

    def __init__(self, bandwidth=None, kernel="epanechnikov"):
        self.bandwidth = bandwidth
        self.kernel = kernel

    def fit(self, Z, r):
        Z, r = check_X_y(Z, r)
        if not np.all((r == 0) | (r == 1)):
            raise ValueError("r must be 0 or 1")
        self.Z_ = Z
        self.r_ = r.astype(float)
        self.n_features_in_ = Z.shape[1]
        return self

    def predict(self, Z):
        check_is_fitted(self, "Z_")
        Z = check_array(Z)
        config = LocalPolyConfig(self.bandwidth, 0, self.kernel)
        return estimate_propensity(self.r_, self.Z_, Z, config)

    def transform(self, Z):
        return self.predict(Z)[:, None]

    def fit_transform(self, Z, r):
        return self.fit(Z, r).transform(Z)
