"""Reference probabilistic classifiers: Gaussian naive Bayes and multinomial logistic regression."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .errors import InvalidArgumentError, NumericalError

VAR_FLOOR_REL = 1e-9


def _check_query(X, d):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != d:
        raise InvalidArgumentError(f"expected {d} features, got {X.shape[1]}")
    return X, single


@dataclass(frozen=True, eq=False)
class GaussianNB:
    """Per-class axis-aligned Gaussians.

    Attributes
    ----------
    means, variances : ndarray, shape (K, d)
    priors : ndarray, shape (K,)
    var_floor : float
        Lower bound applied to every variance.
    """

    means: np.ndarray
    variances: np.ndarray
    priors: np.ndarray
    var_floor: float

    @property
    def n_features(self):
        return self.means.shape[1]

    @property
    def n_classes(self):
        return self.means.shape[0]

    def joint_log_likelihood(self, X) -> np.ndarray:
        X, _ = _check_query(X, self.n_features)
        diff = X[:, None, :] - self.means[None, :, :]
        ll = -0.5 * np.sum(np.log(2.0 * np.pi * self.variances)[None] + diff ** 2 / self.variances[None],
                           axis=2)
        return ll + np.log(self.priors)[None, :]

    def predict_proba(self, X) -> np.ndarray:
        _, single = _check_query(X, self.n_features)
        jll = self.joint_log_likelihood(X)
        out = np.exp(jll - logsumexp(jll, axis=1, keepdims=True))
        out /= out.sum(axis=1, keepdims=True)
        return out[0] if single else out


def fit_gnb(train) -> GaussianNB:
    """Maximum-likelihood Gaussian naive Bayes.

    Variances are floored at ``1e-9`` times the largest pooled feature
    variance (``1e-9`` absolute when every feature is constant).
    """
    X = np.asarray(train.features, dtype=np.float64)
    y = np.asarray(train.labels)
    K = int(train.n_classes)
    n_per = np.bincount(y, minlength=K)
    if np.any(n_per == 0):
        missing = np.flatnonzero(n_per == 0).tolist()
        raise InvalidArgumentError(f"classes {missing} have no training items")
    means = np.stack([X[y == k].mean(axis=0) for k in range(K)])
    variances = np.stack([X[y == k].var(axis=0) for k in range(K)])
    pooled = float(np.max(X.var(axis=0))) if X.shape[0] > 1 else 0.0
    floor = VAR_FLOOR_REL * pooled if pooled > 0 else VAR_FLOOR_REL
    variances = np.maximum(variances, floor)
    priors = n_per / n_per.sum()
    return GaussianNB(means, variances, priors, floor)


@dataclass(frozen=True, eq=False)
class LinearLogit:
    """Multinomial logistic model ``softmax(x @ W.T + b)``."""

    weights: np.ndarray
    bias: np.ndarray
    converged: bool = True
    n_iter: int = 0
    grad_inf_norm: float = 0.0
    loss_history: tuple = field(default=(), repr=False)

    @property
    def n_features(self):
        return self.weights.shape[1]

    @property
    def n_classes(self):
        return self.weights.shape[0]

    def decision_function(self, X) -> np.ndarray:
        X, _ = _check_query(X, self.n_features)
        return X @ self.weights.T + self.bias[None, :]

    def predict_proba(self, X) -> np.ndarray:
        _, single = _check_query(X, self.n_features)
        out = softmax(self.decision_function(X), axis=1)
        out /= out.sum(axis=1, keepdims=True)
        return out[0] if single else out


def logit_objective(theta, X, Y, l2):
    """Mean multinomial NLL plus ``l2/2 * ||W||^2`` (bias unpenalized) and its gradient.

    ``theta`` packs ``W`` (K x d, row-major) followed by ``b`` (K).
    """
    n, d = X.shape
    K = Y.shape[1]
    W = theta[:K * d].reshape(K, d)
    b = theta[K * d:]
    Z = X @ W.T + b
    lse = logsumexp(Z, axis=1)
    loss = float(np.mean(lse - np.sum(Y * Z, axis=1)) + 0.5 * l2 * np.sum(W * W))
    R = (np.exp(Z - lse[:, None]) - Y) / n
    gW = R.T @ X + l2 * W
    gb = R.sum(axis=0)
    return loss, np.concatenate([gW.ravel(), gb])


def fit_logit(train, l2: float = 1e-3, max_iter: int = 500, tol: float = 1e-6) -> LinearLogit:
    """L2-regularized multinomial logistic regression fitted with L-BFGS.

    Converged when the gradient infinity-norm drops below ``tol``;
    otherwise the model after ``max_iter`` iterations is returned with
    ``converged=False``.
    """
    if l2 < 0:
        raise InvalidArgumentError("l2 must be >= 0")
    X = np.asarray(train.features, dtype=np.float64)
    y = np.asarray(train.labels)
    K = int(train.n_classes)
    n, d = X.shape
    if n < K:
        raise InvalidArgumentError("need at least K training items")
    Y = np.eye(K)[y]
    history = []

    def fun(theta):
        loss, grad = logit_objective(theta, X, Y, l2)
        if not np.isfinite(loss):
            raise NumericalError("non-finite logistic loss")
        return loss, grad

    theta0 = np.zeros(K * d + K)
    res = minimize(fun, theta0, jac=True, method="L-BFGS-B",
                   callback=lambda xk: history.append(fun(xk)[0]),
                   options={"maxiter": int(max_iter), "gtol": float(tol), "ftol": 0.0})
    loss, grad = fun(res.x)
    if not np.all(np.isfinite(res.x)):
        raise NumericalError("non-finite logistic parameters")
    gnorm = float(np.max(np.abs(grad)))
    return LinearLogit(res.x[:K * d].reshape(K, d).copy(), res.x[K * d:].copy(),
                       converged=gnorm < tol, n_iter=int(res.nit), grad_inf_norm=gnorm,
                       loss_history=tuple(history))


def predict_proba(model, X) -> np.ndarray:
    if not isinstance(model, (GaussianNB, LinearLogit)):
        raise InvalidArgumentError(f"unsupported model type {type(model).__name__}")
    return model.predict_proba(X)
