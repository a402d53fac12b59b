"""OS-ELM classifier: a single hidden layer with fixed random input weights
and output weights learned by recursive least squares.

The estimator follows the scikit-learn API. ``fit`` performs the initial
regularized batch solve and ``partial_fit`` applies one rank-1 sequential
update per sample, so the model can be dropped into pipelines or driven one
sample at a time by an edge device.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import numerics as nx
from .hashweights import HashedWeights, StoredWeights

CHECKPOINT_VERSION = 1


class NumericalError(ArithmeticError):
    """A sequential update produced a non-finite or saturated state.

    The model is left exactly as it was before the offending update.
    """


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    predicted_class: int
    hidden: np.ndarray
    raw: np.ndarray


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def initial_solve(H, Y, reg_lambda=0.0):
    """Batch solve on hidden outputs: ``P = (H'H + lambda I)^-1``, ``beta = P H' Y``.

    Raises ``LinAlgError`` when ``H'H + lambda I`` is singular.
    """
    H = np.asarray(H, dtype=np.float64)
    N = H.shape[1]
    try:
        P = nx.solve_spd(H.T @ H + reg_lambda * np.eye(N), np.eye(N))
    except nx.NotPositiveDefiniteError as exc:
        raise np.linalg.LinAlgError(
            f"initial batch is singular ({len(H)} samples for {N} hidden nodes, "
            f"reg_lambda={reg_lambda}): {exc}"
        ) from exc
    P = 0.5 * (P + P.T)
    return P, P @ (H.T @ np.asarray(Y, dtype=np.float64))


def rls_step(P, beta, h, y):
    """One rank-1 recursive least squares update, returning new ``(P, beta)``.

    Raises
    ------
    NumericalError
        If the denominator ``1 + h'Ph`` is not positive or the result is not finite.
    """
    Ph = P @ h
    denom = 1.0 + h @ Ph
    if not denom > 0.0:
        raise NumericalError(f"update denominator {denom!r} is not positive")
    gain = Ph / denom
    P_new = P - np.outer(gain, Ph)
    P_new = 0.5 * (P_new + P_new.T)
    beta_new = beta + np.outer(gain, y - h @ beta)
    if not (np.all(np.isfinite(P_new)) and np.all(np.isfinite(beta_new))):
        raise NumericalError("sequential update produced non-finite values")
    return P_new, beta_new


class OSELMClassifier(ClassifierMixin, BaseEstimator):
    """Online sequential extreme learning machine classifier.

    Parameters
    ----------
    n_hidden : int
        Number of hidden nodes ``N``.
    weights : {"hash", "stored"} or weight source
        ``"hash"`` regenerates the input weights from a 16-bit Xorshift seed,
        ``"stored"`` keeps a random 32-bit weight matrix. A ``HashedWeights``
        or ``StoredWeights`` instance is used as is.
    alpha_seed : int or None
        Xorshift seed for ``weights="hash"``. Drawn from ``random_state`` when None.
    alpha_scale : float
        Input weights lie in ``[-alpha_scale, alpha_scale)``.
    reg_lambda : float
        Ridge term of the initial batch solve.
    scalar : {"float64", "float32", "fixed"}
        Arithmetic used for prediction and sequential updates. ``"fixed"`` is
        saturating Q16.16.
    n_classes : int or None
        Number of output nodes. When None, inferred from ``y`` in ``fit``.
        Labels are class indices ``0 .. n_classes-1``.
    random_state : int or None
        Seeds the weight draw.
    """

    def __init__(
        self,
        n_hidden=128,
        weights="hash",
        alpha_seed=None,
        alpha_scale=1.0,
        reg_lambda=1e-3,
        scalar="float64",
        n_classes=None,
        random_state=None,
    ):
        self.n_hidden = n_hidden
        self.weights = weights
        self.alpha_seed = alpha_seed
        self.alpha_scale = alpha_scale
        self.reg_lambda = reg_lambda
        self.scalar = scalar
        self.n_classes = n_classes
        self.random_state = random_state

    # -- construction -----------------------------------------------------

    def _make_weights(self, n_features):
        if isinstance(self.weights, (HashedWeights, StoredWeights)):
            return self.weights
        rng = np.random.default_rng(self.random_state)
        if self.weights == "hash":
            seed = self.alpha_seed
            if seed is None:
                seed = int(rng.integers(1, 1 << 16))
            return HashedWeights(int(seed), float(self.alpha_scale))
        if self.weights == "stored":
            return StoredWeights.random(n_features, self.n_hidden, rng, self.alpha_scale)
        raise ValueError(f"unknown weights kind {self.weights!r}")

    def _alpha(self):
        a = self.alpha_.matrix(self.n_features_in_, self.n_hidden)
        if self.scalar == "fixed":
            if getattr(self, "_alpha_fx", None) is None:
                self._alpha_fx = nx.to_fixed(a)
            return self._alpha_fx
        if self.scalar == "float32":
            return a.astype(np.float32)
        return a

    def _onehot(self, y):
        y = np.asarray(y)
        if y.ndim == 2:
            if y.shape[1] != self.n_outputs_:
                raise ValueError(f"one-hot targets need {self.n_outputs_} columns, got {y.shape[1]}")
            return y.astype(np.float64)
        y = y.astype(np.int64)
        if np.any((y < 0) | (y >= self.n_outputs_)):
            raise ValueError(f"labels must lie in [0, {self.n_outputs_})")
        return np.eye(self.n_outputs_)[y]

    # -- forward pass -----------------------------------------------------

    def hidden(self, X):
        """Hidden layer outputs ``G1(X @ alpha)`` in the model's scalar mode."""
        if self.scalar == "fixed":
            pre = nx.fx_matmul(nx.to_fixed(X), self._alpha())
            return nx.to_fixed(sigmoid(nx.from_fixed(pre)))
        dtype = np.float32 if self.scalar == "float32" else np.float64
        return sigmoid(np.asarray(X, dtype=dtype) @ self._alpha()).astype(dtype)

    def _raw(self, H):
        if self.scalar == "fixed":
            return nx.from_fixed(nx.fx_matmul(H, self.beta_))
        return np.asarray(H @ self.beta_, dtype=np.float64)

    def decision_function(self, X):
        check_is_fitted(self, "beta_")
        X = check_array(X)
        self._check_n_features(X)
        return self._raw(self.hidden(X))

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def predict_sample(self, x) -> Prediction:
        """Predict a single sample, returning probabilities and the hidden vector."""
        check_is_fitted(self, "beta_")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.n_features_in_:
            raise ValueError(
                f"expected a sample of length {self.n_features_in_}, got shape {x.shape}"
            )
        h = self.hidden(x[None, :])[0]
        raw = self._raw(h[None, :])[0]
        probs = softmax(raw)
        return Prediction(probs, int(np.argmax(probs)), h, raw)

    def _check_n_features(self, X):
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but the model expects {self.n_features_in_}"
            )

    # -- training ---------------------------------------------------------

    def fit(self, X, y):
        """Initial batch training: ``P = (H'H + lambda I)^-1``, ``beta = P H' Y``."""
        nx.check_mode(self.scalar)
        X, y = check_X_y(X, y, multi_output=np.ndim(y) == 2)
        self.n_features_in_ = X.shape[1]
        if np.ndim(y) == 2:
            m = y.shape[1]
        else:
            m = self.n_classes if self.n_classes is not None else int(np.max(y)) + 1
        if m < 2:
            raise ValueError("at least two output classes are required")
        self.n_outputs_ = int(m)
        self.classes_ = np.arange(self.n_outputs_)
        self.alpha_ = self._make_weights(X.shape[1])
        self._alpha_fx = None

        H = nx.to_float(self.hidden(X), self.scalar)
        P, beta = initial_solve(H, self._onehot(y), self.reg_lambda)
        self.P_ = nx.as_mode(P, self.scalar)
        self.beta_ = nx.as_mode(beta, self.scalar)
        self.trained_count_ = len(X)
        return self

    def partial_fit(self, X, y):
        """Sequential training, one rank-1 update per row of ``X``."""
        if not hasattr(self, "beta_"):
            return self.fit(X, y)
        X = check_array(X)
        self._check_n_features(X)
        Y = self._onehot(y)
        for x, t in zip(X, Y):
            self.seq_train(x, t)
        return self

    def seq_train(self, x, y):
        """One recursive least squares update with sample ``x`` and target ``y``.

        ``y`` is a class index or a one-hot vector. Raises :class:`NumericalError`
        (without touching the model) if the update is not finite or saturates.
        """
        check_is_fitted(self, "beta_")
        x = np.asarray(x, dtype=np.float64)
        y = self._onehot(np.asarray(y)[None] if np.ndim(y) == 0 else np.asarray(y)[None, :])[0]
        h = self.hidden(x[None, :])[0]
        if self.scalar == "fixed":
            P, beta = self._update_fixed(h, nx.to_fixed(y))
        else:
            P, beta = self._update_float(h, y)
        self.P_, self.beta_ = P, beta
        self.trained_count_ += 1
        return self

    def _update_float(self, h, y):
        dtype = self.P_.dtype
        P_new, beta_new = rls_step(self.P_, self.beta_, h, y.astype(dtype))
        return P_new.astype(dtype), beta_new.astype(dtype)

    def _update_fixed(self, h, y):
        P = self.P_
        Ph = nx.fx_matmul(P, h)
        denom = nx.ONE + nx.fx_matmul(h, Ph)
        if denom <= 0:
            raise NumericalError(f"update denominator {denom / nx.ONE!r} is not positive")
        gain = nx.fx_div(Ph, denom)
        P_new = P - nx.fx_mul(gain[:, None], Ph[None, :])
        P_new = nx._round_shift(P_new + P_new.T, 1)
        err = y - nx.fx_matmul(h, self.beta_)
        beta_new = self.beta_ + nx.fx_mul(gain[:, None], err[None, :])
        if nx.is_saturated(P_new) or nx.is_saturated(beta_new) or nx.is_saturated(err):
            raise NumericalError("fixed-point saturation during sequential update")
        return P_new, beta_new

    # -- introspection ----------------------------------------------------

    @property
    def beta_float_(self):
        return nx.to_float(self.beta_, self.scalar)

    @property
    def P_float_(self):
        return nx.to_float(self.P_, self.scalar)


def save_checkpoint(model: OSELMClassifier, path) -> None:
    """Write a fitted model to an ``.npz`` checkpoint (bitwise round trip)."""
    check_is_fitted(model, "beta_")
    src = model.alpha_
    fields = dict(
        version=np.int64(CHECKPOINT_VERSION),
        scalar=np.str_(model.scalar),
        shape=np.array([model.n_features_in_, model.n_hidden, model.n_outputs_], dtype=np.int64),
        reg_lambda=np.float64(model.reg_lambda),
        beta=model.beta_,
        P=model.P_,
        trained_count=np.int64(model.trained_count_),
    )
    if isinstance(src, HashedWeights):
        fields.update(weights=np.str_("hash"), alpha_seed=np.int64(src.seed),
                      alpha_scale=np.float64(src.scale))
    else:
        fields.update(weights=np.str_("stored"), alpha=src.alpha)
    with open(path, "wb") as fh:
        np.savez(fh, **fields)


def load_checkpoint(path) -> OSELMClassifier:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        n, N, m = (int(v) for v in z["shape"])
        if str(z["weights"]) == "hash":
            weights = HashedWeights(int(z["alpha_seed"]), float(z["alpha_scale"]))
        else:
            weights = StoredWeights(np.array(z["alpha"]))
        model = OSELMClassifier(
            n_hidden=N,
            weights=weights,
            reg_lambda=float(z["reg_lambda"]),
            scalar=str(z["scalar"]),
            n_classes=m,
        )
        model.n_features_in_ = n
        model.n_outputs_ = m
        model.classes_ = np.arange(m)
        model.alpha_ = weights
        model._alpha_fx = None
        model.beta_ = np.array(z["beta"])
        model.P_ = np.array(z["P"])
        model.trained_count_ = int(z["trained_count"])
    return model
