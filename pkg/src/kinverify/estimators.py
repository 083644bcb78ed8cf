"""scikit-learn compatible verifiers built on the similarity heads.

Inputs are stacks of embeddings: ``X[i] = (x, y)`` with shape (n, 2, D) for
pairs, ``X[i] = (father, mother, child)`` with shape (n, 3, D) for triplets.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from . import heads as H
from .exceptions import ConfigError
from .fusion import FusionKind
from .jury import (
    DEFAULT_T_HIGH,
    DEFAULT_T_LOW,
    DEFAULT_T_MEDIAN,
    jury_predict_batch,
    validate_thresholds,
)
from .losses import DEFAULT_FOCAL_ALPHA, DEFAULT_FOCAL_GAMMA, LossKind
from .optim import TrainConfig, train
from .validation import check_binary_labels, check_stack


class _HeadParamsMixin:
    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr=self.lr,
            seed=self.random_state,
            loss=LossKind(self.loss, self.focal_alpha, self.focal_gamma),
            fusion=FusionKind.parse(self.fusion),
            shuffle=self.shuffle,
            triplet_objective=getattr(self, "objective", "joint"),
        )

    def _meta(self) -> dict[str, str]:
        return {
            "loss": str(self.loss),
            "focal_alpha": repr(float(self.focal_alpha)),
            "focal_gamma": repr(float(self.focal_gamma)),
            "lr": repr(float(self.lr)),
            "batch_size": str(self.batch_size),
            "epochs": str(self.epochs),
            "seed": str(self.random_state),
        }


class SiameseVerifier(_HeadParamsMixin, ClassifierMixin, BaseEstimator):
    """Pairwise kinship verifier: fused features -> fc1 (ReLU) -> fc2 -> sigmoid.

    Parameters
    ----------
    fusion : str
        One of ``cat``, ``sumdiff``, ``sumdiff_mul``, ``sqdiff``, ``sqdiff_mul``.
    loss : {"bce", "focal"}
    threshold : float
        A pair is predicted kin when its score strictly exceeds this value.
    random_state : int
        Seeds both weight initialisation and batch shuffling.
    """

    def __init__(
        self,
        fusion="sqdiff_mul",
        loss="bce",
        focal_alpha=DEFAULT_FOCAL_ALPHA,
        focal_gamma=DEFAULT_FOCAL_GAMMA,
        hidden_units=H.HIDDEN_UNITS,
        lr=0.001,
        batch_size=32,
        epochs=60,
        threshold=0.5,
        shuffle=True,
        random_state=0,
    ):
        self.fusion = fusion
        self.loss = loss
        self.focal_alpha = focal_alpha
        self.focal_gamma = focal_gamma
        self.hidden_units = hidden_units
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.threshold = threshold
        self.shuffle = shuffle
        self.random_state = random_state

    def fit(self, X, y):
        X = check_stack(X, 2)
        y = check_binary_labels(y, X.shape[0])
        config = self._train_config()
        head = H.init_head(config.fusion, X.shape[2], [self.random_state, 1], self.hidden_units)
        result = train(head, X, y, config)
        self.head_ = result.model
        self.loss_curve_ = result.loss_curve
        self.classes_ = np.array([0, 1])
        self.dim_ = X.shape[2]
        return self

    def decision_function(self, X) -> np.ndarray:
        """Similarity score in (0, 1) for each pair."""
        check_is_fitted(self, "head_")
        X = check_stack(X, 2, self.dim_)
        return H.head_forward(self.head_, X[:, 0], X[:, 1])

    def predict_proba(self, X) -> np.ndarray:
        s = self.decision_function(X)
        return np.column_stack([1.0 - s, s])

    def predict(self, X) -> np.ndarray:
        return H.predict(self.decision_function(X), self.threshold)

    def save(self, path) -> None:
        check_is_fitted(self, "head_")
        H.save_model(path, self.head_, self.threshold, self._meta())

    @classmethod
    def from_head(cls, head: H.SiameseHead, threshold: float = 0.5, **params) -> "SiameseVerifier":
        est = cls(fusion=str(head.fusion), hidden_units=head.hidden, threshold=threshold, **params)
        est.head_ = head
        est.loss_curve_ = []
        est.classes_ = np.array([0, 1])
        est.dim_ = head.dim
        return est


class TripletVerifier(_HeadParamsMixin, ClassifierMixin, BaseEstimator):
    """Tri-subject verifier mixing father-child and mother-child head scores.

    Both heads see the same child embedding and share no parameters. The
    combined score is ``lambda1 * S_FC + lambda2 * S_MC``.

    ``objective="joint"`` trains both heads at once on the mean of their two
    losses; ``"independent"`` trains each head on its own pairs.
    ``type_thresholds`` overrides ``threshold`` per triplet type when
    ``rel_types`` are passed to :meth:`predict`.
    """

    def __init__(
        self,
        fusion="sqdiff_mul",
        loss="bce",
        focal_alpha=DEFAULT_FOCAL_ALPHA,
        focal_gamma=DEFAULT_FOCAL_GAMMA,
        hidden_units=H.HIDDEN_UNITS,
        lr=0.001,
        batch_size=32,
        epochs=60,
        lambda1=H.DEFAULT_LAMBDAS[0],
        lambda2=H.DEFAULT_LAMBDAS[1],
        threshold=0.5,
        type_thresholds=None,
        objective="joint",
        shuffle=True,
        random_state=0,
    ):
        self.fusion = fusion
        self.loss = loss
        self.focal_alpha = focal_alpha
        self.focal_gamma = focal_gamma
        self.hidden_units = hidden_units
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.threshold = threshold
        self.type_thresholds = type_thresholds
        self.objective = objective
        self.shuffle = shuffle
        self.random_state = random_state

    def fit(self, X, y):
        X = check_stack(X, 3)
        y = check_binary_labels(y, X.shape[0])
        config = self._train_config()
        d = X.shape[2]
        model = H.TripletModel(
            H.init_head(config.fusion, d, [self.random_state, 1], self.hidden_units),
            H.init_head(config.fusion, d, [self.random_state, 2], self.hidden_units),
            self.lambda1,
            self.lambda2,
            self.threshold,
            dict(self.type_thresholds or {}),
        )
        result = train(model, X, y, config)
        self.model_ = result.model
        self.loss_curve_ = result.loss_curve
        self.classes_ = np.array([0, 1])
        self.dim_ = d
        return self

    def head_scores(self, X) -> tuple[np.ndarray, np.ndarray]:
        """``(S_FC, S_MC)`` for each (father, mother, child) row."""
        check_is_fitted(self, "model_")
        X = check_stack(X, 3, self.dim_)
        return (
            H.head_forward(self.model_.fc_head, X[:, 0], X[:, 2]),
            H.head_forward(self.model_.mc_head, X[:, 1], X[:, 2]),
        )

    def decision_function(self, X) -> np.ndarray:
        s_fc, s_mc = self.head_scores(X)
        return H.triplet_score(s_fc, s_mc, self.lambda1, self.lambda2)

    def predict_proba(self, X) -> np.ndarray:
        s = np.clip(self.decision_function(X), 0.0, 1.0)
        return np.column_stack([1.0 - s, s])

    def thresholds_for(self, rel_types=None):
        if rel_types is None or not self.type_thresholds:
            return self.threshold
        per = self.type_thresholds
        return np.array([per.get(r, self.threshold) for r in np.asarray(rel_types).tolist()])

    def predict(self, X, rel_types=None) -> np.ndarray:
        score = self.decision_function(X)
        return (score > self.thresholds_for(rel_types)).astype(np.int64)

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        model = H.TripletModel(
            self.model_.fc_head, self.model_.mc_head, self.lambda1, self.lambda2,
            self.threshold, dict(self.type_thresholds or {}),
        )
        H.save_model(path, model, self.threshold, self._meta())

    @classmethod
    def from_model(cls, model: H.TripletModel, **params) -> "TripletVerifier":
        est = cls(
            fusion=str(model.fusion), hidden_units=model.fc_head.hidden,
            lambda1=model.lambda1, lambda2=model.lambda2, threshold=model.t,
            type_thresholds=dict(model.type_thresholds) or None, **params,
        )
        est.model_ = model
        est.loss_curve_ = []
        est.classes_ = np.array([0, 1])
        est.dim_ = model.dim
        return est


def _is_fitted(est) -> bool:
    try:
        check_is_fitted(est)
    except NotFittedError:
        return False
    return True


class JuryVerifier(ClassifierMixin, BaseEstimator):
    """Ensemble that trusts ``major`` outside ``[t_low, t_high]``.

    Inside the band the mean score of all members (major included) is
    compared with ``t_median``; an exact tie predicts 1. Unfitted members are
    cloned and fitted in :meth:`fit`; fitted ones are used as they are.
    """

    def __init__(self, major=None, auxiliaries=(), t_low=DEFAULT_T_LOW,
                 t_median=DEFAULT_T_MEDIAN, t_high=DEFAULT_T_HIGH):
        self.major = major
        self.auxiliaries = auxiliaries
        self.t_low = t_low
        self.t_median = t_median
        self.t_high = t_high

    def _check_config(self):
        validate_thresholds(self.t_low, self.t_median, self.t_high)
        if self.major is None:
            raise ConfigError("a jury needs a major model")
        if len(self.auxiliaries) == 0:
            raise ConfigError("a jury needs at least one auxiliary model")

    def fit(self, X, y):
        self._check_config()
        members = [self.major, *self.auxiliaries]
        fitted = [m if _is_fitted(m) else clone(m).fit(X, y) for m in members]
        self.major_, self.auxiliaries_ = fitted[0], fitted[1:]
        self.classes_ = np.array([0, 1])
        return self

    def member_scores(self, X) -> np.ndarray:
        """Scores of shape (n_models, n_samples), major first."""
        if not hasattr(self, "major_"):
            self._check_config()
            if not all(_is_fitted(m) for m in [self.major, *self.auxiliaries]):
                raise NotFittedError("jury members must be fitted; call fit first")
            self.major_, self.auxiliaries_ = self.major, list(self.auxiliaries)
            self.classes_ = np.array([0, 1])
        return np.array([m.decision_function(X) for m in [self.major_, *self.auxiliaries_]])

    def predict(self, X) -> np.ndarray:
        scores = self.member_scores(X)
        return jury_predict_batch(scores[0], scores[1:], self.t_low, self.t_median, self.t_high)
